#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "airrag/text.hpp"
#include "airrag/types.hpp"

namespace airrag::clients {

/// Per-client call counters. Shared across concurrent searches.
struct ClientStats {
  std::atomic<std::int64_t> requests{0};
  std::atomic<std::int64_t> retries{0};
  std::atomic<std::int64_t> failures{0};
  std::atomic<std::int64_t> tokens_in{0};
  std::atomic<std::int64_t> tokens_out{0};
};

/// Chat-completion backend. Implementations must be safe to share across
/// concurrent searches; each call is independent.
class ChatClient {
 public:
  virtual ~ChatClient() = default;

  /// Returns up to sampling.n sequences (exactly n for scripted backends).
  virtual std::vector<Generation> generate(const GenerationRequest& req) = 0;

  virtual const ClientStats& stats() const = 0;
};

class RetrieverClient {
 public:
  virtual ~RetrieverClient() = default;

  /// At most k docs, descending score, ties stable by doc_id.
  virtual std::vector<RetrievedDoc> retrieve(const std::string& query, int k) = 0;
};

class EmbeddingClient {
 public:
  virtual ~EmbeddingClient() = default;

  /// One vector per input, order preserving, constant dimensionality.
  virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
};

/// The client bundle a search runs against.
struct ClientSet {
  std::shared_ptr<ChatClient> chat;
  std::shared_ptr<RetrieverClient> retriever;
  std::shared_ptr<EmbeddingClient> embedder;
};

// ---------------------------------------------------------------------------
// In-memory token-overlap retriever
// ---------------------------------------------------------------------------

/// Scores documents by word-overlap with the query. Deterministic: ties are
/// broken by doc_id. Suitable for tests and small corpora; not an index.
class InMemoryRetriever : public RetrieverClient {
 public:
  InMemoryRetriever() = default;
  explicit InMemoryRetriever(std::vector<RetrievedDoc> docs) {
    for (auto& d : docs) add(std::move(d.doc_id), std::move(d.content));
  }

  void add(std::string doc_id, std::string content) {
    word_sets_.push_back(text::word_set(content));
    docs_.push_back({std::move(doc_id), std::move(content), 0.0});
  }

  std::size_t size() const { return docs_.size(); }
  const std::vector<RetrievedDoc>& docs() const { return docs_; }

  std::vector<RetrievedDoc> retrieve(const std::string& query, int k) override {
    if (k < 1) throw ClientError("retrieve: k must be >= 1");
    auto qset = text::word_set(query);
    std::vector<RetrievedDoc> scored;
    scored.reserve(docs_.size());
    for (std::size_t i = 0; i < docs_.size(); ++i) {
      int overlap = 0;
      for (const auto& w : qset)
        if (word_sets_[i].count(w)) ++overlap;
      if (overlap == 0) continue;
      scored.push_back({docs_[i].doc_id, docs_[i].content, static_cast<double>(overlap)});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const RetrievedDoc& a, const RetrievedDoc& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.doc_id < b.doc_id;
    });
    if (static_cast<int>(scored.size()) > k) scored.resize(static_cast<std::size_t>(k));
    return scored;
  }

 private:
  std::vector<RetrievedDoc> docs_;
  std::vector<std::set<std::string>> word_sets_;
};

/// Corpus file format: one document per line, "doc_id<TAB>text".
inline std::vector<RetrievedDoc> load_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus file: " + path);
  std::vector<RetrievedDoc> docs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ConfigError("corpus line missing tab separator: " + text::truncate(line, 60));
    docs.push_back({line.substr(0, tab), line.substr(tab + 1), 0.0});
  }
  return docs;
}

// ---------------------------------------------------------------------------
// Scripted hashing embedder
// ---------------------------------------------------------------------------

/// Deterministic embedder: each word unigram/bigram hashes to a signed
/// hyperplane vector; the text embedding is the normalized sum. Pure
/// function of (text, seed), byte-identical across runs.
class HashingEmbedder : public EmbeddingClient {
 public:
  explicit HashingEmbedder(std::uint64_t seed = 17, int dim = 64) : seed_(seed), dim_(dim) {}

  int dimension() const { return dim_; }

  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override {
    if (texts.empty()) throw ClientError("embed: empty input list");
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
  }

  EmbeddingVector embed_one(const std::string& t) const {
    std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
    auto words = text::split_words(text::normalize_words(t));
    auto add_gram = [&](const std::string& g) {
      std::uint64_t h = text::fnv1a(g) ^ seed_;
      for (int i = 0; i < dim_; ++i) {
        h = text::mix64(h + static_cast<std::uint64_t>(i) * 0x9e3779b97f4a7c15ull);
        v[static_cast<std::size_t>(i)] += (h & 1) ? 1.0 : -1.0;
      }
    };
    for (std::size_t i = 0; i < words.size(); ++i) {
      add_gram(words[i]);
      if (i + 1 < words.size()) add_gram(words[i] + " " + words[i + 1]);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (double& x : v) x /= norm;
    EmbeddingVector e;
    e.values = std::move(v);
    e.norm = norm > 0.0 ? 1.0 : 0.0;
    return e;
  }

 private:
  std::uint64_t seed_;
  int dim_;
};

/// Cosine with zero-vector conventions: cos(0,0)=1, cos(0,x)=0.
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.norm == 0.0 && b.norm == 0.0) return 1.0;
  if (a.norm == 0.0 || b.norm == 0.0) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  std::size_t n = std::min(a.values.size(), b.values.size());
  for (std::size_t i = 0; i < n; ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return na == nb ? 1.0 : 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace airrag::clients
