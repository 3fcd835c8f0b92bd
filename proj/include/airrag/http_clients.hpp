#pragma once

#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "airrag/clients.hpp"
#include "airrag/text.hpp"
#include "airrag/types.hpp"

namespace airrag::clients {

/// Config keys for the HTTP backends. The api key is read from the named
/// environment variable, never from the config file itself.
struct HttpClientConfig {
  std::string base_url = "http://127.0.0.1:8080";
  std::string api_key_env;
  std::string model;
  double timeout_seconds = 30.0;
  int max_retries = 3;
  int backoff_base_ms = 200;
  int backoff_cap_ms = 5000;
};

namespace detail {

inline bool retryable_status(int status) {
  return status == 408 || status == 429 || (status >= 500 && status < 600);
}

inline int backoff_ms(const HttpClientConfig& cfg, int attempt) {
  long long ms = cfg.backoff_base_ms;
  for (int i = 0; i < attempt; ++i) ms *= 2;
  if (ms > cfg.backoff_cap_ms) ms = cfg.backoff_cap_ms;
  return static_cast<int>(ms);
}

class HttpBase {
 public:
  explicit HttpBase(HttpClientConfig config) : config_(std::move(config)) {
    client_ = std::make_unique<httplib::Client>(config_.base_url);
    auto timeout = std::chrono::milliseconds(static_cast<long>(config_.timeout_seconds * 1000.0));
    client_->set_connection_timeout(timeout);
    client_->set_read_timeout(timeout);
    client_->set_write_timeout(timeout);
    if (!config_.api_key_env.empty()) {
      const char* key = std::getenv(config_.api_key_env.c_str());
      if (key != nullptr && *key != '\0')
        client_->set_default_headers({{"Authorization", std::string("Bearer ") + key}});
    }
  }

  /// POST with bounded exponential backoff. Transport errors, retryable
  /// statuses (408/429/5xx) and unparseable bodies are retried up to
  /// max_retries; other failures surface immediately. A response that
  /// parses is never retried, even if incomplete.
  nlohmann::json post_json(const std::string& path, const nlohmann::json& body,
                           ClientStats& stats) {
    std::string payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) {
        stats.retries += 1;
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms(config_, attempt - 1)));
      }
      stats.requests += 1;
      auto res = client_->Post(path, payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) {
        nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
        if (parsed.is_discarded()) {
          last_error = "malformed response body";
          continue;
        }
        return parsed;
      }
      if (retryable_status(res->status)) {
        last_error = "http status " + std::to_string(res->status);
        continue;
      }
      stats.failures += 1;
      throw ClientError("http status " + std::to_string(res->status) + " from " + path);
    }
    stats.failures += 1;
    throw ClientError(path + " failed after " + std::to_string(config_.max_retries + 1) +
                      " attempts: " + last_error);
  }

 protected:
  HttpClientConfig config_;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace detail

/// Chat-completions-style JSON backend. Any hosted model with this wire
/// shape plugs in via base_url + model name.
class HttpChatClient : public ChatClient, private detail::HttpBase {
 public:
  explicit HttpChatClient(HttpClientConfig config) : HttpBase(std::move(config)) {}

  std::vector<Generation> generate(const GenerationRequest& req) override {
    if (req.prompt.empty()) throw ClientError("generate: prompt must be nonempty");
    if (req.sampling.n < 1) throw ClientError("generate: sampling.n must be >= 1");
    nlohmann::json body{
        {"model", config_.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", req.prompt}}})},
        {"n", req.sampling.n},
        {"temperature", req.sampling.temperature},
        {"top_p", req.sampling.top_p},
        {"top_k", req.sampling.top_k},
    };
    if (!req.stop.empty()) body["stop"] = req.stop;

    nlohmann::json res = post_json("/chat/completions", body, stats_);
    if (!res.contains("choices") || !res["choices"].is_array() || res["choices"].empty())
      throw ClientError("chat response missing choices");

    int prompt_tokens = 0;
    if (res.contains("usage") && res["usage"].contains("prompt_tokens"))
      prompt_tokens = res["usage"]["prompt_tokens"].get<int>();

    std::vector<Generation> out;
    for (const auto& choice : res["choices"]) {
      if (static_cast<int>(out.size()) >= req.sampling.n) break;
      std::string content;
      if (choice.contains("message") && choice["message"].contains("content") &&
          choice["message"]["content"].is_string())
        content = choice["message"]["content"].get<std::string>();
      Generation g;
      g.text = content;
      // Prompt tokens are a per-call cost; attribute them to the first
      // sequence so budget reconciliation sees them once.
      g.tokens_in = out.empty() ? prompt_tokens : 0;
      g.tokens_out = text::count_tokens(content);
      stats_.tokens_out += g.tokens_out;
      out.push_back(std::move(g));
    }
    stats_.tokens_in += prompt_tokens;
    return out;
  }

  const ClientStats& stats() const override { return stats_; }

 private:
  ClientStats stats_;
};

class HttpEmbeddingClient : public EmbeddingClient, private detail::HttpBase {
 public:
  explicit HttpEmbeddingClient(HttpClientConfig config) : HttpBase(std::move(config)) {}

  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override {
    if (texts.empty()) throw ClientError("embed: empty input list");
    nlohmann::json body{{"model", config_.model}, {"input", texts}};
    nlohmann::json res = post_json("/embeddings", body, stats_);
    if (!res.contains("data") || !res["data"].is_array() || res["data"].size() != texts.size())
      throw ClientError("embedding response shape mismatch");
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& item : res["data"]) {
      EmbeddingVector v;
      v.values = item.at("embedding").get<std::vector<double>>();
      double norm = 0.0;
      for (double x : v.values) norm += x * x;
      v.norm = std::sqrt(norm);
      out.push_back(std::move(v));
    }
    return out;
  }

  const ClientStats& stats() const { return stats_; }

 private:
  ClientStats stats_;
};

class HttpRetrieverClient : public RetrieverClient, private detail::HttpBase {
 public:
  explicit HttpRetrieverClient(HttpClientConfig config) : HttpBase(std::move(config)) {}

  std::vector<RetrievedDoc> retrieve(const std::string& query, int k) override {
    if (k < 1) throw ClientError("retrieve: k must be >= 1");
    nlohmann::json body{{"query", query}, {"k", k}};
    nlohmann::json res = post_json("/retrieve", body, stats_);
    if (!res.contains("docs") || !res["docs"].is_array())
      throw ClientError("retrieve response missing docs");
    std::vector<RetrievedDoc> out;
    std::set<std::string> seen;
    for (const auto& d : res["docs"]) {
      RetrievedDoc doc{d.at("doc_id").get<std::string>(), d.at("content").get<std::string>(),
                       d.value("score", 0.0)};
      if (doc.content.empty()) continue;
      if (!seen.insert(doc.doc_id).second) continue;
      out.push_back(std::move(doc));
    }
    std::stable_sort(out.begin(), out.end(), [](const RetrievedDoc& a, const RetrievedDoc& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.doc_id < b.doc_id;
    });
    if (static_cast<int>(out.size()) > k) out.resize(static_cast<std::size_t>(k));
    return out;
  }

  const ClientStats& stats() const { return stats_; }

 private:
  ClientStats stats_;
};

}  // namespace airrag::clients
