#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "airrag/actions.hpp"
#include "airrag/clients.hpp"
#include "airrag/metrics.hpp"
#include "airrag/text.hpp"
#include "airrag/types.hpp"

namespace airrag::simenv {

struct Relation {
  std::string subject;
  std::string predicate;
  std::string object;
};

struct WorldQuestion {
  eval::QASample sample;
  int hop_count = 0;
  /// Indices into World::relations, in hop order.
  std::vector<int> gold_chain;
  std::string norm_text;  // cached normalized question text
};

/// Deterministic synthetic multi-hop QA world: entity-relation chains
/// rendered into a document corpus, template questions with known gold
/// answers. Immutable after generation.
struct World {
  std::uint64_t seed = 0;
  std::vector<std::string> entities;
  std::vector<Relation> relations;
  std::vector<RetrievedDoc> docs;
  std::vector<WorldQuestion> questions;

  const WorldQuestion* find_question(const std::string& question_text) const {
    std::string norm = text::normalize_words(question_text);
    for (const auto& q : questions)
      if (q.norm_text == norm) return &q;
    return nullptr;
  }

  const WorldQuestion* find_question_by_id(const std::string& id) const {
    for (const auto& q : questions)
      if (q.sample.id == id) return &q;
    return nullptr;
  }

  std::string terminal_entity(const WorldQuestion& q) const {
    return relations.at(static_cast<std::size_t>(q.gold_chain.back())).object;
  }
};

// ---------------------------------------------------------------------------
// Query grammar
// ---------------------------------------------------------------------------

/// "What is the <p_h> of the <p_h-1> of ... the <p_1> of <entity>?"
/// Predicates are given in hop order (innermost first).
inline std::string build_query(const std::vector<std::string>& predicates, const std::string& entity) {
  std::string t = entity;
  for (const auto& p : predicates) t = "the " + p + " of " + t;
  return "What is " + t + "?";
}

namespace detail {

struct ParsedChain {
  bool ok = false;
  std::vector<std::string> predicates;  // normalized, hop order
  std::string start_norm;
  std::string start_verbatim;
};

inline std::vector<std::string> split_on(const std::string& s, const std::string& sep) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = s.find(sep, pos);
    if (next == std::string::npos) {
      parts.push_back(s.substr(pos));
      break;
    }
    parts.push_back(s.substr(pos, next - pos));
    pos = next + sep.size();
  }
  return parts;
}

/// Parses a templated query into its predicate chain and start entity.
inline ParsedChain parse_query(const std::string& query, const World& world) {
  ParsedChain chain;
  // Known world questions carry their chain explicitly; arbitrary question
  // phrasings are supported that way.
  if (const WorldQuestion* wq = world.find_question(query)) {
    chain.ok = true;
    for (int idx : wq->gold_chain)
      chain.predicates.push_back(text::normalize_words(world.relations.at(static_cast<std::size_t>(idx)).predicate));
    chain.start_verbatim = world.relations.at(static_cast<std::size_t>(wq->gold_chain.front())).subject;
    chain.start_norm = text::normalize_words(chain.start_verbatim);
    return chain;
  }
  std::string norm = text::normalize_words(query);
  auto segments = split_on(norm, " of ");
  if (segments.size() < 2) return chain;
  for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
    auto words = text::split_words(segments[i]);
    if (words.empty()) return chain;
    chain.predicates.push_back(words.back());
  }
  // Outermost predicate comes first in the text; hop order is the reverse.
  std::reverse(chain.predicates.begin(), chain.predicates.end());
  chain.start_norm = text::trim(segments.back());
  if (chain.start_norm.empty()) return chain;
  chain.start_verbatim = chain.start_norm;
  for (const auto& e : world.entities)
    if (text::normalize_words(e) == chain.start_norm) {
      chain.start_verbatim = e;
      break;
    }
  chain.ok = true;
  return chain;
}

struct Resolution {
  std::size_t resolved = 0;
  std::string current_norm;
  std::string current_verbatim;
};

/// Walks the chain through answered (query, answer) pairs: hop i counts as
/// resolved when some pair's query mentions "<p_i> of <current>" and its
/// answer is a real entity (not "unknown").
inline Resolution resolve_through_pairs(const ParsedChain& chain,
                                        const std::vector<std::pair<std::string, std::string>>& pairs) {
  Resolution r;
  r.current_norm = chain.start_norm;
  r.current_verbatim = chain.start_verbatim;
  for (const auto& pred : chain.predicates) {
    std::string needle = pred + " of " + r.current_norm;
    bool found = false;
    for (const auto& [q, a] : pairs) {
      if (actions::is_unknown_answer(a)) continue;
      if (text::contains(text::normalize_words(q), needle)) {
        r.current_verbatim = text::trim(a);
        r.current_norm = text::normalize_words(a);
        found = true;
        break;
      }
    }
    if (!found) break;
    r.resolved += 1;
  }
  return r;
}

/// Parses a corpus line of the form "The <p> of <S> is <O>.".
inline bool parse_doc_line(const std::string& line, std::string& pred, std::string& subj,
                           std::string& obj) {
  std::string s = text::trim(line);
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s.size() < 4 || text::to_lower(s.substr(0, 4)) != "the ") return false;
  std::size_t of_pos = s.find(" of ");
  if (of_pos == std::string::npos) return false;
  std::size_t is_pos = s.rfind(" is ");
  if (is_pos == std::string::npos || is_pos <= of_pos) return false;
  pred = text::normalize_words(s.substr(4, of_pos - 4));
  subj = text::normalize_words(s.substr(of_pos + 4, is_pos - of_pos - 4));
  obj = text::trim(s.substr(is_pos + 4));
  return !pred.empty() && !subj.empty() && !obj.empty();
}

inline const std::vector<std::string>& name_syllables() {
  static const std::vector<std::string> syl = {"ba", "cre", "din", "fo",  "gu",  "han", "ji",  "kel",
                                               "lor", "mun", "nev", "ol", "pra", "qui", "rov", "sa",
                                               "tur", "ul",  "vim", "wex", "yo",  "zan"};
  return syl;
}

inline const std::vector<std::string>& predicate_pool() {
  static const std::vector<std::string> preds = {
      "mouth",    "capital",  "founder", "director",  "successor",    "origin",  "anthem",
      "emblem",   "source",   "patron",  "architect", "composer",     "curator", "editor",
      "guardian", "mascot",   "motto",   "namesake",  "headquarters", "sponsor"};
  return preds;
}

inline std::string fresh_name(std::mt19937_64& rng, std::set<std::string>& used) {
  const auto& syl = name_syllables();
  for (;;) {
    std::size_t parts = 2 + rng() % 2;
    std::string name;
    for (std::size_t i = 0; i < parts; ++i) name += syl[rng() % syl.size()];
    if (!used.count(name)) {
      used.insert(name);
      return name;
    }
  }
}

inline std::string doc_id_for(std::uint64_t seed, const std::string& content, std::size_t index) {
  return "d" + text::fnv1a_hex(std::to_string(seed) + "|" + content).substr(0, 8) + "-" +
         std::to_string(index);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// World generation
// ---------------------------------------------------------------------------

struct WorldOptions {
  /// Noise documents sharing a real predicate but naming decoy entities.
  int distractors_per_relation = 0;
};

/// Deterministic in seed. Entities form chains of max_hops relations; every
/// hop count up to max_hops gets questions; each relation is mentioned by
/// exactly one corpus document.
inline World generate_world(std::uint64_t seed, int n_entities, int max_hops,
                            const WorldOptions& options = {}) {
  if (max_hops < 1 || max_hops > 4) throw ConfigError("max_hops must be in 1..4");
  if (n_entities < max_hops + 1) throw ConfigError("n_entities must be >= max_hops + 1");

  World world;
  world.seed = seed;
  std::mt19937_64 rng(seed);

  std::set<std::string> used = {"what", "is",   "the",  "of",      "unknown", "none", "identify",
                                "name", "tell", "me",   "sub",     "query",   "response",
                                "question", "context", "contexts", "history", "answer"};
  for (const auto& p : detail::predicate_pool()) used.insert(p);

  for (int i = 0; i < n_entities; ++i) world.entities.push_back(detail::fresh_name(rng, used));

  // Consecutive entity blocks become relation chains.
  int chain_len = max_hops + 1;
  std::size_t pos = 0;
  std::vector<std::pair<std::size_t, std::size_t>> chains;  // (first relation idx, hop count)
  while (pos + 1 < world.entities.size()) {
    std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(chain_len),
                                            world.entities.size() - pos);
    if (len < 2) break;
    const auto& preds = detail::predicate_pool();
    std::vector<std::size_t> chosen;
    while (chosen.size() < len - 1) {
      std::size_t p = rng() % preds.size();
      bool dup = false;
      for (auto c : chosen)
        if (c == p) dup = true;
      if (!dup) chosen.push_back(p);
    }
    std::size_t first_rel = world.relations.size();
    for (std::size_t i = 0; i + 1 < len; ++i)
      world.relations.push_back(
          {world.entities[pos + i], preds[chosen[i]], world.entities[pos + i + 1]});
    chains.emplace_back(first_rel, len - 1);
    pos += len;
  }

  for (const auto& r : world.relations) {
    std::string content = "The " + r.predicate + " of " + r.subject + " is " + r.object + ".";
    world.docs.push_back({detail::doc_id_for(seed, content, world.docs.size()), content, 0.0});
  }
  for (const auto& r : world.relations) {
    for (int d = 0; d < options.distractors_per_relation; ++d) {
      std::string fake_subject = detail::fresh_name(rng, used);
      std::string fake_object = detail::fresh_name(rng, used);
      std::string content = "The " + r.predicate + " of " + fake_subject + " is " + fake_object + ".";
      world.docs.push_back({detail::doc_id_for(seed, content, world.docs.size()), content, 0.0});
    }
  }

  for (auto [first_rel, hops] : chains) {
    for (int h = 1; h <= std::min<int>(max_hops, static_cast<int>(hops)); ++h) {
      std::size_t max_start = hops - static_cast<std::size_t>(h);
      std::size_t start = max_start == 0 ? 0 : rng() % (max_start + 1);
      WorldQuestion q;
      q.hop_count = h;
      std::vector<std::string> preds;
      for (int i = 0; i < h; ++i) {
        int rel_idx = static_cast<int>(first_rel + start) + i;
        q.gold_chain.push_back(rel_idx);
        preds.push_back(world.relations[static_cast<std::size_t>(rel_idx)].predicate);
      }
      const Relation& first = world.relations[static_cast<std::size_t>(q.gold_chain.front())];
      const Relation& last = world.relations[static_cast<std::size_t>(q.gold_chain.back())];
      q.sample.question = build_query(preds, first.subject);
      q.sample.gold_answers = {last.object};
      char id[16];
      std::snprintf(id, sizeof(id), "q%04zu", world.questions.size());
      q.sample.id = id;
      q.norm_text = text::normalize_words(q.sample.question);
      world.questions.push_back(std::move(q));
    }
  }
  return world;
}

/// Brute-force gold answer: follows the question's gold chain through the
/// relation table. Independent of any search machinery.
inline std::string oracle_answer(const eval::QASample& question, const World& world) {
  const WorldQuestion* wq = world.find_question_by_id(question.id);
  if (wq == nullptr) wq = world.find_question(question.question);
  if (wq == nullptr) throw ConfigError("question does not belong to this world: " + question.id);
  std::string current = world.relations.at(static_cast<std::size_t>(wq->gold_chain.front())).subject;
  for (int idx : wq->gold_chain) {
    const Relation& r = world.relations.at(static_cast<std::size_t>(idx));
    if (text::normalize_words(r.subject) != text::normalize_words(current))
      throw std::logic_error("broken gold chain in question " + wq->sample.id);
    current = r.object;
  }
  return current;
}

/// Extracts QA samples from a world, optionally filtered by hop count and
/// truncated to a maximum size.
inline std::vector<eval::QASample> dataset_from_world(const World& world,
                                                      const std::set<int>& hops = {},
                                                      std::size_t limit = 0) {
  std::vector<eval::QASample> out;
  for (const auto& q : world.questions) {
    if (!hops.empty() && !hops.count(q.hop_count)) continue;
    out.push_back(q.sample);
    if (limit > 0 && out.size() >= limit) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// World serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json world_to_json(const World& world) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["seed"] = world.seed;
  j["entities"] = world.entities;
  auto& rels = j["relations"] = nlohmann::ordered_json::array();
  for (const auto& r : world.relations)
    rels.push_back({{"subject", r.subject}, {"predicate", r.predicate}, {"object", r.object}});
  auto& docs = j["docs"] = nlohmann::ordered_json::array();
  for (const auto& d : world.docs) docs.push_back({{"doc_id", d.doc_id}, {"content", d.content}});
  auto& qs = j["questions"] = nlohmann::ordered_json::array();
  for (const auto& q : world.questions)
    qs.push_back({{"id", q.sample.id},
                  {"question", q.sample.question},
                  {"answers", q.sample.gold_answers},
                  {"hop_count", q.hop_count},
                  {"gold_chain", q.gold_chain}});
  return j;
}

inline World world_from_json(const nlohmann::json& j) {
  World world;
  world.seed = j.value("seed", 0ull);
  world.entities = j.at("entities").get<std::vector<std::string>>();
  for (const auto& r : j.at("relations"))
    world.relations.push_back({r.at("subject"), r.at("predicate"), r.at("object")});
  for (const auto& d : j.at("docs")) world.docs.push_back({d.at("doc_id"), d.at("content"), 0.0});
  for (const auto& q : j.at("questions")) {
    WorldQuestion wq;
    wq.sample.id = q.at("id");
    wq.sample.question = q.at("question");
    wq.sample.gold_answers = q.at("answers").get<std::vector<std::string>>();
    wq.hop_count = q.at("hop_count");
    wq.gold_chain = q.at("gold_chain").get<std::vector<int>>();
    wq.norm_text = text::normalize_words(wq.sample.question);
    world.questions.push_back(std::move(wq));
  }
  return world;
}

inline void save_world(const World& world, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write world file: " + path);
  out << world_to_json(world).dump(2) << '\n';
}

inline World load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open world file: " + path);
  nlohmann::json j;
  in >> j;
  return world_from_json(j);
}

// ---------------------------------------------------------------------------
// Scripted model
// ---------------------------------------------------------------------------

struct ScriptedModelOptions {
  /// DA answers questions up to this many hops from parametric knowledge.
  int da_hop_horizon = 2;
  /// Seed for the paraphrase noise applied to SAY/QT outputs at temperature > 0.
  std::uint64_t seed = 0;
};

/// Deterministic chat backend over a World: recognizes each prompt template
/// by its fixed header and answers from the world. RA answers from the
/// supplied contexts only and degrades to "unknown" when the needed relation
/// document is absent or ambiguous. Pure function of (prompt, sampling,
/// seed); repeated calls are byte-identical.
class ScriptedChatClient : public clients::ChatClient {
 public:
  explicit ScriptedChatClient(std::shared_ptr<const World> world, ScriptedModelOptions options = {})
      : world_(std::move(world)), options_(options) {
    const auto& t = actions::PromptTemplates::defaults();
    say_header_ = actions::PromptTemplates::header_of(t.say);
    qt_header_ = actions::PromptTemplates::header_of(t.qt);
    ra_header_ = actions::PromptTemplates::header_of(t.ra);
    sa_header_ = actions::PromptTemplates::header_of(t.sa);
  }

  std::vector<Generation> generate(const GenerationRequest& req) override {
    stats_.requests += 1;
    if (req.prompt.empty()) throw ClientError("generate: prompt must be nonempty");
    if (req.sampling.n < 1) throw ClientError("generate: sampling.n must be >= 1");

    if (text::trim(req.prompt).empty()) throw UnrecognizedTemplate("blank prompt");

    std::string base;
    bool paraphrasable = false;
    if (req.prompt.rfind(say_header_, 0) == 0) {
      base = say_output(between(req.prompt, "\nQuery: ", "\nOutput:"));
      paraphrasable = true;
    } else if (req.prompt.rfind(qt_header_, 0) == 0) {
      base = qt_output(between(req.prompt, "\nMain Query: ", "\nHistory:"),
                       parse_pairs(between(req.prompt, "\nHistory: ", "\nThis Query:")),
                       after(req.prompt, "\nThis Query: "));
      paraphrasable = true;
    } else if (req.prompt.rfind(ra_header_, 0) == 0) {
      base = ra_output(between(req.prompt, "\n", "\nQuestion: "), after(req.prompt, "\nQuestion: "));
    } else if (req.prompt.rfind(sa_header_, 0) == 0) {
      std::string question = between(req.prompt, "\nUser Query: ", "\n");
      base = sa_output(question, after(req.prompt, "\nUser Query: " + question + "\n"));
    } else {
      base = da_output(text::trim(req.prompt));
    }

    std::vector<Generation> out;
    out.reserve(static_cast<std::size_t>(req.sampling.n));
    int tokens_in = text::count_tokens(req.prompt);
    std::uint64_t variant_base =
        text::mix64(text::fnv1a(req.prompt) ^ options_.seed) % paraphrase_count();
    for (int i = 0; i < req.sampling.n; ++i) {
      std::string s = base;
      if (paraphrasable && req.sampling.temperature > 0.0)
        s = paraphrase(s, (variant_base + static_cast<std::uint64_t>(i)) % paraphrase_count());
      for (const auto& stop : req.stop) {
        std::size_t pos = s.find(stop);
        if (pos != std::string::npos) s.resize(pos);
      }
      out.push_back({s, tokens_in, text::count_tokens(s)});
      stats_.tokens_in += tokens_in;
      stats_.tokens_out += text::count_tokens(s);
    }
    return out;
  }

  const clients::ClientStats& stats() const override { return stats_; }

  const World& world() const { return *world_; }

 private:
  static std::string between(const std::string& s, const std::string& a, const std::string& b) {
    std::size_t start = s.find(a);
    if (start == std::string::npos) return {};
    start += a.size();
    std::size_t end = s.find(b, start);
    if (end == std::string::npos) return s.substr(start);
    return s.substr(start, end - start);
  }

  static std::string after(const std::string& s, const std::string& a) {
    std::size_t start = s.find(a);
    return start == std::string::npos ? std::string{} : s.substr(start + a.size());
  }

  static std::vector<std::pair<std::string, std::string>> parse_pairs(const std::string& block) {
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string query;
    for (const auto& line : text::split_lines(block)) {
      if (line.rfind("Sub-query: ", 0) == 0) {
        query = line.substr(11);
      } else if (line.rfind("Response: ", 0) == 0 && !query.empty()) {
        pairs.emplace_back(query, line.substr(10));
        query.clear();
      }
    }
    return pairs;
  }

  static std::size_t paraphrase_count() { return 4; }

  static std::string paraphrase(const std::string& s, std::uint64_t variant) {
    static const std::vector<std::string> prefixes = {"What is the", "Identify the", "Name the",
                                                      "Tell me the"};
    if (variant == 0) return s;
    std::string out;
    for (const auto& line : text::split_lines(s)) {
      std::string l = line;
      if (l.rfind("What is the", 0) == 0) l = prefixes[variant] + l.substr(11);
      if (!out.empty()) out.push_back('\n');
      out += l;
    }
    return out;
  }

  /// SAY: decompose a multi-hop question into one sub-query per hop, each in
  /// the original unresolved phrasing; single-hop questions need none.
  std::string say_output(const std::string& question) const {
    const WorldQuestion* wq = world_->find_question(question);
    if (wq == nullptr || wq->hop_count <= 1) return "None";
    std::vector<std::string> preds;
    std::string lines;
    const std::string& start =
        world_->relations.at(static_cast<std::size_t>(wq->gold_chain.front())).subject;
    for (int idx : wq->gold_chain) {
      preds.push_back(world_->relations.at(static_cast<std::size_t>(idx)).predicate);
      if (!lines.empty()) lines.push_back('\n');
      lines += build_query(preds, start);
    }
    return lines;
  }

  /// QT: emit the next single answerable question toward resolving this
  /// query, substituting intermediate entities from the history; "None" when
  /// the query is already resolved or already asks the right thing.
  std::string qt_output(const std::string& main_query,
                        const std::vector<std::pair<std::string, std::string>>& pairs,
                        const std::string& this_query) const {
    auto chain = detail::parse_query(this_query, *world_);
    if (!chain.ok) chain = detail::parse_query(main_query, *world_);
    if (!chain.ok) return "None";
    auto res = detail::resolve_through_pairs(chain, pairs);
    if (res.resolved >= chain.predicates.size()) return "None";
    const std::string& next_pred = chain.predicates[res.resolved];
    std::string needed = next_pred + " of " + res.current_norm;
    // A single-hop query that already names the needed subject requires no
    // transformation; nested queries always get a follow-up.
    if (chain.predicates.size() == 1 && text::contains(text::normalize_words(this_query), needed))
      return "None";
    return build_query({next_pred}, res.current_verbatim);
  }

  /// RA: resolve the question's chain strictly through the supplied context
  /// documents; any missing or ambiguous hop yields "unknown".
  std::string ra_output(const std::string& contexts, const std::string& question) const {
    auto chain = detail::parse_query(question, *world_);
    if (!chain.ok) return "unknown";
    std::map<std::pair<std::string, std::string>, std::set<std::string>> facts;
    for (const auto& line : text::split_lines(contexts)) {
      std::string pred, subj, obj;
      if (detail::parse_doc_line(line, pred, subj, obj)) facts[{pred, subj}].insert(obj);
    }
    std::string current_norm = chain.start_norm;
    std::string current = chain.start_verbatim;
    for (const auto& pred : chain.predicates) {
      auto it = facts.find({pred, current_norm});
      if (it == facts.end() || it->second.size() != 1) return "unknown";
      current = *it->second.begin();
      current_norm = text::normalize_words(current);
    }
    return current;
  }

  /// SA: return the chain's terminal entity when the history or contexts
  /// mention it, else "unknown".
  std::string sa_output(const std::string& question, const std::string& searchable) const {
    const WorldQuestion* wq = world_->find_question(question);
    if (wq == nullptr) return "unknown";
    std::string entity = world_->terminal_entity(*wq);
    if (text::contains(text::normalize_words(searchable), text::normalize_words(entity)))
      return entity;
    return "unknown";
  }

  /// DA: parametric knowledge covers shallow questions only.
  std::string da_output(const std::string& question) const {
    const WorldQuestion* wq = world_->find_question(question);
    if (wq == nullptr || wq->hop_count > options_.da_hop_horizon) return "unknown";
    return world_->terminal_entity(*wq);
  }

  std::shared_ptr<const World> world_;
  ScriptedModelOptions options_;
  clients::ClientStats stats_;
  std::string say_header_, qt_header_, ra_header_, sa_header_;
};

/// Client bundle for a scripted world: scripted chat, token-overlap
/// retrieval over the world corpus, hashing embedder.
inline clients::ClientSet make_world_clients(std::shared_ptr<const World> world,
                                             ScriptedModelOptions options = {}) {
  clients::ClientSet cs;
  cs.retriever = std::make_shared<clients::InMemoryRetriever>(world->docs);
  cs.chat = std::make_shared<ScriptedChatClient>(world, options);
  cs.embedder = std::make_shared<clients::HashingEmbedder>(options.seed ^ 0x5eedull);
  return cs;
}

}  // namespace airrag::simenv
