#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "airrag/clients.hpp"
#include "airrag/metrics.hpp"
#include "airrag/text.hpp"
#include "airrag/tree.hpp"
#include "airrag/types.hpp"

namespace airrag::verify {

enum class VerificationMethod { jcd, emb, sa_refine, reward_model, average };

inline const char* method_name(VerificationMethod m) {
  switch (m) {
    case VerificationMethod::jcd: return "jcd";
    case VerificationMethod::emb: return "emb";
    case VerificationMethod::sa_refine: return "sa_refine";
    case VerificationMethod::reward_model: return "reward_model";
    case VerificationMethod::average: return "average";
  }
  return "?";
}

inline std::optional<VerificationMethod> method_from_name(const std::string& s) {
  if (s == "jcd") return VerificationMethod::jcd;
  if (s == "emb") return VerificationMethod::emb;
  if (s == "sa_refine") return VerificationMethod::sa_refine;
  if (s == "reward_model") return VerificationMethod::reward_model;
  if (s == "average") return VerificationMethod::average;
  return std::nullopt;
}

struct CandidateAnswer {
  int trajectory_id = 0;
  std::string answer_text;
  std::optional<double> jcd;
  std::optional<double> emb;
  std::optional<double> rm;
  double reward = 0.0;
};

// ---------------------------------------------------------------------------
// Self-consistency scores
// ---------------------------------------------------------------------------

namespace detail {

/// Jaccard over word sets with the empty-set conventions J(0,0)=1, J(0,X)=0.
inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& w : a)
    if (b.count(w)) ++inter;
  std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace detail

/// Mean pairwise word-set Jaccard similarity per answer, self-term included.
inline std::vector<double> jcd_scores(const std::vector<std::string>& answers) {
  if (answers.empty()) throw ConfigError("jcd_scores: empty answer list");
  std::vector<std::set<std::string>> sets;
  sets.reserve(answers.size());
  for (const auto& a : answers) sets.push_back(text::word_set(a));
  std::size_t n = answers.size();
  std::vector<double> scores(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += detail::jaccard(sets[i], sets[j]);
    scores[i] = sum / static_cast<double>(n);
  }
  return scores;
}

/// Mean pairwise embedding cosine per answer, self-term included.
inline std::vector<double> emb_scores(const std::vector<std::string>& answers,
                                      clients::EmbeddingClient& embedder) {
  if (answers.empty()) throw ConfigError("emb_scores: empty answer list");
  auto vectors = embedder.embed(answers);
  std::size_t n = answers.size();
  std::vector<double> scores(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += clients::cosine(vectors[i], vectors[j]);
    scores[i] = sum / static_cast<double>(n);
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Leaf rewards
// ---------------------------------------------------------------------------

/// Rewards for the answer group of one terminal expansion: a single answer
/// earns 1.0; larger groups earn their consistency scores, so agreeing
/// answers are reinforced like a weighted vote.
inline std::vector<double> leaf_reward(const std::vector<std::string>& answers_at_leaf, int n_all) {
  if (static_cast<int>(answers_at_leaf.size()) != n_all)
    throw ConfigError("leaf_reward: answer list length must equal n_all");
  if (n_all == 1) return {1.0};
  return jcd_scores(answers_at_leaf);
}

/// Synthesis-time reward: coverage of a gold answer (gold must be known).
inline double training_reward(const std::string& answer, const std::vector<std::string>& gold) {
  if (gold.empty()) throw ConfigError("training_reward: gold answers required");
  return eval::accuracy_covered(answer, gold) ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------
// Reward-model scorer interface
// ---------------------------------------------------------------------------

/// Pluggable trajectory scorer. The shipped default is a heuristic, not a
/// trained reward model: the mean Monte Carlo value (q/visits) of the
/// trajectory's non-root nodes.
using RewardScorer = std::function<double(const tree::Trajectory&, const tree::Tree&)>;

inline double rm_score(const tree::Trajectory& trajectory, const tree::Tree& t) {
  double sum = 0.0;
  int count = 0;
  for (int id : trajectory.node_ids) {
    const tree::TreeNode& n = t.at(id);
    if (n.parent == -1) continue;
    if (n.visits > 0) {
      sum += n.q_value / static_cast<double>(n.visits);
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

inline RewardScorer default_reward_scorer() {
  return [](const tree::Trajectory& traj, const tree::Tree& t) { return rm_score(traj, t); };
}

// ---------------------------------------------------------------------------
// Answer selection
// ---------------------------------------------------------------------------

/// Summary-answer refinement: renders the SA template with the candidate
/// answers as contexts and returns the model's answer verbatim. Empty
/// candidates are filtered before prompting.
inline std::string sa_refine(const std::vector<std::string>& candidates, const std::string& question,
                             const std::string& history, const clients::ClientSet& cs,
                             const actions::ActionConfig& config = actions::ActionConfig{}) {
  if (candidates.empty()) throw ConfigError("sa_refine: at least one candidate required");
  std::vector<RetrievedDoc> docs;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (text::trim(candidates[i]).empty()) continue;
    docs.push_back({"candidate-" + std::to_string(i), candidates[i], 0.0});
  }
  if (docs.empty()) return {};
  ReasoningState state;
  state.question = question;
  if (!history.empty()) state.answered.emplace_back(question, history);
  std::string prompt = actions::render_prompt(ActionKind::SA, state, docs, question, config);
  SamplingPolicy policy;
  policy.n = 1;
  policy.temperature = 0.0;
  auto outputs = cs.chat->generate({prompt, policy, {}});
  return outputs.empty() ? std::string{} : outputs.front().text;
}

struct SelectionOptions {
  std::uint64_t seed = 0;
  actions::ActionConfig action_config;
};

/// Picks the final answer from the candidate set.
///
/// jcd/emb/reward_model take the argmax of the respective score (ties keep
/// the first trajectory id). sa_refine asks the model to merge the
/// candidates. average draws a uniform-random candidate under the fixed
/// seed; batch evaluation treats the method as score-every-candidate
/// instead (see eval::evaluate).
inline std::pair<std::string, double> select_answer(const std::vector<CandidateAnswer>& candidates,
                                                    VerificationMethod method,
                                                    const std::string& question,
                                                    const clients::ClientSet& cs,
                                                    const SelectionOptions& options = {}) {
  if (candidates.empty()) throw ConfigError("select_answer: empty candidate list");

  auto argmax = [&](auto getter, const char* name) -> std::pair<std::string, double> {
    const CandidateAnswer* best = nullptr;
    for (const auto& c : candidates) {
      auto v = getter(c);
      if (!v.has_value())
        throw MissingScore(std::string("candidate missing required score: ") + name);
      if (best == nullptr || *v > *getter(*best)) best = &c;
    }
    return {best->answer_text, *getter(*best)};
  };

  switch (method) {
    case VerificationMethod::jcd:
      return argmax([](const CandidateAnswer& c) { return c.jcd; }, "jcd");
    case VerificationMethod::emb:
      return argmax([](const CandidateAnswer& c) { return c.emb; }, "emb");
    case VerificationMethod::reward_model:
      return argmax([](const CandidateAnswer& c) { return c.rm; }, "rm");
    case VerificationMethod::average: {
      std::mt19937_64 rng(options.seed);
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      const auto& chosen = candidates[pick(rng)];
      return {chosen.answer_text, 0.0};
    }
    case VerificationMethod::sa_refine: {
      std::vector<std::string> texts;
      texts.reserve(candidates.size());
      for (const auto& c : candidates) texts.push_back(c.answer_text);
      return {sa_refine(texts, question, {}, cs, options.action_config), 0.0};
    }
  }
  throw TreeError("unreachable verification method");
}

inline std::vector<CandidateAnswer> candidates_from_trajectories(
    const std::vector<tree::Trajectory>& trajectories) {
  std::vector<CandidateAnswer> out;
  out.reserve(trajectories.size());
  for (const auto& t : trajectories) {
    CandidateAnswer c;
    c.trajectory_id = t.id;
    c.answer_text = t.answer;
    c.reward = t.leaf_reward;
    if (auto it = t.scores.find("jcd"); it != t.scores.end()) c.jcd = it->second;
    if (auto it = t.scores.find("emb"); it != t.scores.end()) c.emb = it->second;
    if (auto it = t.scores.find("rm"); it != t.scores.end()) c.rm = it->second;
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Verify-layer factories
// ---------------------------------------------------------------------------

namespace detail {

inline void annotate_trajectories(std::vector<tree::Trajectory>& trajs, const tree::Tree& t,
                                  const clients::ClientSet& cs, const RewardScorer& scorer) {
  if (trajs.empty()) return;
  std::vector<std::string> answers;
  answers.reserve(trajs.size());
  for (const auto& tr : trajs) answers.push_back(tr.answer);
  auto jcd = jcd_scores(answers);
  for (std::size_t i = 0; i < trajs.size(); ++i) trajs[i].scores["jcd"] = jcd[i];
  if (cs.embedder) {
    auto emb = emb_scores(answers, *cs.embedder);
    for (std::size_t i = 0; i < trajs.size(); ++i) trajs[i].scores["emb"] = emb[i];
  }
  for (auto& tr : trajs) tr.scores["rm"] = scorer(tr, t);
}

}  // namespace detail

/// Inference-time verify layer: consistency leaf rewards plus jcd/emb/rm
/// score annotation.
inline tree::VerifyLayer make_consistency_verify_layer(clients::ClientSet cs,
                                                       RewardScorer scorer = default_reward_scorer()) {
  tree::VerifyLayer v;
  v.group_reward = [](const std::vector<std::string>& answers) {
    return leaf_reward(answers, static_cast<int>(answers.size()));
  };
  v.annotate = [cs = std::move(cs), scorer = std::move(scorer)](std::vector<tree::Trajectory>& trajs,
                                                                const tree::Tree& t) {
    detail::annotate_trajectories(trajs, t, cs, scorer);
  };
  return v;
}

/// Synthesis-time verify layer: leaf rewards are gold-answer coverage.
inline tree::VerifyLayer make_training_verify_layer(std::vector<std::string> gold,
                                                    clients::ClientSet cs,
                                                    RewardScorer scorer = default_reward_scorer()) {
  tree::VerifyLayer v;
  v.group_reward = [gold = std::move(gold)](const std::vector<std::string>& answers) {
    std::vector<double> rewards;
    rewards.reserve(answers.size());
    for (const auto& a : answers) rewards.push_back(training_reward(a, gold));
    return rewards;
  };
  v.annotate = [cs = std::move(cs), scorer = std::move(scorer)](std::vector<tree::Trajectory>& trajs,
                                                                const tree::Tree& t) {
    detail::annotate_trajectories(trajs, t, cs, scorer);
  };
  return v;
}

// ---------------------------------------------------------------------------
// Reward-data export
// ---------------------------------------------------------------------------

/// Writes one line-delimited record per trajectory: the step list, the final
/// answer, its correctness label against gold, and the Monte Carlo value
/// estimate (q/visits) of every node on the path. Returns the record count.
inline int export_synthesis_data(const tree::Tree& t, const std::vector<tree::Trajectory>& trajs,
                                 const std::vector<std::string>& gold, std::ostream& sink,
                                 const std::string& question_id = {}) {
  int count = 0;
  for (const auto& traj : trajs) {
    nlohmann::ordered_json rec;
    rec["schema_version"] = 1;
    if (!question_id.empty()) rec["question_id"] = question_id;
    auto& steps = rec["steps"] = nlohmann::ordered_json::array();
    for (const auto& s : traj.steps)
      steps.push_back({{"action", action_name(s.action)}, {"query", s.query}, {"output", s.output_text}});
    rec["answer"] = traj.answer;
    rec["label"] = gold.empty() ? 0 : static_cast<int>(training_reward(traj.answer, gold));
    auto& values = rec["node_values"] = nlohmann::ordered_json::array();
    for (int id : traj.node_ids) {
      const tree::TreeNode& n = t.at(id);
      double value = n.visits > 0 ? n.q_value / static_cast<double>(n.visits) : 0.0;
      values.push_back({{"node_id", id}, {"value", value}, {"visits", n.visits}});
    }
    sink << rec.dump() << '\n';
    if (!sink) throw std::runtime_error("export_synthesis_data: write failed");
    ++count;
  }
  return count;
}

}  // namespace airrag::verify
