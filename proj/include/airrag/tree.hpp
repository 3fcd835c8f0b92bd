#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "airrag/actions.hpp"
#include "airrag/clients.hpp"
#include "airrag/text.hpp"
#include "airrag/types.hpp"

namespace airrag::tree {

using actions::ActionConfig;
using actions::Mode;

// ---------------------------------------------------------------------------
// Nodes and configuration
// ---------------------------------------------------------------------------

struct TreeNode {
  int id = 0;
  ReasoningState state;
  std::optional<ActionKind> incoming_action;
  /// Cumulative reward; the mean value of the node is q_value / visits.
  double q_value = 0.0;
  /// Number of completed rollouts whose trajectory passes through this node.
  int visits = 0;
  std::vector<int> children;
  int parent = -1;
  bool terminal = false;

  /// Reward assigned when this node was created as a terminal leaf.
  double leaf_reward = 0.0;
  bool has_leaf_reward = false;

  const std::string& output_text() const {
    static const std::string empty;
    return state.steps.empty() ? empty : state.steps.back().output_text;
  }
};

struct Tree {
  std::vector<TreeNode> nodes;

  TreeNode& at(int id) { return nodes.at(static_cast<std::size_t>(id)); }
  const TreeNode& at(int id) const { return nodes.at(static_cast<std::size_t>(id)); }
  const TreeNode& root() const { return nodes.at(0); }
  bool empty() const { return nodes.empty(); }
};

struct SearchConfig {
  int rollouts = 1;
  double exploration_weight = 1.4142135623730951;  // sqrt(2)
  int max_depth = 10;
  Mode mode = Mode::full;
  std::int64_t l_max = 1000000;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (rollouts < 1) throw ConfigError("rollouts must be >= 1");
    if (max_depth < 2) throw ConfigError("max_depth must be >= 2");
    if (exploration_weight <= 0.0) throw ConfigError("exploration_weight must be > 0");
    if (l_max < 1) throw ConfigError("l_max must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Core operations
// ---------------------------------------------------------------------------

/// UCT score: q/visits + w * sqrt(ln(parent_visits) / visits), natural log.
/// Unvisited nodes are never scored here; selection handles them separately.
inline double uct_value(double q, int visits, int parent_visits, double w) {
  if (visits < 1) throw TreeError("uct_value: visits must be >= 1");
  if (parent_visits < 1) throw TreeError("uct_value: parent_visits must be >= 1");
  return q / static_cast<double>(visits) +
         w * std::sqrt(std::log(static_cast<double>(parent_visits)) / static_cast<double>(visits));
}

/// Child selection: one unvisited child uniformly at random when any exists,
/// otherwise the UCT argmax with exact ties broken by lowest node id.
inline int select_child(const Tree& tree, int node_id, double w, std::mt19937_64& rng) {
  const TreeNode& node = tree.at(node_id);
  if (node.children.empty()) throw TreeError("select_child called on a leaf");

  std::vector<int> unvisited;
  for (int c : node.children)
    if (tree.at(c).visits == 0) unvisited.push_back(c);
  if (!unvisited.empty()) {
    if (unvisited.size() == 1) return unvisited.front();
    std::uniform_int_distribution<std::size_t> pick(0, unvisited.size() - 1);
    return unvisited[pick(rng)];
  }

  int best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int c : node.children) {
    const TreeNode& child = tree.at(c);
    double score = uct_value(child.q_value, child.visits, node.visits, w);
    if (score > best_score || (score == best_score && (best == -1 || c < best))) {
      best_score = score;
      best = c;
    }
  }
  return best;
}

/// Adds the reward to every node on the root..leaf path and increments their
/// visit counts. Only terminal leaves backpropagate.
inline void backpropagate(Tree& tree, int leaf_id, double reward) {
  if (!tree.at(leaf_id).terminal) throw TreeError("backpropagate requires a terminal leaf");
  int id = leaf_id;
  while (id != -1) {
    TreeNode& n = tree.at(id);
    n.q_value += reward;
    n.visits += 1;
    id = n.parent;
  }
}

/// Keeps the first state per normalized final output text, preserving order.
inline std::vector<ReasoningState> prune_duplicate_states(const std::vector<ReasoningState>& states) {
  std::vector<ReasoningState> out;
  std::set<std::string> seen;
  for (const auto& s : states) {
    std::string key = s.steps.empty() ? std::string{} : text::normalize_state(s.steps.back().output_text);
    if (seen.count(key)) continue;
    seen.insert(key);
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct Trajectory {
  int id = 0;
  std::vector<int> node_ids;  // root..leaf
  std::vector<Step> steps;
  std::string answer;
  bool ended_with_sa = false;
  double leaf_reward = 0.0;
  /// Dedup key: ordered normalized state sequence.
  std::string identity;
  /// Per-method verification scores (jcd, emb, rm), attached after search.
  std::map<std::string, double> scores;
};

/// Final answer of a path: the SA output when the path closed with SA,
/// otherwise the most recent RA or DA output, otherwise the last output.
inline std::string extract_answer(const ReasoningState& state) {
  if (state.steps.empty()) return {};
  const Step& last = state.steps.back();
  if (last.action == ActionKind::SA) return last.output_text;
  for (auto it = state.steps.rbegin(); it != state.steps.rend(); ++it)
    if (it->action == ActionKind::RA || it->action == ActionKind::DA) return it->output_text;
  return last.output_text;
}

/// Collapses trajectories with identical ordered normalized state sequences
/// to the first occurrence.
inline std::vector<Trajectory> dedup_trajectories(const std::vector<Trajectory>& trajs) {
  std::vector<Trajectory> out;
  std::set<std::string> seen;
  for (const auto& t : trajs) {
    if (seen.count(t.identity)) continue;
    seen.insert(t.identity);
    out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Verify-layer hooks
// ---------------------------------------------------------------------------

/// Rewards for the raw output group of one terminal expansion. The default
/// implementation (verify layer) assigns 1.0 for a single output and
/// consistency scores for larger groups; synthesis mode plugs correctness
/// against gold answers instead.
using GroupRewardFn = std::function<std::vector<double>(const std::vector<std::string>&)>;

struct VerifyLayer {
  GroupRewardFn group_reward;
  /// Attaches per-method scores to the deduplicated candidate set.
  std::function<void(std::vector<Trajectory>&, const Tree&)> annotate;
};

inline VerifyLayer null_verify_layer() {
  VerifyLayer v;
  v.group_reward = [](const std::vector<std::string>& answers) {
    return std::vector<double>(answers.size(), 1.0);
  };
  v.annotate = [](std::vector<Trajectory>&, const Tree&) {};
  return v;
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

struct SearchResult {
  std::vector<Trajectory> trajectories;
  int rollouts_completed = 0;
  bool budget_exhausted = false;
  std::vector<std::string> errors;
  std::int64_t tokens_used = 0;
};

/// One search over one question. Tree mutation is single-writer: rollouts
/// run sequentially against this object. Distinct Searcher instances share
/// no mutable state and may run fully in parallel.
class Searcher {
 public:
  Searcher(std::string question, SearchConfig config, ActionConfig action_config,
           clients::ClientSet clients, VerifyLayer verify = null_verify_layer())
      : question_(std::move(question)),
        config_(config),
        action_config_(std::move(action_config)),
        clients_(std::move(clients)),
        verify_(std::move(verify)),
        rng_(config.rng_seed) {
    config_.validate();
    if (question_.empty()) throw ConfigError("question must be nonempty");
    action_config_.mode = config_.mode;
    action_config_.max_depth = config_.max_depth;
    budget_.l_max = config_.l_max;
    TreeNode root;
    root.id = 0;
    root.state.question = question_;
    tree_.nodes.push_back(std::move(root));
  }

  const Tree& tree() const { return tree_; }
  Tree& tree() { return tree_; }
  const Budget& budget() const { return budget_; }
  const std::vector<Trajectory>& raw_trajectories() const { return collected_; }

  /// One complete simulation: descend by selection, expanding at the
  /// frontier, until a terminal node; compute the leaf reward; backpropagate.
  Trajectory run_rollout() {
    int node_id = 0;
    while (!tree_.at(node_id).terminal) {
      if (tree_.at(node_id).children.empty()) {
        int made = expand(node_id);
        if (made == 0) {
          // Dead end: no legal action yielded a child. Close the path here.
          tree_.at(node_id).terminal = true;
          break;
        }
      }
      node_id = select_child(tree_, node_id, config_.exploration_weight, rng_);
    }

    TreeNode& leaf = tree_.at(node_id);
    double reward;
    if (leaf.has_leaf_reward) {
      reward = leaf.leaf_reward;
    } else {
      reward = verify_.group_reward({extract_answer(leaf.state)}).at(0);
      leaf.leaf_reward = reward;
      leaf.has_leaf_reward = true;
    }
    backpropagate(tree_, node_id, reward);

    Trajectory traj;
    traj.id = static_cast<int>(collected_.size());
    for (int id = node_id; id != -1; id = tree_.at(id).parent) traj.node_ids.push_back(id);
    std::reverse(traj.node_ids.begin(), traj.node_ids.end());
    traj.steps = leaf.state.steps;
    traj.answer = extract_answer(leaf.state);
    traj.ended_with_sa = !leaf.state.steps.empty() && leaf.state.steps.back().action == ActionKind::SA;
    traj.leaf_reward = reward;
    traj.identity = actions::state_identity(leaf.state);
    collected_.push_back(traj);
    return traj;
  }

  /// Runs the configured number of rollouts, stopping early on budget
  /// exhaustion, and returns deduplicated candidates with scores attached.
  SearchResult search() {
    SearchResult result;
    for (int r = 0; r < config_.rollouts; ++r) {
      try {
        run_rollout();
        result.rollouts_completed += 1;
      } catch (const BudgetExhausted&) {
        result.budget_exhausted = true;
        break;
      } catch (const ClientError& e) {
        result.errors.emplace_back(e.what());
        if (collected_.empty()) break;  // first rollout failed before any terminal node
      }
    }
    result.trajectories = dedup_trajectories(collected_);
    for (std::size_t i = 0; i < result.trajectories.size(); ++i)
      result.trajectories[i].id = static_cast<int>(i);
    verify_.annotate(result.trajectories, tree_);
    result.tokens_used = budget_.used;
    return result;
  }

  /// Expands a frontier node: executes every legal action, keeps one child
  /// per distinct output (after pruning duplicates across all siblings), in
  /// action order then sample order. Returns the number of children created.
  int expand(int node_id) {
    const ReasoningState state = tree_.at(node_id).state;  // copy: nodes_ may reallocate
    auto legal = actions::legal_actions(state, action_config_);

    std::set<std::string> sibling_keys;
    int created = 0;
    for (ActionKind action : legal) {
      actions::ActionExecution exec;
      try {
        exec = actions::execute_action(action, state, question_, action_config_, clients_, budget_);
      } catch (const MissingContext&) {
        continue;  // ungrounded action at this state; not an error
      }

      // Rewards for terminal children are computed over the raw output
      // group, so repeated answers earn their agreement bonus.
      std::vector<std::string> raw_texts;
      raw_texts.reserve(exec.outputs.size());
      for (const auto& g : exec.outputs) raw_texts.push_back(g.text);
      std::vector<double> group_rewards;

      for (std::size_t i = 0; i < exec.outputs.size(); ++i) {
        const Generation& gen = exec.outputs[i];
        if (text::trim(gen.text).empty()) continue;  // skippable sample
        if ((action == ActionKind::SAY || action == ActionKind::QT) &&
            actions::parse_subqueries(gen.text).empty())
          continue;  // "None": no transformation, branch not expanded
        std::string key = text::normalize_state(gen.text);
        if (sibling_keys.count(key)) continue;
        sibling_keys.insert(key);

        TreeNode child;
        child.id = static_cast<int>(tree_.nodes.size());
        child.parent = node_id;
        child.incoming_action = action;
        child.state = actions::advance(state, action, gen.text, exec.prompt_digest, exec.docs,
                                       gen.tokens_in);
        child.terminal = actions::is_terminal(child.state, action_config_);
        if (child.terminal) {
          if (group_rewards.empty()) group_rewards = verify_.group_reward(raw_texts);
          child.leaf_reward = group_rewards.at(i);
          child.has_leaf_reward = true;
        }
        tree_.nodes.push_back(std::move(child));
        tree_.at(node_id).children.push_back(static_cast<int>(tree_.nodes.size()) - 1);
        ++created;
      }
    }
    return created;
  }

 private:
  std::string question_;
  SearchConfig config_;
  ActionConfig action_config_;
  clients::ClientSet clients_;
  VerifyLayer verify_;
  std::mt19937_64 rng_;
  Tree tree_;
  Budget budget_;
  std::vector<Trajectory> collected_;
};

/// Convenience wrapper matching the one-shot search contract.
inline SearchResult search(const std::string& question, const SearchConfig& config,
                           const ActionConfig& action_config, const clients::ClientSet& clients,
                           const VerifyLayer& verify = null_verify_layer()) {
  Searcher s(question, config, action_config, clients, verify);
  return s.search();
}

// ---------------------------------------------------------------------------
// Trace export
// ---------------------------------------------------------------------------

/// Structured trace of one search: the full tree plus all candidate
/// trajectories. Consumed by the CLI tree dump and reward-data synthesis.
inline nlohmann::ordered_json trace_json(const std::string& question, const Tree& tree,
                                         const std::vector<Trajectory>& trajectories) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = 1;
  doc["question"] = question;
  auto& nodes = doc["nodes"] = nlohmann::ordered_json::array();
  for (const auto& n : tree.nodes) {
    nlohmann::ordered_json j;
    j["id"] = n.id;
    j["parent"] = n.parent;
    if (n.incoming_action)
      j["action"] = action_name(*n.incoming_action);
    else
      j["action"] = nullptr;
    j["depth"] = n.state.depth();
    j["q"] = n.q_value;
    j["visits"] = n.visits;
    j["terminal"] = n.terminal;
    j["output_digest"] = text::fnv1a_hex(n.output_text());
    j["output_preview"] = text::truncate(n.output_text(), 120);
    nodes.push_back(std::move(j));
  }
  auto& trajs = doc["trajectories"] = nlohmann::ordered_json::array();
  for (const auto& t : trajectories) {
    nlohmann::ordered_json j;
    j["id"] = t.id;
    j["node_ids"] = t.node_ids;
    j["answer"] = t.answer;
    j["ended_with_sa"] = t.ended_with_sa;
    j["leaf_reward"] = t.leaf_reward;
    j["scores"] = t.scores;
    auto& steps = j["steps"] = nlohmann::ordered_json::array();
    for (const auto& s : t.steps) {
      steps.push_back({{"action", action_name(s.action)},
                       {"query", s.query},
                       {"output", s.output_text},
                       {"prompt_digest", s.prompt_digest}});
    }
    trajs.push_back(std::move(j));
  }
  return doc;
}

/// Human-readable tree rendering: per node (action, Q, N, truncated output).
inline std::string render_tree(const Tree& tree, std::size_t preview = 60) {
  std::string out;
  std::function<void(int, int)> walk = [&](int id, int indent) {
    const TreeNode& n = tree.at(id);
    out.append(static_cast<std::size_t>(indent) * 2, ' ');
    out += n.incoming_action ? action_name(*n.incoming_action) : "ROOT";
    out += " [Q=" + std::to_string(n.q_value) + " N=" + std::to_string(n.visits);
    if (n.terminal) out += " terminal";
    out += "] ";
    out += text::truncate(text::collapse_whitespace(n.output_text()), preview);
    out += '\n';
    for (int c : n.children) walk(c, indent + 1);
  };
  if (!tree.empty()) walk(0, 0);
  return out;
}

}  // namespace airrag::tree
