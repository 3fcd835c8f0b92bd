#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace airrag {

/// The five reasoning actions, in canonical order A1..A5.
enum class ActionKind { SAY, DA, RA, QT, SA };

inline const char* action_name(ActionKind a) {
  switch (a) {
    case ActionKind::SAY: return "SAY";
    case ActionKind::DA: return "DA";
    case ActionKind::RA: return "RA";
    case ActionKind::QT: return "QT";
    case ActionKind::SA: return "SA";
  }
  return "?";
}

inline std::optional<ActionKind> action_from_name(const std::string& s) {
  if (s == "SAY") return ActionKind::SAY;
  if (s == "DA") return ActionKind::DA;
  if (s == "RA") return ActionKind::RA;
  if (s == "QT") return ActionKind::QT;
  if (s == "SA") return ActionKind::SA;
  return std::nullopt;
}

/// Per-call sampling parameters. Defaults match the library-wide
/// generation defaults (top-p 0.8, top-k 50, temperature 0.7).
struct SamplingPolicy {
  int n = 1;
  double top_p = 0.8;
  int top_k = 50;
  double temperature = 0.7;
};

struct GenerationRequest {
  std::string prompt;
  SamplingPolicy sampling;
  std::vector<std::string> stop;
};

struct RetrievedDoc {
  std::string doc_id;
  std::string content;
  double score = 0.0;
};

struct EmbeddingVector {
  std::vector<double> values;
  double norm = 0.0;
};

/// One generated sequence plus the token accounting the backend reported
/// (or the caller estimated).
struct Generation {
  std::string text;
  int tokens_in = 0;
  int tokens_out = 0;
};

/// One step of a reasoning transcript.
struct Step {
  ActionKind action = ActionKind::SAY;
  std::string prompt_digest;
  std::string output_text;
  /// The query this step addressed (RA answers it, QT transforms it).
  std::string query;
};

/// Ordered transcript of reasoning steps from the root question to the
/// current node, plus the bookkeeping the action layer maintains: which
/// sub-queries are still pending, which were answered, and the documents
/// gathered along the path.
struct ReasoningState {
  std::string question;
  std::vector<Step> steps;
  std::int64_t input_tokens_used = 0;

  std::vector<std::string> pending_queries;
  /// Every (query, answer) pair produced so far, in order, including "unknown"
  /// answers; prompt history rendering uses all of them.
  std::vector<std::pair<std::string, std::string>> answered;
  std::vector<RetrievedDoc> gathered_docs;
  int qt_count = 0;
  bool has_say = false;
  bool has_da = false;
  bool has_sa = false;

  int depth() const { return static_cast<int>(steps.size()); }

  /// The query the next RA answers or the next QT transforms: the first
  /// pending sub-query, falling back to the root question.
  const std::string& current_query() const {
    return pending_queries.empty() ? question : pending_queries.front();
  }

  const Step* last_step() const { return steps.empty() ? nullptr : &steps.back(); }
};

/// Input-token ledger shared by all rollouts of one search.
/// `used` never exceeds `l_max`; a failed charge leaves it unchanged.
struct Budget {
  std::int64_t l_max = 0;
  std::int64_t used = 0;

  bool charge(std::int64_t tokens) {
    if (tokens < 0) return true;
    if (used + tokens > l_max) return false;
    used += tokens;
    return true;
  }

  /// Replace an estimated charge with the backend-reported count, clamped
  /// so `used` stays within [0, l_max]. Returns false if the clamp hit the
  /// ceiling (the budget should then be treated as exhausted).
  bool reconcile(std::int64_t estimated, std::int64_t reported) {
    std::int64_t next = used - estimated + reported;
    if (next < 0) next = 0;
    if (next > l_max) {
      used = l_max;
      return false;
    }
    used = next;
    return true;
  }

  std::int64_t remaining() const { return l_max - used; }
};

// ---------------------------------------------------------------------------
// Error taxonomy
// ---------------------------------------------------------------------------

struct ClientError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Control signal: an expansion would exceed L_max. The search catches this
/// and finalizes with whatever trajectories already completed.
struct BudgetExhausted : std::runtime_error {
  BudgetExhausted() : std::runtime_error("input-token budget exhausted") {}
  explicit BudgetExhausted(const std::string& m) : std::runtime_error(m) {}
};

struct MissingContext : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingScore : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnrecognizedTemplate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TreeError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace airrag
