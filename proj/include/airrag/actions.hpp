#pragma once

#include <cassert>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "airrag/clients.hpp"
#include "airrag/text.hpp"
#include "airrag/types.hpp"

namespace airrag::actions {

enum class Mode { full, lite, blender };
enum class NPreset { uniform_n1, uniform_n3, optimal };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::full: return "full";
    case Mode::lite: return "lite";
    case Mode::blender: return "blender";
  }
  return "?";
}

inline const char* preset_name(NPreset p) {
  switch (p) {
    case NPreset::uniform_n1: return "uniform_n1";
    case NPreset::uniform_n3: return "uniform_n3";
    case NPreset::optimal: return "optimal";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

/// Plain-text templates with named placeholders: {question}, {history},
/// {this_question}, {contexts}, {examples}. The {examples} slot holds
/// user-supplied few-shot exemplars and is dropped when empty. DA sends the
/// raw question and has no template.
struct PromptTemplates {
  std::string say;
  std::string qt;
  std::string ra;
  std::string sa;

  static const PromptTemplates& defaults() {
    static const PromptTemplates t{
        // SAY
        "Given the user query, you may rephrase it for better clarity, summarize it at a "
        "higher level, or decompose it into multiple sub-queries to facilitate more effective "
        "information retrieval and response generation. If no modification is necessary, "
        "return \"None\". Otherwise, list sub-queries, each on a new line.\n"
        "{examples}\n"
        "Query: {question}\n"
        "Output: ",
        // QT
        "Given the context provided, please determine whether rephrasing, summarization, or "
        "decomposition into sub-queries is necessary to enhance the accuracy and efficiency "
        "of information retrieval and response generation. If no modification is required, "
        "return \"None\". Subsequent queries should be listed individually.\n"
        "{examples}\n"
        "Main Query: {question}\n"
        "History: {history}\n"
        "This Query: {this_question}",
        // RA
        "You are an expert in question answering. I am going to give you some contexts with "
        "may or may not be relevant to the question. Answer the question according to the "
        "contexts.\n"
        "{contexts}\n"
        "Question: {question}",
        // SA
        "You are an expert in question answering. Given the context, sub-queries and "
        "responses, output a correct and concise answer to User Query.\n"
        "{examples}\n"
        "User Query: {question}\n"
        "{history}\n"
        "Contexts: {contexts}\n"
        "Final Answer: "};
    return t;
  }

  /// Loads say.txt/qt.txt/ra.txt/sa.txt from a directory; absent files keep
  /// the shipped default.
  static PromptTemplates from_dir(const std::string& dir) {
    PromptTemplates t = defaults();
    auto load = [&](const char* name, std::string& dst) {
      std::ifstream in(dir + "/" + name);
      if (!in) return;
      std::ostringstream buf;
      buf << in.rdbuf();
      dst = buf.str();
    };
    load("say.txt", t.say);
    load("qt.txt", t.qt);
    load("ra.txt", t.ra);
    load("sa.txt", t.sa);
    return t;
  }

  /// First line of a template; scripted backends key on it.
  static std::string header_of(const std::string& tmpl) {
    auto pos = tmpl.find('\n');
    return pos == std::string::npos ? tmpl : tmpl.substr(0, pos);
  }
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ActionConfig {
  std::map<ActionKind, SamplingPolicy> per_action_sampling;
  bool q_div = false;
  Mode mode = Mode::full;
  int docs_per_retrieval = 5;
  int max_qt_ra_iterations = 4;
  int max_depth = 10;
  PromptTemplates templates = PromptTemplates::defaults();
  /// Few-shot exemplar text per action, substituted into the {examples}
  /// slot. Empty by default; exemplars are user-supplied.
  std::map<ActionKind, std::string> exemplars;

  static ActionConfig with_preset(NPreset preset, Mode mode = Mode::full, bool q_div = false) {
    ActionConfig cfg;
    cfg.mode = mode;
    cfg.q_div = q_div;
    int n_say_qt = 1, n_rest = 1;
    switch (preset) {
      case NPreset::uniform_n1: n_say_qt = n_rest = 1; break;
      case NPreset::uniform_n3: n_say_qt = n_rest = 3; break;
      case NPreset::optimal: n_say_qt = 3; n_rest = 1; break;
    }
    for (ActionKind a : {ActionKind::SAY, ActionKind::DA, ActionKind::RA, ActionKind::QT, ActionKind::SA}) {
      SamplingPolicy p;
      p.n = (a == ActionKind::SAY || a == ActionKind::QT) ? n_say_qt : n_rest;
      cfg.per_action_sampling[a] = p;
    }
    return cfg;
  }
};

/// Per-action sampling policy with the q_div diversity override: top-p 1.0
/// and temperature 1.0 for the query-related actions SAY and QT only.
inline SamplingPolicy sampling_params_for(ActionKind action, const ActionConfig& config) {
  SamplingPolicy p;
  auto it = config.per_action_sampling.find(action);
  if (it != config.per_action_sampling.end()) p = it->second;
  if (config.q_div && (action == ActionKind::SAY || action == ActionKind::QT)) {
    p.top_p = 1.0;
    p.temperature = 1.0;
  }
  return p;
}

// ---------------------------------------------------------------------------
// State transitions
// ---------------------------------------------------------------------------

inline bool is_terminal(const ReasoningState& state, const ActionConfig& config) {
  if (state.depth() >= config.max_depth) return true;
  const Step* last = state.last_step();
  return last != nullptr && last->action == ActionKind::SA;
}

/// One sub-query per non-empty line; a case-insensitive "None" line is the
/// no-transformation sentinel and produces nothing.
inline std::vector<std::string> parse_subqueries(const std::string& output) {
  std::vector<std::string> out;
  for (const auto& raw : text::split_lines(output)) {
    std::string line = text::trim(raw);
    if (line.empty()) continue;
    if (text::to_lower(line) == "none" || text::to_lower(line) == "\"none\"") continue;
    out.push_back(line);
  }
  return out;
}

inline bool is_unknown_answer(const std::string& answer) {
  auto n = text::normalize_words(answer);
  return n.empty() || n == "unknown";
}

/// State transition: appends one executed step and updates the sub-query
/// bookkeeping. SAY queues its decomposition; QT replaces the front pending
/// query with its transformation; RA resolves the front pending query and
/// accumulates the retrieved docs.
inline ReasoningState advance(const ReasoningState& state, ActionKind action,
                              const std::string& output_text, const std::string& prompt_digest,
                              const std::vector<RetrievedDoc>& docs, std::int64_t tokens_in) {
  ReasoningState next = state;
  std::string query = state.current_query();
  next.steps.push_back({action, prompt_digest, output_text, query});
  next.input_tokens_used += tokens_in;
  switch (action) {
    case ActionKind::SAY: {
      next.has_say = true;
      for (auto& q : parse_subqueries(output_text)) next.pending_queries.push_back(std::move(q));
      break;
    }
    case ActionKind::DA: {
      next.has_da = true;
      next.answered.emplace_back(state.question, output_text);
      break;
    }
    case ActionKind::RA: {
      next.answered.emplace_back(query, output_text);
      if (!next.pending_queries.empty()) next.pending_queries.erase(next.pending_queries.begin());
      for (const auto& d : docs) {
        bool seen = false;
        for (const auto& g : next.gathered_docs)
          if (g.doc_id == d.doc_id) {
            seen = true;
            break;
          }
        if (!seen) next.gathered_docs.push_back(d);
      }
      break;
    }
    case ActionKind::QT: {
      next.qt_count += 1;
      auto parsed = parse_subqueries(output_text);
      if (!next.pending_queries.empty()) next.pending_queries.erase(next.pending_queries.begin());
      next.pending_queries.insert(next.pending_queries.begin(), parsed.begin(), parsed.end());
      break;
    }
    case ActionKind::SA: {
      next.has_sa = true;
      break;
    }
  }
  return next;
}

/// Normalized concatenation of step outputs; the deduplication key for
/// states and trajectories.
inline std::string state_identity(const ReasoningState& state) {
  std::string id;
  for (const auto& s : state.steps) {
    id += text::normalize_state(s.output_text);
    id.push_back('\x1f');
  }
  return id;
}

// ---------------------------------------------------------------------------
// Legality
// ---------------------------------------------------------------------------

/// Base transition map, keyed by the last action on the path (SAY slot used
/// for the root in full mode). Filters below apply the once-only, iteration
/// and depth rules. Kept as data so alternates are one-line changes.
struct TransitionTable {
  std::vector<ActionKind> root_full = {ActionKind::SAY, ActionKind::DA};
  std::vector<ActionKind> root_lite = {ActionKind::RA, ActionKind::QT};
  std::map<ActionKind, std::vector<ActionKind>> after = {
      {ActionKind::SAY, {ActionKind::RA, ActionKind::QT}},
      {ActionKind::RA, {ActionKind::QT, ActionKind::SA}},
      {ActionKind::QT, {ActionKind::RA}},
      {ActionKind::DA, {ActionKind::SA}},
      {ActionKind::SA, {}},
  };

  static const TransitionTable& instance() {
    static const TransitionTable t;
    return t;
  }
};

/// Legal actions at a non-terminal state.
///
/// Rules: root offers {SAY, DA} (full) or {RA, QT} (lite); SAY leads to
/// {RA, QT}; RA to {QT, SA}; QT must be followed by RA; DA by SA. SAY and
/// SA appear at most once per path, QT stops being offered after
/// max_qt_ra_iterations, and at depth max_depth-1 only SA is offered so
/// paths close with a summary.
inline std::set<ActionKind> legal_actions(const ReasoningState& state, const ActionConfig& config) {
  if (is_terminal(state, config)) throw TreeError("legal_actions called on a terminal state");
  if (state.depth() == config.max_depth - 1) return {ActionKind::SA};

  const auto& table = TransitionTable::instance();
  std::vector<ActionKind> base;
  const Step* last = state.last_step();
  if (last == nullptr)
    base = (config.mode == Mode::lite) ? table.root_lite : table.root_full;
  else
    base = table.after.at(last->action);

  std::set<ActionKind> out;
  for (ActionKind a : base) {
    if (config.mode == Mode::lite && (a == ActionKind::SAY || a == ActionKind::DA)) continue;
    if (a == ActionKind::SAY && state.has_say) continue;
    if (a == ActionKind::SA && state.has_sa) continue;
    if (a == ActionKind::QT && state.qt_count >= config.max_qt_ra_iterations) continue;
    out.insert(a);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompt rendering
// ---------------------------------------------------------------------------

namespace detail {

inline std::string render_history(const ReasoningState& state) {
  std::string h;
  for (const auto& [q, a] : state.answered) {
    if (!h.empty()) h.push_back('\n');
    h += "Sub-query: " + q + "\nResponse: " + a;
  }
  return h;
}

inline std::string render_contexts(const std::vector<RetrievedDoc>& docs) {
  std::string c;
  for (const auto& d : docs) {
    if (!c.empty()) c.push_back('\n');
    c += d.content;
  }
  return c;
}

/// Substitutes placeholders; a line consisting solely of a placeholder whose
/// value is empty is dropped.
inline std::string fill_template(const std::string& tmpl,
                                 const std::map<std::string, std::string>& values) {
  std::ostringstream out;
  bool first = true;
  auto lines = text::split_lines(tmpl);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    std::string trimmed = text::trim(line);
    if (trimmed.size() > 1 && trimmed.front() == '{' && trimmed.back() == '}') {
      auto it = values.find(trimmed.substr(1, trimmed.size() - 2));
      if (it != values.end() && it->second.empty()) continue;
    }
    for (const auto& [key, value] : values) line = text::replace_all(line, "{" + key + "}", value);
    if (!first) out << '\n';
    out << line;
    first = false;
  }
  // A template ending in a newline keeps it (split_lines drops the last
  // empty segment only when the input does not end with one).
  if (!tmpl.empty() && tmpl.back() == '\n') out << '\n';
  return out.str();
}

}  // namespace detail

/// Renders the prompt for an action. DA sends the raw question without any
/// prompt. RA and SA require grounding: empty docs together with an empty
/// history raise MissingContext.
inline std::string render_prompt(ActionKind action, const ReasoningState& state,
                                 const std::vector<RetrievedDoc>& docs, const std::string& question,
                                 const ActionConfig& config = ActionConfig{}) {
  const PromptTemplates& t = config.templates;
  auto exemplar = [&](ActionKind a) {
    auto it = config.exemplars.find(a);
    return it == config.exemplars.end() ? std::string{} : it->second;
  };
  switch (action) {
    case ActionKind::DA:
      return question;
    case ActionKind::SAY:
      return detail::fill_template(t.say, {{"question", question}, {"examples", exemplar(action)}});
    case ActionKind::QT: {
      std::string history = detail::render_history(state);
      return detail::fill_template(t.qt, {{"question", question},
                                          {"history", history.empty() ? "None" : history},
                                          {"this_question", state.current_query()},
                                          {"examples", exemplar(action)}});
    }
    case ActionKind::RA: {
      if (docs.empty() && state.answered.empty())
        throw MissingContext("RA invoked with no documents and no history");
      return detail::fill_template(
          t.ra, {{"contexts", detail::render_contexts(docs)}, {"question", state.current_query()}});
    }
    case ActionKind::SA: {
      std::string history = detail::render_history(state);
      if (docs.empty() && history.empty())
        throw MissingContext("SA invoked with no documents and no history");
      return detail::fill_template(t.sa, {{"question", question},
                                          {"history", history},
                                          {"contexts", detail::render_contexts(docs)},
                                          {"examples", exemplar(action)}});
    }
  }
  throw TreeError("unreachable action kind");
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct ActionExecution {
  std::vector<Generation> outputs;
  std::vector<RetrievedDoc> docs;
  std::string prompt_digest;
};

/// Executes one action against the clients: RA retrieves for the current
/// query first, then every action makes a single chat call that returns n
/// sampled sequences. The estimated prompt tokens are charged to the budget
/// before the call and reconciled with the backend-reported count after.
inline ActionExecution execute_action(ActionKind action, const ReasoningState& state,
                                      const std::string& question, const ActionConfig& config,
                                      const clients::ClientSet& cs, Budget& budget) {
  ActionExecution exec;
  if (action == ActionKind::RA) {
    if (!cs.retriever) throw ClientError("RA requires a retriever client");
    exec.docs = cs.retriever->retrieve(state.current_query(), config.docs_per_retrieval);
  } else if (action == ActionKind::SA) {
    exec.docs = state.gathered_docs;
  }

  std::string prompt = render_prompt(action, state, exec.docs, question, config);
  exec.prompt_digest = text::fnv1a_hex(prompt);

  std::int64_t estimate = text::count_tokens(prompt);
  if (!budget.charge(estimate)) throw BudgetExhausted();

  GenerationRequest req{prompt, sampling_params_for(action, config), {}};
  exec.outputs = cs.chat->generate(req);
  // Reported counts only ever add cost on top of the estimate; usage stays
  // monotone within a search.
  if (!exec.outputs.empty() && exec.outputs.front().tokens_in > estimate)
    budget.reconcile(estimate, exec.outputs.front().tokens_in);
  return exec;
}

}  // namespace airrag::actions
