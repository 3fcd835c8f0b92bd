#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "airrag/airrag.hpp"

namespace testutil {

using namespace airrag;

/// Canned chat backend: answers by template kind, any prompt. Each kind maps
/// to the full list of sequences one call returns (truncated/padded to n).
class FakeChatClient : public clients::ChatClient {
 public:
  std::map<ActionKind, std::vector<std::string>> responses;
  bool throw_client_error = false;

  std::vector<Generation> generate(const GenerationRequest& req) override {
    stats_.requests += 1;
    if (throw_client_error) throw ClientError("injected failure");
    ActionKind kind = classify(req.prompt);
    auto it = responses.find(kind);
    std::vector<std::string> texts =
        it == responses.end() ? std::vector<std::string>{"ok"} : it->second;
    std::vector<Generation> out;
    for (int i = 0; i < req.sampling.n; ++i) {
      std::string t = texts.empty() ? std::string{}
                                    : texts[std::min<std::size_t>(i, texts.size() - 1)];
      out.push_back({t, text::count_tokens(req.prompt), text::count_tokens(t)});
    }
    return out;
  }

  const clients::ClientStats& stats() const override { return stats_; }

  static ActionKind classify(const std::string& prompt) {
    const auto& t = actions::PromptTemplates::defaults();
    if (prompt.rfind(actions::PromptTemplates::header_of(t.say), 0) == 0) return ActionKind::SAY;
    if (prompt.rfind(actions::PromptTemplates::header_of(t.qt), 0) == 0) return ActionKind::QT;
    if (prompt.rfind(actions::PromptTemplates::header_of(t.ra), 0) == 0) return ActionKind::RA;
    if (prompt.rfind(actions::PromptTemplates::header_of(t.sa), 0) == 0) return ActionKind::SA;
    return ActionKind::DA;
  }

 private:
  clients::ClientStats stats_;
};

inline clients::ClientSet fake_clients(std::map<ActionKind, std::vector<std::string>> responses) {
  clients::ClientSet cs;
  auto chat = std::make_shared<FakeChatClient>();
  chat->responses = std::move(responses);
  cs.chat = chat;
  cs.retriever = std::make_shared<clients::InMemoryRetriever>(
      std::vector<RetrievedDoc>{{"doc1", "probe query corpus line", 0.0}});
  cs.embedder = std::make_shared<clients::HashingEmbedder>();
  return cs;
}

/// A state built by replaying (action, output) pairs from the root question.
inline ReasoningState make_state(const std::string& question,
                                 const std::vector<std::pair<ActionKind, std::string>>& steps) {
  ReasoningState s;
  s.question = question;
  for (const auto& [action, output] : steps)
    s = actions::advance(s, action, output, "digest", {}, 0);
  return s;
}

/// Independent legality validator used by fuzz tests: checks the published
/// path constraints on a finished step sequence.
inline bool validate_step_sequence(const std::vector<Step>& steps, int max_depth,
                                   int max_qt_iterations, std::string* why = nullptr) {
  auto fail = [&](const std::string& m) {
    if (why) *why = m;
    return false;
  };
  int say_count = 0, sa_count = 0, qt_count = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    switch (steps[i].action) {
      case ActionKind::SAY:
        say_count += 1;
        if (i != 0) return fail("SAY not first");
        break;
      case ActionKind::DA:
        if (i != 0) return fail("DA not at depth 1");
        break;
      case ActionKind::QT:
        qt_count += 1;
        break;
      case ActionKind::SA:
        sa_count += 1;
        if (i + 1 != steps.size()) return fail("SA not last");
        break;
      case ActionKind::RA:
        break;
    }
  }
  if (say_count > 1) return fail("SAY repeated");
  if (sa_count > 1) return fail("SA repeated");
  if (qt_count > max_qt_iterations) return fail("QT iterations exceeded");
  if (static_cast<int>(steps.size()) > max_depth) return fail("depth exceeded");
  return true;
}

}  // namespace testutil
