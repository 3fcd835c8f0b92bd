#include <doctest.h>

#include "airrag/simenv.hpp"
#include "airrag/tree.hpp"
#include "airrag/verify.hpp"
#include "helpers.hpp"

using namespace airrag;

namespace {

tree::SearchConfig search_cfg(int rollouts, actions::Mode mode = actions::Mode::full,
                              std::uint64_t seed = 0, std::int64_t l_max = 1000000) {
  tree::SearchConfig c;
  c.rollouts = rollouts;
  c.mode = mode;
  c.rng_seed = seed;
  c.l_max = l_max;
  return c;
}

actions::ActionConfig zero_temp(actions::ActionConfig c) {
  for (auto& [action, policy] : c.per_action_sampling) policy.temperature = 0.0;
  return c;
}

struct Sim {
  std::shared_ptr<simenv::World> world;
  clients::ClientSet clients;

  Sim(std::uint64_t seed, int entities, int hops, int distractors = 0, int k = 100000) {
    world = std::make_shared<simenv::World>(
        simenv::generate_world(seed, entities, hops, {distractors}));
    clients = simenv::make_world_clients(world, {2, seed});
    (void)k;
  }
};

}  // namespace

TEST_CASE("expansion at the root follows the mode's action space") {
  Sim sim(31, 20, 2);
  const auto* q2 = [&]() -> const simenv::WorldQuestion* {
    for (const auto& q : sim.world->questions)
      if (q.hop_count == 2) return &q;
    return nullptr;
  }();
  REQUIRE(q2 != nullptr);

  SUBCASE("full mode roots expand through SAY and DA only") {
    auto acfg = zero_temp(actions::ActionConfig::with_preset(actions::NPreset::uniform_n1));
    tree::Searcher s(q2->sample.question, search_cfg(1), acfg, sim.clients);
    int made = s.expand(0);
    CHECK(made >= 1);
    for (int c : s.tree().root().children) {
      auto a = *s.tree().at(c).incoming_action;
      CHECK((a == ActionKind::SAY || a == ActionKind::DA));
    }
  }

  SUBCASE("lite mode roots expand through RA and QT only") {
    auto acfg = zero_temp(actions::ActionConfig::with_preset(actions::NPreset::uniform_n1,
                                                             actions::Mode::lite));
    auto cfg = search_cfg(1, actions::Mode::lite);
    tree::Searcher s(q2->sample.question, cfg, acfg, sim.clients);
    s.expand(0);
    REQUIRE_FALSE(s.tree().root().children.empty());
    for (int c : s.tree().root().children) {
      auto a = *s.tree().at(c).incoming_action;
      CHECK((a == ActionKind::RA || a == ActionKind::QT));
    }
  }
}

TEST_CASE("duplicate outputs collapse to one child per distinct text") {
  // Only RA is legal after QT, so the fake backend's [X, X, Y] group is the
  // whole expansion.
  auto cs = testutil::fake_clients({{ActionKind::QT, {"probe query"}},
                                    {ActionKind::RA, {"X", "X", "Y"}}});
  auto acfg = actions::ActionConfig::with_preset(actions::NPreset::uniform_n3, actions::Mode::lite);
  tree::Searcher s("root question", search_cfg(1, actions::Mode::lite), acfg, cs);

  s.expand(0);
  int qt_child = -1;
  for (int c : s.tree().root().children)
    if (*s.tree().at(c).incoming_action == ActionKind::QT) qt_child = c;
  REQUIRE(qt_child != -1);

  int made = s.expand(qt_child);
  CHECK(made == 2);
  const auto& children = s.tree().at(qt_child).children;
  REQUIRE(children.size() == 2);
  CHECK(s.tree().at(children[0]).output_text() == "X");
  CHECK(s.tree().at(children[1]).output_text() == "Y");
}

TEST_CASE("a QT sample answering None expands no branch") {
  auto cs = testutil::fake_clients({{ActionKind::QT, {"None"}}, {ActionKind::RA, {"found it"}}});
  auto acfg = actions::ActionConfig::with_preset(actions::NPreset::uniform_n1, actions::Mode::lite);
  tree::Searcher s("probe query corpus", search_cfg(1, actions::Mode::lite), acfg, cs);
  s.expand(0);
  for (int c : s.tree().root().children)
    CHECK(*s.tree().at(c).incoming_action == ActionKind::RA);
}

TEST_CASE("no sibling pair shares normalized output text after expansion") {
  Sim sim(32, 24, 3, 2);
  auto acfg = actions::ActionConfig::with_preset(actions::NPreset::uniform_n3, actions::Mode::full,
                                                 true);
  tree::Searcher s(sim.world->questions.back().sample.question, search_cfg(6, actions::Mode::full, 5),
                   acfg, sim.clients);
  s.search();
  for (const auto& node : s.tree().nodes) {
    std::set<std::string> outputs;
    for (int c : node.children)
      CHECK(outputs.insert(text::normalize_state(s.tree().at(c).output_text())).second);
  }
}

TEST_CASE("a single rollout on a scripted 2-hop world reaches the oracle answer via SA") {
  Sim sim(33, 30, 2);
  for (const auto& wq : sim.world->questions) {
    if (wq.hop_count != 2) continue;
    auto acfg = zero_temp(actions::ActionConfig::with_preset(actions::NPreset::uniform_n1));
    acfg.docs_per_retrieval = static_cast<int>(sim.world->docs.size());
    tree::Searcher s(wq.sample.question, search_cfg(1, actions::Mode::full, 7), acfg, sim.clients,
                     verify::make_consistency_verify_layer(sim.clients));
    auto traj = s.run_rollout();
    CHECK(traj.ended_with_sa);
    CHECK_FALSE(traj.answer.empty());
    CHECK(text::normalize_answer(traj.answer) ==
          text::normalize_answer(simenv::oracle_answer(wq.sample, *sim.world)));
  }
}

TEST_CASE("deterministic sampling collapses repeated rollouts to one trajectory") {
  Sim sim(34, 20, 2);
  auto acfg = zero_temp(actions::ActionConfig::with_preset(actions::NPreset::uniform_n1));
  const auto& q = sim.world->questions.front().sample;
  tree::Searcher s(q.question, search_cfg(4, actions::Mode::full, 3), acfg, sim.clients);
  auto result = s.search();
  CHECK(result.rollouts_completed == 4);
  CHECK(result.trajectories.size() == 1);

  SUBCASE("visits keep counting even when trajectories deduplicate") {
    CHECK(s.tree().root().visits == 4);
  }
}

TEST_CASE("search returns at most one trajectory per rollout") {
  Sim sim(35, 24, 3, 1);
  auto acfg = actions::ActionConfig::with_preset(actions::NPreset::optimal, actions::Mode::full, true);
  tree::Searcher s(sim.world->questions.back().sample.question, search_cfg(4, actions::Mode::full, 11),
                   acfg, sim.clients);
  auto result = s.search();
  CHECK(result.trajectories.size() <= 4);
  CHECK(result.rollouts_completed == 4);
}

TEST_CASE("terminal-by-depth trajectories take the answer from the last RA output") {
  // The fake QT keeps rewriting and RA keeps answering, so in lite mode the
  // path ping-pongs QT/RA; a tight depth cap cuts it off without an SA step.
  auto cs = testutil::fake_clients(
      {{ActionKind::QT, {"another query"}}, {ActionKind::RA, {"ra answer"}}, {ActionKind::SA, {"fin"}}});
  auto acfg = actions::ActionConfig::with_preset(actions::NPreset::uniform_n1, actions::Mode::lite);
  acfg.max_qt_ra_iterations = 10;
  auto cfg = search_cfg(1, actions::Mode::lite, 1);
  cfg.max_depth = 4;
  acfg.max_depth = 4;
  tree::Searcher s("root question", cfg, acfg, cs);

  // Drive the rollout until it terminates; depth 4 forces SA at depth 3 via
  // the depth rule, so instead check a hand-built depth-capped state.
  auto traj = s.run_rollout();
  CHECK(traj.steps.size() <= 4);

  auto capped = testutil::make_state("q", {{ActionKind::QT, "q1"},
                                           {ActionKind::RA, "the found answer"},
                                           {ActionKind::QT, "q2"},
                                           {ActionKind::RA, "late answer"}});
  acfg.max_depth = 4;
  CHECK(actions::is_terminal(capped, acfg));
  CHECK(tree::extract_answer(capped) == "late answer");
}

TEST_CASE("budget exhaustion mid-search keeps completed trajectories") {
  Sim sim(36, 24, 3, 2);
  const auto& q = sim.world->questions.back().sample;
  auto acfg = actions::ActionConfig::with_preset(actions::NPreset::optimal);
  acfg.docs_per_retrieval = 3;

  auto generous = search_cfg(8, actions::Mode::full, 1);
  tree::Searcher big(q.question, generous, acfg, sim.clients);
  auto full_run = big.search();
  REQUIRE(full_run.tokens_used > 0);

  // A budget sized for roughly half the full run exhausts mid-search.
  auto tight = generous;
  tight.l_max = full_run.tokens_used / 2;
  tree::Searcher small(q.question, tight, acfg, sim.clients);
  auto partial = small.search();
  CHECK(partial.budget_exhausted);
  CHECK(partial.tokens_used <= tight.l_max);
  CHECK(static_cast<int>(partial.trajectories.size()) <= partial.rollouts_completed);
  if (partial.rollouts_completed > 0) CHECK_FALSE(partial.trajectories.empty());
}

TEST_CASE("client errors on the first rollout surface as an empty result with detail") {
  auto chat = std::make_shared<testutil::FakeChatClient>();
  chat->throw_client_error = true;
  clients::ClientSet cs;
  cs.chat = chat;
  cs.retriever = std::make_shared<clients::InMemoryRetriever>();
  auto acfg = actions::ActionConfig::with_preset(actions::NPreset::uniform_n1);
  tree::Searcher s("question", search_cfg(3), acfg, cs);
  auto result = s.search();
  CHECK(result.trajectories.empty());
  REQUIRE_FALSE(result.errors.empty());
  CHECK(result.errors.front() == std::string("injected failure"));
}

TEST_CASE("root visit count equals completed rollouts and q equals the reward sum") {
  Sim sim(37, 30, 3, 1);
  const auto& q = sim.world->questions.back().sample;
  auto acfg = actions::ActionConfig::with_preset(actions::NPreset::uniform_n1);
  tree::Searcher s(q.question, search_cfg(16, actions::Mode::full, 9), acfg, sim.clients,
                   verify::make_consistency_verify_layer(sim.clients));
  double reward_sum = 0.0;
  std::int64_t last_used = 0;
  for (int r = 1; r <= 16; ++r) {
    auto traj = s.run_rollout();
    reward_sum += traj.leaf_reward;
    CHECK(s.tree().root().visits == r);
    CHECK(s.tree().root().q_value == doctest::Approx(reward_sum).epsilon(1e-12));
    CHECK(s.budget().used >= last_used);
    last_used = s.budget().used;
  }
  // Uniform n=1 assigns every leaf a reward of exactly 1.0.
  CHECK(s.tree().root().q_value == 16.0);

  SUBCASE("children never have more visits than their parent") {
    for (const auto& node : s.tree().nodes)
      for (int c : node.children) CHECK(s.tree().at(c).visits <= node.visits);
  }
}

TEST_CASE("trace export captures nodes and trajectories") {
  Sim sim(38, 12, 2);
  const auto& q = sim.world->questions.front().sample;
  auto acfg = zero_temp(actions::ActionConfig::with_preset(actions::NPreset::uniform_n1));
  tree::Searcher s(q.question, search_cfg(2), acfg, sim.clients,
                   verify::make_consistency_verify_layer(sim.clients));
  auto result = s.search();
  auto doc = tree::trace_json(q.question, s.tree(), result.trajectories);
  CHECK(doc["question"] == q.question);
  CHECK(doc["nodes"].size() == s.tree().nodes.size());
  CHECK(doc["trajectories"].size() == result.trajectories.size());
  CHECK(doc["nodes"][0]["visits"].get<int>() == s.tree().root().visits);
  for (const auto& n : doc["nodes"]) CHECK(n["output_digest"].get<std::string>().size() == 16);
}
