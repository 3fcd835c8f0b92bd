// Minimal library walkthrough: build a scripted world, search one of its
// questions, pick an answer, and dump the trace.

#include <iostream>

#include "airrag/airrag.hpp"

int main() {
  using namespace airrag;

  auto world = std::make_shared<simenv::World>(simenv::generate_world(7, 24, 3));
  auto clients = simenv::make_world_clients(world);

  const auto& sample = world->questions.back().sample;
  std::cout << "question: " << sample.question << "\n";
  std::cout << "oracle:   " << simenv::oracle_answer(sample, *world) << "\n\n";

  tree::SearchConfig search_cfg;
  search_cfg.rollouts = 8;
  search_cfg.l_max = 200000;
  search_cfg.rng_seed = 42;
  auto action_cfg = actions::ActionConfig::with_preset(actions::NPreset::optimal);
  action_cfg.docs_per_retrieval = 5;

  tree::Searcher searcher(sample.question, search_cfg, action_cfg, clients,
                          verify::make_consistency_verify_layer(clients));
  auto result = searcher.search();

  auto candidates = verify::candidates_from_trajectories(result.trajectories);
  auto [answer, score] = verify::select_answer(candidates, verify::VerificationMethod::jcd,
                                               sample.question, clients);
  std::cout << "answer:   " << answer << " (jcd " << score << ")\n";
  std::cout << "tokens:   " << result.tokens_used << "\n\n";
  std::cout << tree::render_tree(searcher.tree());
  return 0;
}
