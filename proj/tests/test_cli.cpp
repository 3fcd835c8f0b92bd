#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "airrag/cli.hpp"
#include "airrag/simenv.hpp"

using namespace airrag;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

cli::RunConfig scripted_config(const std::string& world_path) {
  cli::RunConfig cfg;
  cfg.backend = "scripted";
  cfg.world_path = world_path;
  cfg.report_out = "";
  cfg.csv_out = "";
  return cfg;
}

}  // namespace

TEST_CASE("run answers a known-world question and prints the tree") {
  TempFile world_file("cli_world.json");
  auto w = simenv::generate_world(51, 16, 2);
  simenv::save_world(w, world_file.path);

  auto cfg = scripted_config(world_file.path);
  cfg.rollouts = 2;
  cfg.k_docs = 200;
  std::ostringstream out, err;
  const auto& q = w.questions.front();
  int code = cli::cmd_run(q.sample.question, cfg, out, err);
  CHECK(code == 0);
  CHECK(text::contains(out.str(), "answer: " + q.sample.gold_answers[0]));
  CHECK(text::contains(out.str(), "ROOT"));
  CHECK(text::contains(out.str(), "chosen trajectory"));
}

TEST_CASE("run reproduces the covered-bridge walkthrough on a crafted world") {
  // A hand-written world whose question text does not follow the generated
  // grammar; the scripted model resolves it through the stored gold chain.
  simenv::World w;
  w.seed = 0;
  w.entities = {"Bartram's Covered Bridge", "Crum Creek", "Delaware River"};
  w.relations = {{"Bartram's Covered Bridge", "crossing", "Crum Creek"},
                 {"Crum Creek", "mouth", "Delaware River"}};
  for (std::size_t i = 0; i < w.relations.size(); ++i) {
    const auto& r = w.relations[i];
    w.docs.push_back({"d" + std::to_string(i),
                      "The " + r.predicate + " of " + r.subject + " is " + r.object + ".", 0.0});
  }
  simenv::WorldQuestion q;
  q.sample.id = "bridge";
  q.sample.question =
      "What is the mouth of watercourse for the body of water where Bartram's Covered Bridge is "
      "located?";
  q.sample.gold_answers = {"Delaware River"};
  q.hop_count = 2;
  q.gold_chain = {0, 1};
  q.norm_text = text::normalize_words(q.sample.question);
  w.questions.push_back(q);

  TempFile world_file("cli_bridge_world.json");
  simenv::save_world(w, world_file.path);

  auto cfg = scripted_config(world_file.path);
  cfg.rollouts = 4;
  cfg.k_docs = 10;
  cfg.method = "sa_refine";
  std::ostringstream out, err;
  int code = cli::cmd_run(q.sample.question, cfg, out, err);
  CHECK(code == 0);
  CHECK(text::contains(text::normalize_words(out.str()), "answer delaware river"));
}

TEST_CASE("lite mode traces contain no SAY step") {
  TempFile world_file("cli_lite_world.json");
  auto w = simenv::generate_world(52, 16, 2);
  simenv::save_world(w, world_file.path);

  auto cfg = scripted_config(world_file.path);
  cfg.mode = "lite";
  cfg.rollouts = 4;
  cfg.k_docs = 200;
  cfg.tree_out = "cli_lite_tree.json";
  TempFile tree_file(cfg.tree_out);
  std::ostringstream out, err;
  int code = cli::cmd_run(w.questions.back().sample.question, cfg, out, err);
  CHECK(code == 0);
  CHECK_FALSE(text::contains(out.str(), "SAY"));

  std::ifstream tf(tree_file.path);
  REQUIRE(tf.good());
  nlohmann::json trace;
  tf >> trace;
  for (const auto& n : trace["nodes"])
    if (!n["action"].is_null()) CHECK(n["action"].get<std::string>() != "SAY");
}

TEST_CASE("invalid configs exit with code 1") {
  cli::RunConfig cfg;
  cfg.rollouts = 0;
  std::ostringstream out, err;
  CHECK(cli::cmd_run("question", cfg, out, err) == 1);
  CHECK_FALSE(err.str().empty());

  cli::RunConfig bad_mode;
  bad_mode.mode = "fancy";
  CHECK(cli::cmd_run("question", bad_mode, out, err) == 1);

  cli::RunConfig ok;
  CHECK(cli::cmd_run("", ok, out, err) == 1);
}

TEST_CASE("budget exhaustion before any trajectory exits with code 2") {
  TempFile world_file("cli_budget_world.json");
  auto w = simenv::generate_world(53, 16, 2);
  simenv::save_world(w, world_file.path);

  auto cfg = scripted_config(world_file.path);
  cfg.l_max = 5;  // far below a single prompt
  std::ostringstream out, err;
  int code = cli::cmd_run(w.questions.front().sample.question, cfg, out, err);
  CHECK(code == 2);
  CHECK(text::contains(err.str(), "budget"));
}

TEST_CASE("eval writes report files and prints aggregates") {
  TempFile world_file("cli_eval_world.json");
  TempFile dataset_file("cli_eval_data.jsonl");
  TempFile report_file("cli_eval_report.json");
  TempFile csv_file("cli_eval_report.csv");

  auto w = simenv::generate_world(54, 20, 2);
  simenv::save_world(w, world_file.path);
  {
    std::ofstream out(dataset_file.path);
    eval::save_dataset(simenv::dataset_from_world(w, {}, 6), out);
  }

  auto cfg = scripted_config(world_file.path);
  cfg.k_docs = 500;
  cfg.report_out = report_file.path;
  cfg.csv_out = csv_file.path;
  std::ostringstream out, err;
  int code = cli::cmd_eval(dataset_file.path, cfg, out, err);
  CHECK(code == 0);
  CHECK(text::contains(out.str(), "acc: 1"));

  std::ifstream rf(report_file.path);
  REQUIRE(rf.good());
  nlohmann::json report;
  rf >> report;
  CHECK(report["per_sample"].size() == 6);
  CHECK(report["config"]["mode"] == "full");

  std::ifstream cf(csv_file.path);
  std::string header;
  std::getline(cf, header);
  CHECK(header == "id,em,f1,acc,tokens_used,rollouts_used,answer,error");

  SUBCASE("unreadable datasets exit with code 1") {
    CHECK(cli::cmd_eval("no_such_file.jsonl", cfg, out, err) == 1);
  }
}

TEST_CASE("eval with a fixed seed writes identical report files across runs") {
  TempFile world_file("cli_det_world.json");
  TempFile dataset_file("cli_det_data.jsonl");
  TempFile r1("cli_det_r1.json"), c1("cli_det_r1.csv");
  TempFile r2("cli_det_r2.json"), c2("cli_det_r2.csv");

  auto w = simenv::generate_world(57, 24, 3, {2});
  simenv::save_world(w, world_file.path);
  {
    std::ofstream out(dataset_file.path);
    eval::save_dataset(simenv::dataset_from_world(w, {}, 8), out);
  }

  auto cfg = scripted_config(world_file.path);
  cfg.rollouts = 2;
  cfg.n_preset = "optimal";
  cfg.q_div = true;
  cfg.seed = 13;
  cfg.k_docs = 4;

  auto read_file = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };

  std::ostringstream out, err;
  cfg.report_out = r1.path;
  cfg.csv_out = c1.path;
  REQUIRE(cli::cmd_eval(dataset_file.path, cfg, out, err) == 0);
  cfg.report_out = r2.path;
  cfg.csv_out = c2.path;
  REQUIRE(cli::cmd_eval(dataset_file.path, cfg, out, err) == 0);

  CHECK(read_file(r1.path) == read_file(r2.path));
  CHECK(read_file(c1.path) == read_file(c2.path));
  CHECK_FALSE(read_file(r1.path).empty());
}

TEST_CASE("synth writes labeled records") {
  TempFile world_file("cli_synth_world.json");
  TempFile dataset_file("cli_synth_data.jsonl");
  TempFile synth_file("cli_synth_out.jsonl");

  auto w = simenv::generate_world(55, 16, 2);
  simenv::save_world(w, world_file.path);
  {
    std::ofstream out(dataset_file.path);
    eval::save_dataset(simenv::dataset_from_world(w, {}, 4), out);
  }

  auto cfg = scripted_config(world_file.path);
  cfg.rollouts = 2;
  cfg.k_docs = 500;
  cfg.synth_out = synth_file.path;
  std::ostringstream out, err;
  int code = cli::cmd_synth(dataset_file.path, cfg, out, err);
  CHECK(code == 0);
  CHECK(text::contains(out.str(), "records: "));

  std::ifstream sf(synth_file.path);
  std::string line;
  int rows = 0;
  while (std::getline(sf, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("steps"));
    CHECK(j.contains("label"));
    ++rows;
  }
  CHECK(rows >= 4);
}

TEST_CASE("blender mode refines over external candidates") {
  TempFile world_file("cli_blend_world.json");
  TempFile cands_file("cli_blend_cands.txt");
  auto w = simenv::generate_world(56, 16, 3);
  simenv::save_world(w, world_file.path);

  const simenv::WorldQuestion* q3 = nullptr;
  for (const auto& q : w.questions)
    if (q.hop_count == 3) q3 = &q;
  REQUIRE(q3 != nullptr);

  // External candidates carry the gold answer; the pipeline's own DA path
  // alone cannot reach it on a 3-hop question with retrieval starved.
  {
    std::ofstream out(cands_file.path);
    out << "some wrong guess\n" << q3->sample.gold_answers[0] << "\n";
  }
  auto cfg = scripted_config(world_file.path);
  cfg.mode = "blender";
  cfg.rollouts = 1;
  cfg.k_docs = 1;
  cfg.seed = 3;
  cfg.blend_candidates_file = cands_file.path;
  std::ostringstream out, err;
  int code = cli::cmd_run(q3->sample.question, cfg, out, err);
  CHECK(code == 0);
  CHECK(text::contains(text::normalize_words(out.str()),
                       "answer " + text::normalize_words(q3->sample.gold_answers[0])));
}
