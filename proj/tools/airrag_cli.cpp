#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "airrag/cli.hpp"
#include "airrag/simenv.hpp"

namespace {

/// Binds options so every flag has a config-file key (flag name with dashes
/// as underscores). Flags given on the command line override file values;
/// unknown file keys are rejected.
struct OptionBinder {
  CLI::App* cmd;
  std::string config_path;
  std::map<std::string, std::function<void(const nlohmann::json&)>> file_setters;

  explicit OptionBinder(CLI::App* c) : cmd(c) {
    cmd->add_option("--config", config_path, "JSON config file; flags override file values");
  }

  static std::string key_for(const std::string& flag) {
    std::string key = flag.substr(flag.find_first_not_of('-'));
    for (char& c : key)
      if (c == '-') c = '_';
    return key;
  }

  template <typename T>
  void option(const std::string& flag, T& field, const std::string& help) {
    CLI::Option* opt = cmd->add_option(flag, field, help);
    file_setters[key_for(flag)] = [opt, &field](const nlohmann::json& v) {
      if (opt->count() == 0) field = v.get<T>();
    };
  }

  void flag(const std::string& name, bool& field, const std::string& help) {
    CLI::Option* opt = cmd->add_flag(name, field, help);
    file_setters[key_for(name)] = [opt, &field](const nlohmann::json& v) {
      if (opt->count() == 0) field = v.get<bool>();
    };
  }

  void apply_config_file() const {
    if (config_path.empty()) return;
    std::ifstream in(config_path);
    if (!in) throw airrag::ConfigError("cannot open config file: " + config_path);
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
      throw airrag::ConfigError("config file must be a JSON object: " + config_path);
    for (const auto& [key, value] : doc.items()) {
      auto it = file_setters.find(key);
      if (it == file_setters.end()) throw airrag::ConfigError("unknown config key: " + key);
      it->second(value);
    }
  }
};

OptionBinder add_common_options(CLI::App* cmd, airrag::cli::RunConfig& cfg) {
  OptionBinder bind(cmd);
  bind.option("--mode", cfg.mode, "Action space: full, lite or blender");
  bind.option("--rollouts", cfg.rollouts, "MCTS rollouts per question");
  bind.option("--n-preset", cfg.n_preset,
              "Output-sequence preset: uniform_n1, uniform_n3, optimal");
  bind.flag("--q-div", cfg.q_div, "Diversity sampling for SAY/QT (top-p 1.0, temperature 1.0)");
  bind.option("--l-max", cfg.l_max, "Max input tokens across all rollouts of one question");
  bind.option("--k-docs", cfg.k_docs, "Documents per retrieval");
  bind.option("--seed", cfg.seed, "Random seed");
  bind.option("--method", cfg.method,
              "Answer selection: jcd, emb, sa_refine, reward_model, average");
  bind.option("--backend", cfg.backend, "scripted or http");
  bind.option("--max-depth", cfg.max_depth, "Maximum tree depth");
  bind.option("--exploration-weight", cfg.exploration_weight, "UCT exploration weight");
  bind.option("--max-qt-ra-iterations", cfg.max_qt_ra_iterations, "QT/RA iteration cap");
  bind.option("--jobs", cfg.jobs, "Parallel samples in eval");
  bind.option("--templates-dir", cfg.templates_dir, "Prompt template directory");

  bind.option("--world", cfg.world_path, "World file for the scripted backend");
  bind.option("--world-seed", cfg.world_seed, "Seed for generated worlds");
  bind.option("--world-entities", cfg.world_entities, "Entities in generated worlds");
  bind.option("--world-max-hops", cfg.world_max_hops, "Max hops in generated worlds");
  bind.option("--world-distractors", cfg.world_distractors,
              "Distractor docs per relation in generated worlds");

  bind.option("--base-url", cfg.base_url, "Chat completions base URL");
  bind.option("--api-key-env", cfg.api_key_env, "Env var holding the API key");
  bind.option("--model", cfg.model, "Model name");
  bind.option("--embed-base-url", cfg.embed_base_url, "Embedding service base URL");
  bind.option("--embed-model", cfg.embed_model, "Embedding model name");
  bind.option("--retrieve-base-url", cfg.retrieve_base_url, "Retrieval service base URL");
  bind.option("--corpus", cfg.corpus_path, "In-memory retrieval corpus file (doc_id<TAB>text)");
  bind.option("--timeout", cfg.timeout_seconds, "HTTP timeout in seconds");
  bind.option("--max-retries", cfg.max_retries, "HTTP retry cap");
  return bind;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AirRAG: MCTS over retrieval-augmented reasoning actions"};
  app.require_subcommand(1);

  airrag::cli::RunConfig cfg;

  // run
  auto* run = app.add_subcommand("run", "Answer one question and print the reasoning tree");
  std::string question;
  run->add_option("--question,question", question, "The question to answer")->required();
  auto run_bind = add_common_options(run, cfg);
  run_bind.option("--tree-out", cfg.tree_out, "Write the search trace JSON to this file");
  run_bind.option("--blend-candidates", cfg.blend_candidates_file,
                  "File of external candidate answers, one per line (blender mode)");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a dataset and write EM/F1/Acc reports");
  std::string dataset_path;
  ev->add_option("--dataset,dataset", dataset_path, "Dataset file (JSONL: id, question, answers)")
      ->required();
  auto ev_bind = add_common_options(ev, cfg);
  ev_bind.option("--report-out", cfg.report_out, "Report JSON path");
  ev_bind.option("--csv-out", cfg.csv_out, "Report CSV path");

  // synth
  auto* synth = app.add_subcommand("synth", "Export reward-model training records");
  std::string synth_dataset;
  synth->add_option("--dataset,dataset", synth_dataset, "Dataset file with gold answers")
      ->required();
  auto synth_bind = add_common_options(synth, cfg);
  synth_bind.option("--out", cfg.synth_out, "Synthesis records path (JSONL)");

  // world
  auto* world = app.add_subcommand("world", "Generate a synthetic world and optional dataset");
  std::string world_out, dataset_out;
  std::uint64_t gen_seed = 1;
  int gen_entities = 30, gen_max_hops = 3, gen_distractors = 0;
  world->add_option("--out", world_out, "World file to write")->required();
  world->add_option("--dataset-out", dataset_out, "Also write the world's questions as a dataset");
  world->add_option("--seed", gen_seed, "World seed");
  world->add_option("--entities", gen_entities, "Entity count");
  world->add_option("--max-hops", gen_max_hops, "Maximum hop count");
  world->add_option("--distractors", gen_distractors, "Distractor docs per relation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors exit 1; --help exits 0
  }

  try {
    if (run->parsed()) {
      run_bind.apply_config_file();
      return airrag::cli::cmd_run(question, cfg, std::cout, std::cerr);
    }
    if (ev->parsed()) {
      ev_bind.apply_config_file();
      return airrag::cli::cmd_eval(dataset_path, cfg, std::cout, std::cerr);
    }
    if (synth->parsed()) {
      synth_bind.apply_config_file();
      return airrag::cli::cmd_synth(synth_dataset, cfg, std::cout, std::cerr);
    }
    if (world->parsed()) {
      auto w = airrag::simenv::generate_world(gen_seed, gen_entities, gen_max_hops,
                                              {gen_distractors});
      airrag::simenv::save_world(w, world_out);
      std::cout << "world: " << world_out << " (" << w.entities.size() << " entities, "
                << w.relations.size() << " relations, " << w.docs.size() << " docs, "
                << w.questions.size() << " questions)\n";
      if (!dataset_out.empty()) {
        std::ofstream out(dataset_out);
        if (!out) throw airrag::ConfigError("cannot write dataset file: " + dataset_out);
        airrag::eval::save_dataset(airrag::simenv::dataset_from_world(w), out);
        std::cout << "dataset: " << dataset_out << "\n";
      }
      return 0;
    }
  } catch (const airrag::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
