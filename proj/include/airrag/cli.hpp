#pragma once

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "airrag/actions.hpp"
#include "airrag/clients.hpp"
#include "airrag/eval.hpp"
#include "airrag/http_clients.hpp"
#include "airrag/simenv.hpp"
#include "airrag/tree.hpp"
#include "airrag/types.hpp"
#include "airrag/verify.hpp"

namespace airrag::cli {

/// Effective run configuration. Every field has both a flag and a config
/// file key; flags override file values.
struct RunConfig {
  std::string mode = "full";            // full | lite | blender
  int rollouts = 1;
  std::string n_preset = "uniform_n1";  // uniform_n1 | uniform_n3 | optimal
  bool q_div = false;
  std::int64_t l_max = 1000000;
  int k_docs = 5;
  std::uint64_t seed = 0;
  std::string method = "jcd";           // jcd | emb | sa_refine | reward_model | average
  std::string backend = "scripted";     // scripted | http
  int max_depth = 10;
  double exploration_weight = 1.4142135623730951;
  int max_qt_ra_iterations = 4;
  int jobs = 1;

  // scripted backend: a world file, or generation parameters
  std::string world_path;
  std::uint64_t world_seed = 1;
  int world_entities = 30;
  int world_max_hops = 3;
  int world_distractors = 0;

  // http backend
  std::string base_url = "http://127.0.0.1:8080";
  std::string api_key_env;
  std::string model;
  std::string embed_base_url;
  std::string embed_model;
  std::string retrieve_base_url;
  double timeout_seconds = 30.0;
  int max_retries = 3;
  std::string corpus_path;  // in-memory retrieval corpus instead of a retrieval service

  std::string templates_dir;

  // outputs
  std::string report_out = "eval_report.json";
  std::string csv_out = "eval_report.csv";
  std::string tree_out;
  std::string synth_out = "synthesis.jsonl";
  std::string blend_candidates_file;

  void validate() const {
    if (mode != "full" && mode != "lite" && mode != "blender")
      throw ConfigError("mode must be full, lite or blender");
    if (rollouts < 1) throw ConfigError("rollouts must be >= 1");
    if (n_preset != "uniform_n1" && n_preset != "uniform_n3" && n_preset != "optimal")
      throw ConfigError("n_preset must be uniform_n1, uniform_n3 or optimal");
    if (l_max < 1) throw ConfigError("l_max must be >= 1");
    if (k_docs < 1) throw ConfigError("k_docs must be >= 1");
    if (max_depth < 2) throw ConfigError("max_depth must be >= 2");
    if (!verify::method_from_name(method)) throw ConfigError("unknown method: " + method);
    if (backend != "scripted" && backend != "http")
      throw ConfigError("backend must be scripted or http");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
  }
};

inline actions::Mode parse_mode(const std::string& s) {
  if (s == "full") return actions::Mode::full;
  if (s == "lite") return actions::Mode::lite;
  if (s == "blender") return actions::Mode::blender;
  throw ConfigError("unknown mode: " + s);
}

inline actions::NPreset parse_preset(const std::string& s) {
  if (s == "uniform_n1") return actions::NPreset::uniform_n1;
  if (s == "uniform_n3") return actions::NPreset::uniform_n3;
  if (s == "optimal") return actions::NPreset::optimal;
  throw ConfigError("unknown n_preset: " + s);
}

inline nlohmann::ordered_json config_echo(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["mode"] = c.mode;
  j["rollouts"] = c.rollouts;
  j["n_preset"] = c.n_preset;
  j["q_div"] = c.q_div;
  j["l_max"] = c.l_max;
  j["k_docs"] = c.k_docs;
  j["seed"] = c.seed;
  j["method"] = c.method;
  j["backend"] = c.backend;
  j["max_depth"] = c.max_depth;
  j["exploration_weight"] = c.exploration_weight;
  j["max_qt_ra_iterations"] = c.max_qt_ra_iterations;
  j["jobs"] = c.jobs;
  if (c.backend == "scripted") {
    j["world_path"] = c.world_path;
    j["world_seed"] = c.world_seed;
    j["world_entities"] = c.world_entities;
    j["world_max_hops"] = c.world_max_hops;
    j["world_distractors"] = c.world_distractors;
  } else {
    j["base_url"] = c.base_url;
    j["model"] = c.model;
    j["embed_base_url"] = c.embed_base_url;
    j["retrieve_base_url"] = c.retrieve_base_url;
    j["corpus_path"] = c.corpus_path;
  }
  return j;
}

/// Everything a command needs to run searches.
struct Pipeline {
  eval::PipelineConfig config;
  clients::ClientSet clients;
  std::shared_ptr<const simenv::World> world;  // scripted backend only
};

inline Pipeline build_pipeline(const RunConfig& c) {
  c.validate();
  Pipeline p;

  p.config.action_config =
      actions::ActionConfig::with_preset(parse_preset(c.n_preset), parse_mode(c.mode), c.q_div);
  p.config.action_config.docs_per_retrieval = c.k_docs;
  p.config.action_config.max_depth = c.max_depth;
  p.config.action_config.max_qt_ra_iterations = c.max_qt_ra_iterations;
  if (!c.templates_dir.empty())
    p.config.action_config.templates = actions::PromptTemplates::from_dir(c.templates_dir);

  p.config.search.rollouts = c.rollouts;
  p.config.search.exploration_weight = c.exploration_weight;
  p.config.search.max_depth = c.max_depth;
  p.config.search.mode = parse_mode(c.mode);
  p.config.search.l_max = c.l_max;
  p.config.search.rng_seed = c.seed;
  p.config.method = *verify::method_from_name(c.method);

  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  p.config.jobs = std::min<int>(c.jobs, static_cast<int>(2 * hw));

  if (c.backend == "scripted") {
    auto world = std::make_shared<simenv::World>(
        c.world_path.empty()
            ? simenv::generate_world(c.world_seed, c.world_entities, c.world_max_hops,
                                     {c.world_distractors})
            : simenv::load_world(c.world_path));
    p.world = world;
    simenv::ScriptedModelOptions opts;
    opts.seed = c.seed;
    p.clients = simenv::make_world_clients(world, opts);
  } else {
    clients::HttpClientConfig chat_cfg;
    chat_cfg.base_url = c.base_url;
    chat_cfg.api_key_env = c.api_key_env;
    chat_cfg.model = c.model;
    chat_cfg.timeout_seconds = c.timeout_seconds;
    chat_cfg.max_retries = c.max_retries;
    p.clients.chat = std::make_shared<clients::HttpChatClient>(chat_cfg);

    if (!c.corpus_path.empty()) {
      p.clients.retriever =
          std::make_shared<clients::InMemoryRetriever>(clients::load_corpus_file(c.corpus_path));
    } else if (!c.retrieve_base_url.empty()) {
      clients::HttpClientConfig r = chat_cfg;
      r.base_url = c.retrieve_base_url;
      p.clients.retriever = std::make_shared<clients::HttpRetrieverClient>(r);
    } else {
      throw ConfigError("http backend requires corpus_path or retrieve_base_url");
    }

    if (!c.embed_base_url.empty()) {
      clients::HttpClientConfig e = chat_cfg;
      e.base_url = c.embed_base_url;
      e.model = c.embed_model;
      p.clients.embedder = std::make_shared<clients::HttpEmbeddingClient>(e);
    } else {
      p.clients.embedder = std::make_shared<clients::HashingEmbedder>(c.seed ^ 0x5eedull);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> load_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!text::trim(line).empty()) lines.push_back(line);
  }
  return lines;
}

inline void print_trajectory(std::ostream& out, const tree::Trajectory& t) {
  for (const auto& s : t.steps) {
    out << "  " << action_name(s.action) << ": "
        << text::truncate(text::collapse_whitespace(s.output_text), 100) << "\n";
  }
}

}  // namespace detail

/// Runs one question and prints the final answer, the chosen trajectory and
/// per-method scores, plus the reasoning tree. Exit codes: 0 answer
/// produced, 1 config/usage error, 2 budget exhausted without any answer.
inline int cmd_run(const std::string& question, const RunConfig& config, std::ostream& out,
                   std::ostream& err) {
  try {
    if (text::trim(question).empty()) throw ConfigError("question must be nonempty");
    Pipeline p = build_pipeline(config);

    tree::Searcher searcher(question, p.config.search, p.config.action_config, p.clients,
                            verify::make_consistency_verify_layer(p.clients));
    auto result = searcher.search();

    if (result.trajectories.empty()) {
      for (const auto& e : result.errors) err << "error: " << e << "\n";
      if (result.budget_exhausted) {
        err << "budget exhausted before any trajectory completed (used " << result.tokens_used
            << " of " << config.l_max << " tokens)\n";
        return 2;
      }
      err << "search produced no trajectories\n";
      return 1;
    }

    auto candidates = verify::candidates_from_trajectories(result.trajectories);
    verify::SelectionOptions opts;
    opts.seed = config.seed;
    opts.action_config = p.config.action_config;

    std::string answer;
    if (config.mode == "blender") {
      // Blender refinement: merge our candidates with externally supplied
      // answers through a final SA pass.
      std::vector<std::string> pool;
      for (const auto& c : candidates) pool.push_back(c.answer_text);
      if (!config.blend_candidates_file.empty())
        for (auto& line : detail::load_lines(config.blend_candidates_file))
          pool.push_back(std::move(line));
      answer = verify::sa_refine(pool, question, {}, p.clients, p.config.action_config);
    } else {
      answer = verify::select_answer(candidates, p.config.method, question, p.clients, opts).first;
    }

    out << "answer: " << answer << "\n";
    out << "tokens_used: " << result.tokens_used << " / " << config.l_max << "\n";
    out << "rollouts_completed: " << result.rollouts_completed << "\n";
    out << "candidates:\n";
    for (const auto& c : candidates) {
      out << "  [" << c.trajectory_id << "] "
          << text::truncate(text::collapse_whitespace(c.answer_text), 80);
      out << " (jcd=" << (c.jcd ? std::to_string(*c.jcd) : "-")
          << " emb=" << (c.emb ? std::to_string(*c.emb) : "-")
          << " rm=" << (c.rm ? std::to_string(*c.rm) : "-") << ")\n";
    }

    // Chosen trajectory: the candidate whose answer matches the final one,
    // falling back to the first candidate.
    const tree::Trajectory* chosen = &result.trajectories.front();
    for (const auto& t : result.trajectories)
      if (text::normalize_state(t.answer) == text::normalize_state(answer)) {
        chosen = &t;
        break;
      }
    out << "chosen trajectory [" << chosen->id << "]:\n";
    detail::print_trajectory(out, *chosen);

    out << "tree:\n" << tree::render_tree(searcher.tree());

    if (!config.tree_out.empty()) {
      std::ofstream tf(config.tree_out);
      if (!tf) throw ConfigError("cannot write tree file: " + config.tree_out);
      tf << tree::trace_json(question, searcher.tree(), result.trajectories).dump(2) << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

/// Evaluates a dataset: writes the JSON report and CSV table, prints
/// aggregate EM/F1/Acc.
inline int cmd_eval(const std::string& dataset_path, const RunConfig& config, std::ostream& out,
                    std::ostream& err) {
  try {
    auto dataset = eval::load_dataset_file(dataset_path);
    if (dataset.empty()) throw ConfigError("dataset is empty: " + dataset_path);
    Pipeline p = build_pipeline(config);
    auto report = eval::evaluate(dataset, p.config, p.clients, config_echo(config));

    if (!config.report_out.empty()) {
      std::ofstream rf(config.report_out);
      if (!rf) throw ConfigError("cannot write report file: " + config.report_out);
      rf << eval::report_to_json(report).dump(2) << "\n";
    }
    if (!config.csv_out.empty()) {
      std::ofstream cf(config.csv_out);
      if (!cf) throw ConfigError("cannot write csv file: " + config.csv_out);
      cf << eval::report_to_csv(report);
    }
    out << "samples: " << report.per_sample.size() << "\n";
    out << "em: " << report.mean_em << "\n";
    out << "f1: " << report.mean_f1 << "\n";
    out << "acc: " << report.mean_acc << "\n";
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

/// Runs searches in synthesis mode (gold-coverage rewards) and writes the
/// reward-model training records.
inline int cmd_synth(const std::string& dataset_path, const RunConfig& config, std::ostream& out,
                     std::ostream& err) {
  try {
    auto dataset = eval::load_dataset_file(dataset_path);
    if (dataset.empty()) throw ConfigError("dataset is empty: " + dataset_path);
    Pipeline p = build_pipeline(config);
    std::ofstream sink(config.synth_out);
    if (!sink) throw ConfigError("cannot write synthesis file: " + config.synth_out);
    int count = eval::run_synthesis(dataset, p.config, p.clients, sink);
    out << "records: " << count << "\n";
    out << "output: " << config.synth_out << "\n";
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace airrag::cli
