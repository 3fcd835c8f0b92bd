#pragma once

#include <atomic>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "airrag/actions.hpp"
#include "airrag/clients.hpp"
#include "airrag/metrics.hpp"
#include "airrag/text.hpp"
#include "airrag/tree.hpp"
#include "airrag/types.hpp"
#include "airrag/verify.hpp"

namespace airrag::eval {

// ---------------------------------------------------------------------------
// Dataset IO
// ---------------------------------------------------------------------------

/// Line-delimited records: {"id": ..., "question": ..., "answers": [...]}.
inline std::vector<QASample> load_dataset(std::istream& in) {
  std::vector<QASample> samples;
  std::string line;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    QASample s;
    s.id = j.at("id").get<std::string>();
    s.question = j.at("question").get<std::string>();
    s.gold_answers = j.at("answers").get<std::vector<std::string>>();
    if (s.gold_answers.empty()) throw ConfigError("dataset sample has no answers: " + s.id);
    if (!ids.insert(s.id).second) throw ConfigError("duplicate dataset id: " + s.id);
    samples.push_back(std::move(s));
  }
  return samples;
}

inline std::vector<QASample> load_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path);
  return load_dataset(in);
}

inline void save_dataset(const std::vector<QASample>& samples, std::ostream& out) {
  for (const auto& s : samples) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["question"] = s.question;
    j["answers"] = s.gold_answers;
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Pipeline configuration
// ---------------------------------------------------------------------------

struct PipelineConfig {
  tree::SearchConfig search;
  actions::ActionConfig action_config;
  verify::VerificationMethod method = verify::VerificationMethod::jcd;
  int jobs = 1;
};

/// Per-sample seed: mixes the run seed with the sample id so subsetting or
/// reordering a dataset does not shift other samples' randomness.
inline std::uint64_t sample_seed(std::uint64_t run_seed, const std::string& sample_id) {
  return text::mix64(run_seed ^ text::fnv1a(sample_id));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct SampleResult {
  std::string id;
  double em = 0.0;
  double f1 = 0.0;
  double acc = 0.0;
  std::int64_t tokens_used = 0;
  int rollouts_used = 0;
  std::string answer;
  std::string error;
};

struct EvalReport {
  std::vector<SampleResult> per_sample;
  double mean_em = 0.0;
  double mean_f1 = 0.0;
  double mean_acc = 0.0;
  nlohmann::ordered_json config_echo;
};

/// Canonical aggregate computation; tests recompute through this same
/// function so equality is exact.
inline void recompute_aggregates(EvalReport& report) {
  double em = 0.0, f1 = 0.0, acc = 0.0;
  for (const auto& s : report.per_sample) {
    em += s.em;
    f1 += s.f1;
    acc += s.acc;
  }
  double n = report.per_sample.empty() ? 1.0 : static_cast<double>(report.per_sample.size());
  report.mean_em = em / n;
  report.mean_f1 = f1 / n;
  report.mean_acc = acc / n;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["config"] = report.config_echo.is_null() ? nlohmann::ordered_json::object() : report.config_echo;
  j["aggregates"] = {{"samples", report.per_sample.size()},
                     {"em", report.mean_em},
                     {"f1", report.mean_f1},
                     {"acc", report.mean_acc}};
  auto& rows = j["per_sample"] = nlohmann::ordered_json::array();
  for (const auto& s : report.per_sample) {
    rows.push_back({{"id", s.id},
                    {"em", s.em},
                    {"f1", s.f1},
                    {"acc", s.acc},
                    {"tokens_used", s.tokens_used},
                    {"rollouts_used", s.rollouts_used},
                    {"answer", s.answer},
                    {"error", s.error}});
  }
  return j;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

/// Flat table export, one row per sample.
inline std::string report_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "id,em,f1,acc,tokens_used,rollouts_used,answer,error\n";
  out << std::setprecision(10);
  for (const auto& s : report.per_sample) {
    out << csv_escape(s.id) << ',' << s.em << ',' << s.f1 << ',' << s.acc << ',' << s.tokens_used
        << ',' << s.rollouts_used << ',' << csv_escape(s.answer) << ',' << csv_escape(s.error)
        << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Batch evaluation
// ---------------------------------------------------------------------------

namespace detail {

inline SampleResult evaluate_one(const QASample& sample, const PipelineConfig& pipeline,
                                 const clients::ClientSet& cs) {
  SampleResult row;
  row.id = sample.id;
  try {
    tree::SearchConfig search_cfg = pipeline.search;
    search_cfg.rng_seed = sample_seed(pipeline.search.rng_seed, sample.id);
    tree::Searcher searcher(sample.question, search_cfg, pipeline.action_config, cs,
                            verify::make_consistency_verify_layer(cs));
    auto result = searcher.search();
    row.tokens_used = result.tokens_used;
    row.rollouts_used = result.rollouts_completed;
    if (result.trajectories.empty()) {
      row.error = result.budget_exhausted ? "budget_exhausted"
                  : result.errors.empty() ? "no_trajectories"
                                          : result.errors.front();
      return row;
    }
    auto candidates = verify::candidates_from_trajectories(result.trajectories);
    if (pipeline.method == verify::VerificationMethod::average) {
      // Evaluation-only reading of the average baseline: score every
      // candidate against gold and report the mean.
      double em = 0.0, f1s = 0.0, acc = 0.0;
      for (const auto& c : candidates) {
        em += exact_match(c.answer_text, sample.gold_answers);
        f1s += f1(c.answer_text, sample.gold_answers);
        acc += accuracy_covered(c.answer_text, sample.gold_answers);
      }
      double n = static_cast<double>(candidates.size());
      row.em = em / n;
      row.f1 = f1s / n;
      row.acc = acc / n;
      row.answer = candidates.front().answer_text;
      return row;
    }
    verify::SelectionOptions opts;
    opts.seed = search_cfg.rng_seed;
    opts.action_config = pipeline.action_config;
    auto [answer, score] = verify::select_answer(candidates, pipeline.method, sample.question, cs, opts);
    (void)score;
    row.answer = answer;
    row.em = exact_match(answer, sample.gold_answers);
    row.f1 = f1(answer, sample.gold_answers);
    row.acc = accuracy_covered(answer, sample.gold_answers);
  } catch (const std::exception& e) {
    row.em = row.f1 = row.acc = 0.0;
    row.error = e.what();
  }
  return row;
}

}  // namespace detail

/// Runs search + answer selection per sample, each under a fresh budget and
/// tree. Per-sample failures are recorded with zero scores, never aborting
/// the batch. Samples may be processed concurrently (pipeline.jobs); report
/// assembly is a single merge point in dataset order, so reports are
/// byte-identical for a fixed seed and scripted clients.
inline EvalReport evaluate(const std::vector<QASample>& dataset, const PipelineConfig& pipeline,
                           const clients::ClientSet& cs,
                           nlohmann::ordered_json config_echo = {}) {
  if (dataset.empty()) throw ConfigError("evaluate: empty dataset");
  EvalReport report;
  report.config_echo = std::move(config_echo);
  report.per_sample.resize(dataset.size());

  int jobs = std::max(1, pipeline.jobs);
  jobs = std::min<int>(jobs, static_cast<int>(dataset.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < dataset.size(); ++i)
      report.per_sample[i] = detail::evaluate_one(dataset[i], pipeline, cs);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(jobs));
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&]() {
        for (;;) {
          std::size_t i = next.fetch_add(1);
          if (i >= dataset.size()) return;
          report.per_sample[i] = detail::evaluate_one(dataset[i], pipeline, cs);
        }
      });
    }
    for (auto& t : workers) t.join();
  }
  recompute_aggregates(report);
  return report;
}

// ---------------------------------------------------------------------------
// Reward-data synthesis runs
// ---------------------------------------------------------------------------

/// Runs every sample in synthesis mode (gold-coverage leaf rewards) and
/// appends the export records to the sink. Returns the record count.
inline int run_synthesis(const std::vector<QASample>& dataset, const PipelineConfig& pipeline,
                         const clients::ClientSet& cs, std::ostream& sink) {
  if (dataset.empty()) throw ConfigError("run_synthesis: empty dataset");
  int total = 0;
  for (const auto& sample : dataset) {
    if (sample.gold_answers.empty()) throw ConfigError("synthesis requires gold answers: " + sample.id);
    tree::SearchConfig search_cfg = pipeline.search;
    search_cfg.rng_seed = sample_seed(pipeline.search.rng_seed, sample.id);
    tree::Searcher searcher(sample.question, search_cfg, pipeline.action_config, cs,
                            verify::make_training_verify_layer(sample.gold_answers, cs));
    auto result = searcher.search();
    total += verify::export_synthesis_data(searcher.tree(), result.trajectories,
                                           sample.gold_answers, sink, sample.id);
  }
  return total;
}

}  // namespace airrag::eval
