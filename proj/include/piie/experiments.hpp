#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "piie/checkpoint.hpp"
#include "piie/corpus.hpp"
#include "piie/metrics.hpp"
#include "piie/model.hpp"
#include "piie/report.hpp"
#include "piie/trainer.hpp"

namespace piie {

struct Benchmark {
  Corpus source_train, source_test, target_train, target_test;
};

// Source: fold 0 of a seeded 5-fold split is the test set. Target: the first
// `target_train` sentences train, the rest test.
inline Benchmark split_benchmark(const Corpus& source, const Corpus& target, std::uint64_t seed,
                                 std::size_t target_train = 100) {
  if (source.size() < 5) throw ContractError("source corpus needs at least 5 sentences");
  if (target.size() <= target_train)
    throw ContractError("target corpus of " + std::to_string(target.size()) + " sentences leaves no test set after " +
                        std::to_string(target_train) + " training sentences");
  Benchmark b;
  const auto folds = kfold_split(source.size(), 5, seed);
  b.source_train = select(source, folds.complement(0));
  b.source_test = select(source, folds.indices(0));
  b.target_train.assign(target.begin(), target.begin() + static_cast<std::ptrdiff_t>(target_train));
  b.target_test.assign(target.begin() + static_cast<std::ptrdiff_t>(target_train), target.end());
  return b;
}

// One row of an experiment table.
struct ExperimentRow {
  std::string domain;  // "Source" or "Target"
  std::string label;   // method or dropped layer(s)
  std::string config;  // ModelConfig::label()
  MetricsReport metrics;
  double train_seconds = 0.0;
};

inline nlohmann::json default_target_overrides() { return {{"dev_fraction", 0.0}, {"epochs", 50}}; }

struct ExperimentOptions {
  std::vector<std::uint64_t> seeds{7};
  std::uint64_t split_seed = 7;
  std::size_t target_train = 100;
  std::size_t threads = 1;
  bool freeze = true;
  std::optional<std::size_t> fine_tune_epoch;
  // Config keys applied on top of every target-domain run. The default is a
  // fixed 50-epoch budget: a 10% dev split of 100 sentences is too small to
  // stop on.
  nlohmann::json target_overrides = default_target_overrides();
  std::function<void(const std::string&)> progress;
};

struct ExperimentTable {
  std::vector<ExperimentRow> rows;                   // averaged over seeds
  std::vector<std::vector<ExperimentRow>> per_seed;  // in seed order
  std::string label_header = "Method";

  const ExperimentRow& row(std::string_view domain, std::string_view label) const {
    for (const auto& r : rows)
      if (r.domain == domain && r.label == label) return r;
    throw ContractError("no row " + std::string(domain) + " / " + std::string(label));
  }

  std::string text() const {
    std::vector<std::vector<std::string>> cells;
    std::string last;
    for (const auto& r : rows) {
      cells.push_back({r.domain == last ? "" : r.domain, r.label, percent(r.metrics.accuracy),
                       percent(r.metrics.precision), percent(r.metrics.recall), percent(r.metrics.f1)});
      last = r.domain;
    }
    return format_table({"Domain", label_header, "A", "P", "R", "F1"}, cells);
  }

  std::vector<ReportRecord> records() const {
    std::vector<ReportRecord> out;
    for (const auto& r : rows)
      out.push_back(ReportRecord::from_metrics(r.domain, r.label + " [" + r.config + "]", r.metrics));
    return out;
  }
};

inline MetricsReport average(const std::vector<MetricsReport>& reports) {
  MetricsReport avg;
  if (reports.empty()) return avg;
  const double k = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    avg.accuracy += r.accuracy / k;
    avg.precision += r.precision / k;
    avg.recall += r.recall / k;
    avg.f1 += r.f1 / k;
    avg.tp += r.tp;
    avg.fp += r.fp;
    avg.fn += r.fn;
    avg.tokens += r.tokens;
    avg.correct_tokens += r.correct_tokens;
    for (std::size_t c = 0; c < category_count; ++c) {
      auto& a = avg.per_category[c];
      const auto& s = r.per_category[c];
      a.precision += s.precision / k;
      a.recall += s.recall / k;
      a.f1 += s.f1 / k;
      a.tp += s.tp;
      a.fp += s.fp;
      a.fn += s.fn;
    }
  }
  return avg;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
// is rethrown after all workers finish.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// A source-domain training run.
struct SourceJob {
  std::string label;
  ModelConfig cfg;
};

// A target-domain run, either transferred from a source job or from scratch.
struct TargetJob {
  std::string label;
  ModelConfig cfg;
  std::optional<std::size_t> source;  // index into the source jobs
};

struct SuiteSpec {
  std::vector<SourceJob> sources;
  std::vector<TargetJob> targets;
  // Source jobs trained only to feed a transfer are not reported.
  std::vector<bool> report_source;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::vector<ExperimentRow> run_suite_once(const Benchmark& bench, const SuiteSpec& spec, std::uint64_t seed,
                                                 const ExperimentOptions& opt) {
  auto note = [&](const std::string& s) {
    if (opt.progress) opt.progress("seed " + std::to_string(seed) + ": " + s);
  };
  std::vector<Checkpoint> ckpts(spec.sources.size());
  std::vector<ExperimentRow> source_rows(spec.sources.size());
  parallel_for(spec.sources.size(), opt.threads, [&](std::size_t i) {
    ModelConfig cfg = spec.sources[i].cfg;
    cfg.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult r;
    Model m = fit(bench.source_train, cfg, {}, &r);
    const double secs = seconds_since(t0);
    source_rows[i] = {"Source", spec.sources[i].label, cfg.label(), evaluate(m, bench.source_test), secs};
    ckpts[i] = make_checkpoint(m, provenance_of("source", r));
    note("source " + spec.sources[i].label + " F1 " + percent(source_rows[i].metrics.f1));
  });
  std::vector<ExperimentRow> target_rows(spec.targets.size());
  parallel_for(spec.targets.size(), opt.threads, [&](std::size_t i) {
    const auto& job = spec.targets[i];
    ModelConfig cfg = ModelConfig::from_json(opt.target_overrides, job.cfg);
    cfg.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    Model m = [&] {
      if (!job.source) return fit(bench.target_train, cfg);
      TransferPlan plan = TransferPlan::for_config(cfg);
      plan.set_freeze(opt.freeze);
      plan.fine_tune_epoch = opt.fine_tune_epoch;
      Model t = transfer(ckpts[*job.source], plan, cfg, bench.target_train);
      train_model(t, bench.target_train);
      return t;
    }();
    target_rows[i] = {"Target", job.label, cfg.label(), evaluate(m, bench.target_test), seconds_since(t0)};
    note("target " + job.label + " F1 " + percent(target_rows[i].metrics.f1));
  });
  std::vector<ExperimentRow> rows;
  for (std::size_t i = 0; i < source_rows.size(); ++i)
    if (spec.report_source.empty() || spec.report_source[i]) rows.push_back(source_rows[i]);
  rows.insert(rows.end(), target_rows.begin(), target_rows.end());
  return rows;
}

}  // namespace detail

inline ExperimentTable run_suite(const Corpus& source, const Corpus& target, const SuiteSpec& spec,
                                 const ExperimentOptions& opt) {
  if (opt.seeds.empty()) throw ContractError("experiment needs at least one seed");
  const Benchmark bench = split_benchmark(source, target, opt.split_seed, opt.target_train);
  ExperimentTable table;
  for (auto seed : opt.seeds) table.per_seed.push_back(detail::run_suite_once(bench, spec, seed, opt));
  for (std::size_t r = 0; r < table.per_seed.front().size(); ++r) {
    std::vector<MetricsReport> ms;
    double secs = 0.0;
    for (const auto& run : table.per_seed) {
      ms.push_back(run[r].metrics);
      secs += run[r].train_seconds;
    }
    ExperimentRow row = table.per_seed.front()[r];
    row.metrics = average(ms);
    row.train_seconds = secs / static_cast<double>(ms.size());
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace ablation {
inline constexpr std::string_view drop_gcn = "PII-GCN + Dependency Graph";
inline constexpr std::string_view drop_transformer = "Transformer";
inline constexpr std::string_view none = "None";
inline constexpr std::string_view drop_dtl = "DTL";
}  // namespace ablation

// Three source rows and four target rows, each differing from the full
// model by one component. "Transformer" rows swap in the Bi-LSTM encoder;
// the "DTL" row trains the full architecture on the target data alone.
inline ExperimentTable ablate(const Corpus& source, const Corpus& target, const ModelConfig& base,
                              const ExperimentOptions& opt = {}) {
  ModelConfig no_gcn = base;
  no_gcn.use_gcn = false;
  ModelConfig bilstm = base;
  bilstm.encoder = EncoderKind::bilstm;
  SuiteSpec spec;
  spec.sources = {{std::string(ablation::drop_gcn), no_gcn},
                  {std::string(ablation::drop_transformer), bilstm},
                  {std::string(ablation::none), base}};
  spec.targets = {{std::string(ablation::drop_gcn), no_gcn, 0},
                  {std::string(ablation::drop_transformer), bilstm, 1},
                  {std::string(ablation::none), base, 2},
                  {std::string(ablation::drop_dtl), base, std::nullopt}};
  auto table = run_suite(source, target, spec, opt);
  table.label_header = "Dropped Layer(s)";
  return table;
}

namespace baseline {
inline constexpr std::string_view bilstm_crf = "Bi-LSTM + CRF";
inline constexpr std::string_view transformer_softmax = "Transformer + SoftMax";
inline constexpr std::string_view bilstm_crf_transfer = "Bi-LSTM + CRF + Transfer";
inline constexpr std::string_view dtl_piie = "DTL-PIIE";
}  // namespace baseline

// Baseline comparison on both domains. Target Transformer + SoftMax is
// trained on the target data alone.
inline ExperimentTable compare_baselines(const Corpus& source, const Corpus& target, const ModelConfig& base,
                                         const ExperimentOptions& opt = {}) {
  ModelConfig bilstm_crf = base;
  bilstm_crf.encoder = EncoderKind::bilstm;
  bilstm_crf.use_gcn = false;
  bilstm_crf.decoder = DecoderKind::crf;
  ModelConfig softmax = base;
  softmax.encoder = EncoderKind::transformer;
  softmax.use_gcn = false;
  softmax.decoder = DecoderKind::softmax;
  SuiteSpec spec;
  spec.sources = {{std::string(baseline::bilstm_crf), bilstm_crf},
                  {std::string(baseline::transformer_softmax), softmax},
                  {std::string(baseline::dtl_piie), base}};
  spec.targets = {{std::string(baseline::transformer_softmax), softmax, std::nullopt},
                  {std::string(baseline::bilstm_crf_transfer), bilstm_crf, 0},
                  {std::string(baseline::dtl_piie), base, 2}};
  return run_suite(source, target, spec, opt);
}

}  // namespace piie
