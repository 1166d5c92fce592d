// Copyright 2026 The mlnoise Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Experiment grid over methods x noise types x noise rates x seeds, with
// per-epoch evaluation on a clean test split and CSV outputs for tables and
// plots.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "mlnoise/config.hpp"
#include "mlnoise/core.hpp"
#include "mlnoise/csv.hpp"
#include "mlnoise/matrix.hpp"
#include "mlnoise/metrics.hpp"
#include "mlnoise/nn.hpp"
#include "mlnoise/noise.hpp"
#include "mlnoise/objectives.hpp"
#include "mlnoise/rng.hpp"

namespace mlnoise {

// Single run ----------------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  MetricsReport test;
};

struct RunResult {
  Method method = Method::bce;
  NoiseType noise_type = NoiseType::mixed;
  double noise_rate = 0.0;
  std::uint64_t seed = 0;
  double best_map_micro = 0.0;
  double best_map_macro = 0.0;
  double f1_micro_at_best = 0.0;
  double f1_macro_at_best = 0.0;
  std::size_t best_epoch = 0;
  double final_train_loss = 0.0;
  std::uint64_t noisy_labels_checksum = 0;  // not serialized

  auto key() const { return std::tuple(method, noise_type, noise_rate, seed); }
};

struct RunOutcome {
  RunResult result;
  std::vector<EpochLog> epochs;
  TrainState state;
};

/// Trains `method` on (train_x, train_y) for cfg.epochs and evaluates the
/// first network on the clean test set after every epoch. The best epoch is
/// the first one reaching the maximum test mAP-micro.
inline RunOutcome run_training(const Dataset& train, const Dataset& test, Method method,
                               const TrainConfig& cfg, const MethodConfig& mcfg) {
  validate(cfg);
  RunOutcome out;
  out.result.method = method;
  out.state = make_train_state(method, train.features.cols(), train.labels, cfg);
  out.result.noisy_labels_checksum = checksum(train.labels);
  bool have_best = false;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto er = train_epoch(train.features, train.labels, out.state, cfg, mcfg, epoch);
    if (!std::isfinite(er.mean_loss)) {
      throw Error("non-finite training loss at epoch " + std::to_string(epoch));
    }
    EpochLog log{epoch, lr_at_epoch(cfg, epoch), er.mean_loss,
                 evaluate(forward(out.state.net, test.features), test.labels)};
    auto& r = out.result;
    if (!have_best || log.test.map_micro > r.best_map_micro) {
      have_best = true;
      r.best_map_micro = log.test.map_micro;
      r.best_map_macro = log.test.map_macro;
      r.f1_micro_at_best = log.test.f1_micro;
      r.f1_macro_at_best = log.test.f1_macro;
      r.best_epoch = epoch;
    }
    r.final_train_loss = er.mean_loss;
    out.epochs.push_back(std::move(log));
  }
  return out;
}

/// Loads or generates the data and returns the clean train/test split.
inline Split prepare_data(const DatasetSource& src) {
  if (src.synthetic) {
    return train_test_split(make_synthetic_dataset(*src.synthetic), src.test_fraction,
                            derive_seed(src.synthetic->seed, "split") ^ src.split_seed);
  }
  Dataset all = load_dataset(src.features, src.labels);
  if (!src.test_features.empty()) {
    Split s;
    s.train = std::move(all);
    s.test = load_dataset(src.test_features, src.test_labels);
    if (s.test.features.cols() != s.train.features.cols() ||
        s.test.labels.cols() != s.train.labels.cols()) {
      throw ValidationError("train and test CSVs have different widths");
    }
    return s;
  }
  return train_test_split(all, src.test_fraction, src.split_seed);
}

// Grid ----------------------------------------------------------------------

/// Seed of one grid cell. Rate 0 involves no injection and is shared by all
/// noise types; the method never enters unless noise sharing is disabled.
inline std::uint64_t cell_seed(std::uint64_t seed, NoiseType type, double rate) {
  if (rate == 0.0) return derive_seed(seed, {hash_string("clean")});
  return derive_seed(seed, {hash_string(to_string(type)), std::bit_cast<std::uint64_t>(rate)});
}


struct GridOutput {
  std::vector<RunResult> results;
  std::vector<std::string> failures;
  std::uint64_t test_labels_checksum_before = 0;
  std::uint64_t test_labels_checksum_after = 0;
};

inline std::string result_row(const RunResult& r);
inline std::optional<RunResult> parse_result_row(const std::vector<std::string>& cells);

/// One cell of the grid for one method.
struct RunSpec {
  Method method = Method::bce;
  NoiseType noise_type = NoiseType::mixed;
  double rate = 0.0;
  std::uint64_t seed = 0;
};

inline std::string task_file_name(const RunSpec& t) {
  std::string name = std::string(to_string(t.method)) + "_" +
                     (t.rate == 0.0 ? std::string("clean") : std::string(to_string(t.noise_type))) +
                     "_" + csv::format_real(t.rate) + "_" + std::to_string(t.seed) + ".csv";
  return name;
}

/// Injects noise into the training labels of `data` (test labels stay clean)
/// and trains. The noise realization depends on (seed, noise type, rate) and,
/// only when noise sharing is off, on the method. An unset JoCoR tau becomes
/// the fraction of training label entries that were flipped.
inline RunOutcome execute_run(const Split& data, const RunSpec& spec, const ExperimentConfig& cfg) {
  std::uint64_t noise_seed = cell_seed(spec.seed, spec.noise_type, spec.rate);
  const std::uint64_t train_seed = derive_seed(noise_seed, "train");
  if (!cfg.share_noise_across_methods) {
    noise_seed = derive_seed(noise_seed, to_string(spec.method));
  }
  Dataset train{data.train.features, data.train.labels};
  double flipped_fraction = 0.0;
  if (spec.rate > 0.0) {
    auto noisy = inject_noise(data.train.labels, {spec.noise_type, spec.rate, noise_seed});
    flipped_fraction = static_cast<double>(noisy.report.total_flips()) /
                       static_cast<double>(noisy.labels.size());
    train.labels = std::move(noisy.labels);
  }
  TrainConfig tcfg = cfg.train;
  tcfg.seed = train_seed;
  MethodConfig mcfg{cfg.sat, cfg.elr, cfg.jocor};
  if (!mcfg.jocor.tau) mcfg.jocor.tau = std::min(flipped_fraction, 0.99);
  auto outcome = run_training(train, data.test, spec.method, tcfg, mcfg);
  outcome.result.noise_type = spec.noise_type;
  outcome.result.noise_rate = spec.rate;
  outcome.result.seed = spec.seed;
  return outcome;
}

inline void sort_results(std::vector<RunResult>& results) {
  std::stable_sort(results.begin(), results.end(),
                   [](const RunResult& a, const RunResult& b) { return a.key() < b.key(); });
}

/// Runs every cell of the grid. Runs may execute on several threads; the
/// returned table is sorted by (method, noise_type, rate, seed). Failed runs
/// are reported in `failures` and left out of the table.
inline GridOutput run_grid(const ExperimentConfig& cfg) {
  validate(cfg);
  const Split data = prepare_data(cfg.dataset);
  GridOutput out;
  out.test_labels_checksum_before = checksum(data.test.labels);

  std::vector<RunSpec> tasks;
  for (auto method : cfg.methods) {
    for (auto seed : cfg.seeds) {
      bool clean_done = false;
      for (auto type : cfg.noise_types) {
        for (double rate : cfg.noise_rates) {
          if (rate == 0.0) {
            if (clean_done) continue;
            clean_done = true;
          }
          tasks.push_back({method, type, rate, seed});
        }
      }
    }
  }

  const std::string fingerprint = cfg.output_dir.empty() ? "" : config_fingerprint(cfg);
  const auto run_dir = cfg.output_dir / "runs";
  std::vector<std::optional<RunResult>> slots(tasks.size());
  std::vector<std::string> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++) {
      const auto& task = tasks[k];
      try {
        std::filesystem::path cache;
        if (!cfg.output_dir.empty()) {
          cache = run_dir / task_file_name(task);
          if (std::filesystem::exists(cache)) {
            auto table = csv::read(cache);
            if (table.size() == 2 && table[0].size() == 1 && table[0][0] == fingerprint) {
              if (auto cached = parse_result_row(table[1])) {
                slots[k] = cached;
                continue;
              }
            }
          }
        }
        slots[k] = execute_run(data, task, cfg).result;
        if (!cache.empty()) csv::write_file_atomic(cache, fingerprint + "\n" + result_row(*slots[k]));
      } catch (const std::exception& e) {
        errors[k] = task_file_name(task) + ": " + e.what();
      }
    }
  };
  std::size_t n_threads = cfg.threads ? cfg.threads : std::thread::hardware_concurrency();
  n_threads = std::clamp<std::size_t>(n_threads, 1, tasks.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
  }

  for (std::size_t k = 0; k < tasks.size(); ++k) {
    if (!slots[k]) {
      out.failures.push_back(errors[k]);
      continue;
    }
    if (tasks[k].rate == 0.0) {
      for (auto type : cfg.noise_types) {
        RunResult r = *slots[k];
        r.noise_type = type;
        out.results.push_back(r);
      }
    } else {
      out.results.push_back(*slots[k]);
    }
  }
  sort_results(out.results);
  out.test_labels_checksum_after = checksum(data.test.labels);
  return out;
}

// Aggregation ---------------------------------------------------------------

inline constexpr std::size_t kScoreColumns = 4;
inline constexpr const char* kScoreNames[kScoreColumns] = {"map_micro", "map_macro", "f1_micro",
                                                          "f1_macro"};

inline std::array<double, kScoreColumns> scores_of(const RunResult& r) {
  return {r.best_map_micro, r.best_map_macro, r.f1_micro_at_best, r.f1_macro_at_best};
}

struct AggregateRow {
  Method method = Method::bce;
  NoiseType noise_type = NoiseType::mixed;
  double noise_rate = 0.0;
  std::size_t n_runs = 0;
  std::array<double, kScoreColumns> mean{};
  std::array<double, kScoreColumns> std{};  // sample standard deviation

  double mean_of(std::string_view metric) const {
    for (std::size_t k = 0; k < kScoreColumns; ++k) {
      if (metric == kScoreNames[k]) return mean[k];
    }
    throw ValidationError("unknown metric '" + std::string(metric) + "'");
  }
};

/// Mean and sample standard deviation per (method, noise_type, rate).
inline std::vector<AggregateRow> aggregate(std::vector<RunResult> results) {
  sort_results(results);
  std::vector<AggregateRow> rows;
  for (std::size_t begin = 0; begin < results.size();) {
    std::size_t end = begin;
    const auto& head = results[begin];
    while (end < results.size() && results[end].method == head.method &&
           results[end].noise_type == head.noise_type &&
           results[end].noise_rate == head.noise_rate) {
      ++end;
    }
    AggregateRow row{head.method, head.noise_type, head.noise_rate, end - begin, {}, {}};
    const double n = static_cast<double>(row.n_runs);
    for (std::size_t k = 0; k < kScoreColumns; ++k) {
      double sum = 0.0;
      for (std::size_t i = begin; i < end; ++i) sum += scores_of(results[i])[k];
      row.mean[k] = sum / n;
      double ss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const double dev = scores_of(results[i])[k] - row.mean[k];
        ss += dev * dev;
      }
      row.std[k] = row.n_runs > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
    rows.push_back(row);
    begin = end;
  }
  return rows;
}

inline const AggregateRow* find_row(const std::vector<AggregateRow>& rows, Method m, NoiseType t,
                                    double rate) {
  for (const auto& r : rows) {
    if (r.method == m && r.noise_type == t && r.noise_rate == rate) return &r;
  }
  return nullptr;
}

// CSV output ----------------------------------------------------------------

inline const char* kResultsHeader =
    "method,noise_type,noise_rate,seed,best_map_micro,best_map_macro,f1_micro_at_best,"
    "f1_macro_at_best,best_epoch,final_train_loss\n";

inline std::string result_row(const RunResult& r) {
  using csv::format_real;
  return std::string(to_string(r.method)) + "," + std::string(to_string(r.noise_type)) + "," +
         format_real(r.noise_rate) + "," + std::to_string(r.seed) + "," +
         format_real(r.best_map_micro) + "," + format_real(r.best_map_macro) + "," +
         format_real(r.f1_micro_at_best) + "," + format_real(r.f1_macro_at_best) + "," +
         std::to_string(r.best_epoch) + "," + format_real(r.final_train_loss) + "\n";
}

inline std::optional<RunResult> parse_result_row(const std::vector<std::string>& cells) {
  if (cells.size() != 10) return std::nullopt;
  try {
    RunResult r;
    r.method = parse_method(cells[0]);
    r.noise_type = parse_noise_type(cells[1]);
    r.noise_rate = csv::parse_real(cells[2], 0, 2, "run");
    r.seed = std::stoull(cells[3]);
    r.best_map_micro = csv::parse_real(cells[4], 0, 4, "run");
    r.best_map_macro = csv::parse_real(cells[5], 0, 5, "run");
    r.f1_micro_at_best = csv::parse_real(cells[6], 0, 6, "run");
    r.f1_macro_at_best = csv::parse_real(cells[7], 0, 7, "run");
    r.best_epoch = std::stoull(cells[8]);
    r.final_train_loss = csv::parse_real(cells[9], 0, 9, "run");
    return r;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::string results_csv(const std::vector<RunResult>& results) {
  std::string out = kResultsHeader;
  for (const auto& r : results) out += result_row(r);
  return out;
}

inline std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = "method,noise_type,noise_rate,n_runs";
  for (auto name : kScoreNames) out += std::string(",") + name + "_mean," + name + "_std";
  out += '\n';
  for (const auto& r : rows) {
    out += std::string(to_string(r.method)) + "," + std::string(to_string(r.noise_type)) + "," +
           csv::format_real(r.noise_rate) + "," + std::to_string(r.n_runs);
    for (std::size_t k = 0; k < kScoreColumns; ++k) {
      out += "," + csv::format_real(r.mean[k]) + "," + csv::format_real(r.std[k]);
    }
    out += '\n';
  }
  return out;
}

struct PlotData {
  std::string fig5;  // baseline: mAP micro/macro vs rate per noise type
  std::string fig6;  // baseline: mAP-micro and F1-micro vs rate per noise type
  std::string fig7;  // every method: score at rate minus score at rate 0
};

namespace detail {

inline std::vector<NoiseType> types_in(const std::vector<AggregateRow>& rows) {
  std::vector<NoiseType> types;
  for (const auto& r : rows) {
    if (std::find(types.begin(), types.end(), r.noise_type) == types.end()) {
      types.push_back(r.noise_type);
    }
  }
  std::sort(types.begin(), types.end());
  return types;
}

inline std::string baseline_curves(const std::vector<AggregateRow>& rows, Method baseline,
                                   std::initializer_list<const char*> metrics) {
  std::string out = "metric,noise_type,noise_rate,value\n";
  for (const char* metric : metrics) {
    for (const auto& r : rows) {
      if (r.method != baseline) continue;
      out += std::string(metric) + "," + std::string(to_string(r.noise_type)) + "," +
             csv::format_real(r.noise_rate) + "," + csv::format_real(r.mean_of(metric)) + "\n";
    }
  }
  return out;
}

}  // namespace detail

inline PlotData plot_data(const std::vector<AggregateRow>& rows, Method baseline) {
  if (std::none_of(rows.begin(), rows.end(),
                   [&](const AggregateRow& r) { return r.method == baseline; })) {
    throw ValidationError("plot data: no results for baseline method '" +
                          std::string(to_string(baseline)) + "'");
  }
  PlotData pd;
  pd.fig5 = detail::baseline_curves(rows, baseline, {"map_micro", "map_macro"});
  pd.fig6 = detail::baseline_curves(rows, baseline, {"map_micro", "f1_micro"});

  pd.fig7 = "method,noise_type,noise_rate,metric,drop\n";
  for (const auto& r : rows) {
    const auto* clean = find_row(rows, r.method, r.noise_type, 0.0);
    if (!clean) {
      throw ValidationError("plot data: missing rate-0 results for method " +
                            std::string(to_string(r.method)) + ", noise type " +
                            std::string(to_string(r.noise_type)));
    }
    for (const char* metric : {"map_micro", "map_macro"}) {
      pd.fig7 += std::string(to_string(r.method)) + "," + std::string(to_string(r.noise_type)) +
                 "," + csv::format_real(r.noise_rate) + "," + metric + "," +
                 csv::format_real(r.mean_of(metric) - clean->mean_of(metric)) + "\n";
    }
  }
  return pd;
}

inline void emit_plot_data(const std::vector<AggregateRow>& rows, Method baseline,
                           const std::filesystem::path& dir) {
  const auto pd = plot_data(rows, baseline);
  csv::write_file_atomic(dir / "fig5.csv", pd.fig5);
  csv::write_file_atomic(dir / "fig6.csv", pd.fig6);
  csv::write_file_atomic(dir / "fig7.csv", pd.fig7);
}

/// results.csv, aggregate.csv and fig5/6/7.csv under `dir`.
inline std::vector<AggregateRow> write_grid_outputs(const std::vector<RunResult>& results,
                                                    Method baseline,
                                                    const std::filesystem::path& dir) {
  const auto rows = aggregate(results);
  csv::write_file_atomic(dir / "results.csv", results_csv(results));
  csv::write_file_atomic(dir / "aggregate.csv", aggregate_csv(rows));
  emit_plot_data(rows, baseline, dir);
  return rows;
}

inline std::string epoch_log_csv(const std::vector<EpochLog>& logs) {
  std::string out =
      "epoch,learning_rate,train_loss,map_micro,map_macro,f1_micro,f1_macro,excluded_classes\n";
  for (const auto& l : logs) {
    out += std::to_string(l.epoch) + "," + csv::format_real(l.learning_rate) + "," +
           csv::format_real(l.train_loss) + "," + csv::format_real(l.test.map_micro) + "," +
           csv::format_real(l.test.map_macro) + "," + csv::format_real(l.test.f1_micro) + "," +
           csv::format_real(l.test.f1_macro) + "," +
           std::to_string(l.test.n_classes_excluded_from_macro) + "\n";
  }
  return out;
}

inline std::string metrics_csv(const MetricsReport& m) {
  return "map_micro,map_macro,f1_micro,f1_macro,excluded_classes\n" +
         csv::format_real(m.map_micro) + "," + csv::format_real(m.map_macro) + "," +
         csv::format_real(m.f1_micro) + "," + csv::format_real(m.f1_macro) + "," +
         std::to_string(m.n_classes_excluded_from_macro) + "\n";
}

inline std::string noise_report_csv(const NoiseReport& rep) {
  std::string out = "class_index,planned,performed_add,performed_sub,clamped\n";
  for (std::size_t c = 0; c < rep.planned.size(); ++c) {
    out += std::to_string(c) + "," + std::to_string(rep.planned[c]) + "," +
           std::to_string(rep.performed_add[c]) + "," + std::to_string(rep.performed_sub[c]) +
           "," + (rep.is_clamped(c) ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace mlnoise

