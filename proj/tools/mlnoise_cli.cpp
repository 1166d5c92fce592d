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

// Command-line front end: gen, inject, train, eval, grid, check.
// Exit codes: 0 success, 1 validation error, 2 partial grid failure.

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mlnoise.hpp"

namespace fs = std::filesystem;
using namespace mlnoise;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitPartial = 2;

struct GenOptions {
  SyntheticSpec spec;
  fs::path out = ".";
  double test_fraction = 0.0;
};

int run_gen(const GenOptions& o) {
  const Dataset ds = make_synthetic_dataset(o.spec);
  save_dataset(ds, o.out / "features.csv", o.out / "labels.csv");
  if (o.test_fraction > 0.0) {
    const Split s = train_test_split(ds, o.test_fraction, o.spec.seed);
    save_dataset(s.train, o.out / "train_features.csv", o.out / "train_labels.csv");
    save_dataset(s.test, o.out / "test_features.csv", o.out / "test_labels.csv");
  }
  std::cout << "wrote " << ds.labels.rows() << " examples to " << o.out << "\n";
  return kExitOk;
}

struct InjectOptions {
  fs::path labels;
  fs::path out = "noisy_labels.csv";
  fs::path report = "noise_report.csv";
  std::string type = "mixed";
  double rate = 0.0;
  std::uint64_t seed = 0;
};

int run_inject(const InjectOptions& o) {
  const LabelMatrix labels = csv::read_label_matrix(o.labels);
  const auto noisy = inject_noise(labels, {parse_noise_type(o.type), o.rate, o.seed});
  csv::write_matrix(o.out, noisy.labels);
  csv::write_file_atomic(o.report, noise_report_csv(noisy.report));
  if (!noisy.report.clamped_classes.empty()) {
    std::cerr << "warning: additive flips capped in " << noisy.report.clamped_classes.size()
              << " class(es)\n";
  }
  return kExitOk;
}

struct TrainOptions {
  fs::path config;
  fs::path features, labels, test_features, test_labels;
  std::string method = "bce";
  std::string noise_type = "mixed";
  double rate = 0.0;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  fs::path out = "run";
};

int run_train(const TrainOptions& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (!o.features.empty()) {
    cfg.dataset.synthetic.reset();
    cfg.dataset.features = o.features;
    cfg.dataset.labels = o.labels;
    cfg.dataset.test_features = o.test_features;
    cfg.dataset.test_labels = o.test_labels;
  }
  if (o.epochs) {
    cfg.train.epochs = *o.epochs;
    cfg.train.lr_drop_epoch = std::min(cfg.train.lr_drop_epoch, *o.epochs);
  }
  const std::uint64_t seed = o.seed.value_or(cfg.seeds.front());
  const Split data = prepare_data(cfg.dataset);

  const auto outcome = execute_run(
      data, {parse_method(o.method), parse_noise_type(o.noise_type), o.rate, seed}, cfg);

  csv::write_file_atomic(o.out / "metrics.csv",
                         std::string(kResultsHeader) + result_row(outcome.result));
  csv::write_file_atomic(o.out / "epochs.csv", epoch_log_csv(outcome.epochs));
  csv::write_matrix(o.out / "test_scores.csv", forward(outcome.state.net, data.test.features));
  csv::write_matrix(o.out / "test_labels.csv", data.test.labels);
  save_checkpoint(o.out / "checkpoint.csv", outcome.state.net);
  std::cout << "best mAP-micro " << outcome.result.best_map_micro << " at epoch "
            << outcome.result.best_epoch << "\n";
  return kExitOk;
}

struct EvalOptions {
  fs::path scores, labels;
  fs::path out = "metrics.csv";
  double threshold = 0.5;
};

int run_eval(const EvalOptions& o) {
  const ScoreMatrix scores = csv::read_real_matrix(o.scores);
  const LabelMatrix labels = csv::read_label_matrix(o.labels);
  for (double p : scores.flat()) {
    if (p < 0.0 || p > 1.0) throw ValidationError(o.scores.string() + ": scores must be in [0,1]");
  }
  const auto report = evaluate(scores, labels, o.threshold);
  csv::write_file_atomic(o.out, metrics_csv(report));
  std::cout << metrics_csv(report);
  return kExitOk;
}

struct GridOptions {
  fs::path config;
  fs::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

int run_grid_command(const GridOptions& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (cfg.output_dir.empty()) cfg.output_dir = "grid_out";
  if (o.seed) cfg.seeds = {*o.seed};
  if (o.threads) cfg.threads = *o.threads;
  const auto grid = run_grid(cfg);
  for (const auto& f : grid.failures) std::cerr << "run failed: " << f << "\n";
  if (grid.results.empty()) {
    std::cerr << "no run succeeded\n";
    return kExitPartial;
  }
  Method baseline = parse_method(cfg.baseline_method);
  if (std::find(cfg.methods.begin(), cfg.methods.end(), baseline) == cfg.methods.end()) {
    baseline = cfg.methods.front();
    std::cerr << "baseline " << cfg.baseline_method << " not in the grid; plotting "
              << to_string(baseline) << "\n";
  }
  write_grid_outputs(grid.results, baseline, cfg.output_dir);
  std::cout << "wrote " << grid.results.size() << " results to " << cfg.output_dir << "\n";
  return grid.failures.empty() ? kExitOk : kExitPartial;
}

int run_check() {
  bool all = true;
  for (const auto& r : run_self_check()) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << "\n";
    all = all && r.passed;
  }
  return all ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-label noise injection, noise-robust training and evaluation"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic multi-label dataset");
  gen_cmd->add_option("--n-examples", gen.spec.n_examples);
  gen_cmd->add_option("--n-features", gen.spec.n_features);
  gen_cmd->add_option("--n-classes", gen.spec.n_classes);
  gen_cmd->add_option("--mean-labels", gen.spec.mean_labels_per_example);
  gen_cmd->add_option("--prototype-scale", gen.spec.prototype_scale);
  gen_cmd->add_option("--feature-noise", gen.spec.feature_noise_std);
  gen_cmd->add_option("--seed", gen.spec.seed);
  gen_cmd->add_option("--out", gen.out, "Output directory");
  gen_cmd->add_option("--test-fraction", gen.test_fraction,
                      "Also write a train/test split with this test fraction");

  InjectOptions inj;
  auto* inj_cmd = app.add_subcommand("inject", "Inject class-wise label noise");
  inj_cmd->add_option("--labels", inj.labels)->required();
  inj_cmd->add_option("--out", inj.out);
  inj_cmd->add_option("--report", inj.report);
  inj_cmd->add_option("--type", inj.type)->check(CLI::IsMember({"additive", "subtractive", "mixed"}));
  inj_cmd->add_option("--rate", inj.rate)->required();
  inj_cmd->add_option("--seed", inj.seed);

  TrainOptions tr;
  auto* tr_cmd = app.add_subcommand("train", "Train a single run and log per-epoch metrics");
  tr_cmd->add_option("--config", tr.config, "JSON experiment config");
  tr_cmd->add_option("--features", tr.features);
  tr_cmd->add_option("--labels", tr.labels);
  tr_cmd->add_option("--test-features", tr.test_features);
  tr_cmd->add_option("--test-labels", tr.test_labels);
  tr_cmd->add_option("--method", tr.method)->check(CLI::IsMember({"bce", "sat", "elr", "jocor"}));
  tr_cmd->add_option("--noise-type", tr.noise_type);
  tr_cmd->add_option("--rate", tr.rate);
  tr_cmd->add_option("--seed", tr.seed);
  tr_cmd->add_option("--epochs", tr.epochs);
  tr_cmd->add_option("--out", tr.out, "Output directory");

  EvalOptions ev;
  auto* ev_cmd = app.add_subcommand("eval", "Evaluate a scores CSV against a labels CSV");
  ev_cmd->add_option("--scores", ev.scores)->required();
  ev_cmd->add_option("--labels", ev.labels)->required();
  ev_cmd->add_option("--out", ev.out);
  ev_cmd->add_option("--threshold", ev.threshold);

  GridOptions gr;
  auto* gr_cmd = app.add_subcommand("grid", "Run the full experiment grid");
  gr_cmd->add_option("--config", gr.config, "JSON experiment config");
  gr_cmd->add_option("--out", gr.out, "Output directory");
  gr_cmd->add_option("--seed", gr.seed, "Run a single seed");
  gr_cmd->add_option("--threads", gr.threads);

  app.add_subcommand("check", "Run the gradient and oracle self test");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*inj_cmd) return run_inject(inj);
    if (*tr_cmd) return run_train(tr);
    if (*ev_cmd) return run_eval(ev);
    if (*gr_cmd) return run_grid_command(gr);
    return run_check();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
