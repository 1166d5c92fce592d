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

// Experiment configuration and its JSON form. JSON keys match the field
// names below; unknown keys are rejected so typos do not silently fall back
// to defaults.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlnoise/core.hpp"
#include "mlnoise/nn.hpp"
#include "mlnoise/noise.hpp"
#include "mlnoise/objectives.hpp"
#include "mlnoise/rng.hpp"

namespace mlnoise {

struct DatasetSource {
  std::optional<SyntheticSpec> synthetic = SyntheticSpec{};
  // CSV inputs, used when `synthetic` is empty. With test_features/test_labels
  // the split is taken as given; otherwise (features, labels) is split.
  std::filesystem::path features;
  std::filesystem::path labels;
  std::filesystem::path test_features;
  std::filesystem::path test_labels;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
};

struct ExperimentConfig {
  DatasetSource dataset;
  std::vector<Method> methods = {Method::bce};
  std::vector<NoiseType> noise_types = {NoiseType::additive, NoiseType::subtractive,
                                        NoiseType::mixed};
  std::vector<double> noise_rates = {0.0, 0.1, 0.3, 0.5, 0.7};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  TrainConfig train;
  SatConfig sat;
  ElrConfig elr;
  JoCorConfig jocor;
  bool share_noise_across_methods = true;
  std::filesystem::path output_dir;
  std::string baseline_method = "bce";
  std::size_t threads = 0;  // 0: hardware concurrency
};

inline void validate(const ExperimentConfig& cfg) {
  if (cfg.methods.empty() || cfg.noise_types.empty() || cfg.noise_rates.empty() ||
      cfg.seeds.empty()) {
    throw ValidationError("experiment config: need at least one method, noise type, rate and seed");
  }
  for (double r : cfg.noise_rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw ValidationError("experiment config: rates must be in [0,1]");
  }
  validate(cfg.train);
  if (cfg.dataset.synthetic) {
    validate(*cfg.dataset.synthetic);
  } else if (cfg.dataset.features.empty() || cfg.dataset.labels.empty()) {
    throw ValidationError("experiment config: dataset needs a synthetic spec or CSV paths");
  }
  parse_method(cfg.baseline_method);
}

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + "." + key + ": " + e.what());
  }
}

inline SyntheticSpec synthetic_from_json(const json& j) {
  check_keys(j, {"n_examples", "n_features", "n_classes", "mean_labels_per_example",
                 "prototype_scale", "feature_noise_std", "seed", "class_presence"},
             "dataset.synthetic");
  SyntheticSpec s;
  const std::string w = "dataset.synthetic";
  read_opt(j, "n_examples", s.n_examples, w);
  read_opt(j, "n_features", s.n_features, w);
  read_opt(j, "n_classes", s.n_classes, w);
  read_opt(j, "mean_labels_per_example", s.mean_labels_per_example, w);
  read_opt(j, "prototype_scale", s.prototype_scale, w);
  read_opt(j, "feature_noise_std", s.feature_noise_std, w);
  read_opt(j, "seed", s.seed, w);
  if (j.contains("class_presence") && !j.at("class_presence").is_null()) {
    std::vector<double> v;
    read_opt(j, "class_presence", v, w);
    s.class_presence = std::move(v);
  }
  return s;
}

inline json synthetic_to_json(const SyntheticSpec& s) {
  json j = {{"n_examples", s.n_examples},
            {"n_features", s.n_features},
            {"n_classes", s.n_classes},
            {"mean_labels_per_example", s.mean_labels_per_example},
            {"prototype_scale", s.prototype_scale},
            {"feature_noise_std", s.feature_noise_std},
            {"seed", s.seed}};
  if (s.class_presence) j["class_presence"] = *s.class_presence;
  return j;
}

template <typename E, typename Parse>
std::vector<E> enum_list(const json& j, const char* key, Parse parse) {
  std::vector<E> out;
  if (!j.at(key).is_array()) throw ValidationError(std::string(key) + ": expected an array");
  for (const auto& item : j.at(key)) {
    if (!item.is_string()) throw ValidationError(std::string(key) + ": expected strings");
    out.push_back(parse(item.get<std::string>()));
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::read_opt;
  detail::check_keys(j, {"dataset", "methods", "noise_types", "noise_rates", "seeds", "train",
                         "sat", "elr", "jocor", "share_noise_across_methods", "output_dir",
                         "baseline_method", "threads"},
                     "config");
  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    detail::check_keys(d, {"synthetic", "features", "labels", "test_features", "test_labels",
                           "test_fraction", "split_seed"},
                       "dataset");
    if (d.contains("synthetic")) {
      cfg.dataset.synthetic = detail::synthetic_from_json(d.at("synthetic"));
    } else if (d.contains("features")) {
      cfg.dataset.synthetic.reset();
    }
    std::string path;
    if (d.contains("features")) { read_opt(d, "features", path, "dataset"); cfg.dataset.features = path; }
    if (d.contains("labels")) { read_opt(d, "labels", path, "dataset"); cfg.dataset.labels = path; }
    if (d.contains("test_features")) {
      read_opt(d, "test_features", path, "dataset");
      cfg.dataset.test_features = path;
    }
    if (d.contains("test_labels")) {
      read_opt(d, "test_labels", path, "dataset");
      cfg.dataset.test_labels = path;
    }
    read_opt(d, "test_fraction", cfg.dataset.test_fraction, "dataset");
    read_opt(d, "split_seed", cfg.dataset.split_seed, "dataset");
  }
  if (j.contains("methods")) cfg.methods = detail::enum_list<Method>(j, "methods", parse_method);
  if (j.contains("noise_types")) {
    cfg.noise_types = detail::enum_list<NoiseType>(j, "noise_types", parse_noise_type);
  }
  read_opt(j, "noise_rates", cfg.noise_rates, "config");
  read_opt(j, "seeds", cfg.seeds, "config");
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::check_keys(t, {"epochs", "batch_size", "learning_rate", "lr_drop_epoch",
                           "lr_drop_factor", "weight_decay", "hidden_units"},
                       "train");
    read_opt(t, "epochs", cfg.train.epochs, "train");
    read_opt(t, "batch_size", cfg.train.batch_size, "train");
    read_opt(t, "learning_rate", cfg.train.learning_rate, "train");
    read_opt(t, "lr_drop_epoch", cfg.train.lr_drop_epoch, "train");
    read_opt(t, "lr_drop_factor", cfg.train.lr_drop_factor, "train");
    read_opt(t, "weight_decay", cfg.train.weight_decay, "train");
    read_opt(t, "hidden_units", cfg.train.hidden_units, "train");
  }
  if (j.contains("sat")) {
    const auto& s = j.at("sat");
    detail::check_keys(s, {"alpha", "warmup_epochs"}, "sat");
    read_opt(s, "alpha", cfg.sat.alpha, "sat");
    read_opt(s, "warmup_epochs", cfg.sat.warmup_epochs, "sat");
  }
  if (j.contains("elr")) {
    const auto& e = j.at("elr");
    detail::check_keys(e, {"lambda", "ema_beta", "target_mode"}, "elr");
    read_opt(e, "lambda", cfg.elr.lambda, "elr");
    read_opt(e, "ema_beta", cfg.elr.ema_beta, "elr");
    if (e.contains("target_mode")) {
      std::string mode;
      read_opt(e, "target_mode", mode, "elr");
      cfg.elr.target_mode = parse_elr_target_mode(mode);
    }
  }
  if (j.contains("jocor")) {
    const auto& c = j.at("jocor");
    detail::check_keys(c, {"lambda_j", "tau", "ramp_epochs"}, "jocor");
    read_opt(c, "lambda_j", cfg.jocor.lambda_j, "jocor");
    if (c.contains("tau") && !c.at("tau").is_null()) {
      double tau = 0.0;
      read_opt(c, "tau", tau, "jocor");
      cfg.jocor.tau = tau;
    }
    read_opt(c, "ramp_epochs", cfg.jocor.ramp_epochs, "jocor");
  }
  read_opt(j, "share_noise_across_methods", cfg.share_noise_across_methods, "config");
  if (j.contains("output_dir")) {
    std::string dir;
    read_opt(j, "output_dir", dir, "config");
    cfg.output_dir = dir;
  }
  read_opt(j, "baseline_method", cfg.baseline_method, "config");
  read_opt(j, "threads", cfg.threads, "config");
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(csv::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

/// JSON form of everything that affects run outcomes (no output_dir, no threads).
inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  using nlohmann::json;
  json ds = json::object();
  if (cfg.dataset.synthetic) {
    ds["synthetic"] = detail::synthetic_to_json(*cfg.dataset.synthetic);
  } else {
    ds["features"] = cfg.dataset.features.string();
    ds["labels"] = cfg.dataset.labels.string();
    if (!cfg.dataset.test_features.empty()) {
      ds["test_features"] = cfg.dataset.test_features.string();
      ds["test_labels"] = cfg.dataset.test_labels.string();
    }
  }
  ds["test_fraction"] = cfg.dataset.test_fraction;
  ds["split_seed"] = cfg.dataset.split_seed;
  json methods = json::array();
  for (auto m : cfg.methods) methods.push_back(std::string(to_string(m)));
  json types = json::array();
  for (auto t : cfg.noise_types) types.push_back(std::string(to_string(t)));
  json jocor = {{"lambda_j", cfg.jocor.lambda_j}, {"ramp_epochs", cfg.jocor.ramp_epochs}};
  jocor["tau"] = cfg.jocor.tau ? json(*cfg.jocor.tau) : json(nullptr);
  return {{"dataset", ds},
          {"methods", methods},
          {"noise_types", types},
          {"noise_rates", cfg.noise_rates},
          {"seeds", cfg.seeds},
          {"train",
           {{"epochs", cfg.train.epochs},
            {"batch_size", cfg.train.batch_size},
            {"learning_rate", cfg.train.learning_rate},
            {"lr_drop_epoch", cfg.train.lr_drop_epoch},
            {"lr_drop_factor", cfg.train.lr_drop_factor},
            {"weight_decay", cfg.train.weight_decay},
            {"hidden_units", cfg.train.hidden_units}}},
          {"sat", {{"alpha", cfg.sat.alpha}, {"warmup_epochs", cfg.sat.warmup_epochs}}},
          {"elr",
           {{"lambda", cfg.elr.lambda},
            {"ema_beta", cfg.elr.ema_beta},
            {"target_mode", std::string(to_string(cfg.elr.target_mode))}}},
          {"jocor", jocor},
          {"share_noise_across_methods", cfg.share_noise_across_methods},
          {"baseline_method", cfg.baseline_method}};
}

/// Identifies cached per-run results produced under the same configuration.
inline std::string config_fingerprint(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash_string(config_to_json(cfg).dump())));
  return std::string("config:") + buf;
}

}  // namespace mlnoise
