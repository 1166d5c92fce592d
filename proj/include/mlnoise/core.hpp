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

// Synthetic multi-label data, dataset loading and train/test splitting.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mlnoise/csv.hpp"
#include "mlnoise/matrix.hpp"
#include "mlnoise/rng.hpp"

namespace mlnoise {

struct Dataset {
  FeatureMatrix features;
  LabelMatrix labels;
};

/// Parameters of the synthetic generator. Each class owns a random prototype;
/// an example's features are the sum of its present classes' prototypes plus
/// isotropic noise.
struct SyntheticSpec {
  std::size_t n_examples = 4000;
  std::size_t n_features = 32;
  std::size_t n_classes = 12;
  double mean_labels_per_example = 1.5;
  double prototype_scale = 1.0;
  double feature_noise_std = 1.0;
  std::uint64_t seed = 0;
  // Optional per-class presence probabilities; overrides the uniform
  // presence derived from mean_labels_per_example.
  std::optional<std::vector<double>> class_presence;
};

inline void validate(const SyntheticSpec& spec) {
  if (spec.n_examples == 0 || spec.n_features == 0 || spec.n_classes == 0) {
    throw ValidationError("synthetic spec: dimensions must be positive");
  }
  if (!(spec.mean_labels_per_example > 0.0) ||
      spec.mean_labels_per_example > static_cast<double>(spec.n_classes)) {
    throw ValidationError("synthetic spec: mean_labels_per_example must be in (0, n_classes]");
  }
  if (!(spec.prototype_scale > 0.0) || !std::isfinite(spec.prototype_scale)) {
    throw ValidationError("synthetic spec: prototype_scale must be positive");
  }
  if (!(spec.feature_noise_std > 0.0) || !std::isfinite(spec.feature_noise_std)) {
    throw ValidationError("synthetic spec: feature_noise_std must be positive");
  }
  if (spec.class_presence) {
    if (spec.class_presence->size() != spec.n_classes) {
      throw ValidationError("synthetic spec: class_presence must have n_classes entries");
    }
    for (double p : *spec.class_presence) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw ValidationError("synthetic spec: class_presence entries must be in [0,1]");
      }
    }
  }
}

/// Per-class presence probability q such that the expected label count per
/// example, after one redraw of empty sets, equals `mean`:
///   C * q * (1 + (1 - q)^C) = mean.
/// The left side is strictly increasing in q on [0,1], so bisection applies.
inline double presence_probability_for_mean(double mean, std::size_t n_classes) {
  const double c = static_cast<double>(n_classes);
  auto expected = [c](double q) { return c * q * (1.0 + std::pow(1.0 - q, c)); };
  if (mean >= c) return 1.0;
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected(mid) < mean ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline Dataset make_synthetic_dataset(const SyntheticSpec& spec) {
  validate(spec);
  const std::size_t n = spec.n_examples;
  const std::size_t d = spec.n_features;
  const std::size_t n_classes = spec.n_classes;

  std::vector<double> presence(n_classes);
  if (spec.class_presence) {
    presence = *spec.class_presence;
  } else {
    const double q = presence_probability_for_mean(spec.mean_labels_per_example, n_classes);
    std::fill(presence.begin(), presence.end(), q);
  }

  Rng proto_rng(derive_seed(spec.seed, "prototypes"));
  FeatureMatrix prototypes(n_classes, d);
  for (double& v : prototypes.flat()) v = proto_rng.normal() * spec.prototype_scale;

  Rng label_rng(derive_seed(spec.seed, "labels"));
  Rng noise_rng(derive_seed(spec.seed, "features"));
  Dataset out{FeatureMatrix(n, d), LabelMatrix(n, n_classes)};
  for (std::size_t i = 0; i < n; ++i) {
    auto row = out.labels.row(i);
    for (int attempt = 0; attempt < 2; ++attempt) {
      bool any = false;
      for (std::size_t c = 0; c < n_classes; ++c) {
        row[c] = label_rng.bernoulli(presence[c]) ? 1 : 0;
        any = any || row[c];
      }
      if (any) break;
    }
    auto x = out.features.row(i);
    for (std::size_t j = 0; j < d; ++j) x[j] = noise_rng.normal() * spec.feature_noise_std;
    for (std::size_t c = 0; c < n_classes; ++c) {
      if (!row[c]) continue;
      auto proto = prototypes.row(c);
      for (std::size_t j = 0; j < d; ++j) x[j] += proto[j];
    }
  }
  return out;
}

/// Loads a features CSV and a labels CSV and checks that they pair up.
inline Dataset load_dataset(const std::filesystem::path& features_path,
                            const std::filesystem::path& labels_path) {
  Dataset ds{csv::read_real_matrix(features_path), csv::read_label_matrix(labels_path)};
  if (ds.features.rows() != ds.labels.rows()) {
    throw ValidationError("dimension mismatch: " + features_path.string() + " has " +
                          std::to_string(ds.features.rows()) + " rows but " +
                          labels_path.string() + " has " + std::to_string(ds.labels.rows()));
  }
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& features_path,
                         const std::filesystem::path& labels_path) {
  csv::write_matrix(features_path, ds.features);
  csv::write_matrix(labels_path, ds.labels);
}

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

/// Seeded random partition; the test part holds round(test_fraction * N) rows.
inline Split train_test_split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError("test_fraction must be in (0,1)");
  }
  require_same_shape(data.features.rows(), 1, data.labels.rows(), 1, "train_test_split");
  const std::size_t n = data.labels.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(std::span<std::size_t>(order));

  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  Split s;
  s.test_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  s.train = {data.features.gather_rows(s.train_rows), data.labels.gather_rows(s.train_rows)};
  s.test = {data.features.gather_rows(s.test_rows), data.labels.gather_rows(s.test_rows)};
  return s;
}

}  // namespace mlnoise
