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

// Class-wise multi-label noise injection. The number of flipped entries per
// class is anchored to that class's count of present labels, so additive and
// subtractive noise at the same rate touch the same number of labels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mlnoise/matrix.hpp"
#include "mlnoise/rng.hpp"

namespace mlnoise {

enum class NoiseType { additive, subtractive, mixed };

inline std::string_view to_string(NoiseType t) {
  switch (t) {
    case NoiseType::additive: return "additive";
    case NoiseType::subtractive: return "subtractive";
    case NoiseType::mixed: return "mixed";
  }
  return "unknown";
}

inline NoiseType parse_noise_type(std::string_view s) {
  if (s == "additive") return NoiseType::additive;
  if (s == "subtractive") return NoiseType::subtractive;
  if (s == "mixed") return NoiseType::mixed;
  throw ValidationError("unknown noise type '" + std::string(s) + "'");
}

struct NoiseSpec {
  NoiseType noise_type = NoiseType::mixed;
  double rate = 0.0;
  std::uint64_t seed = 0;
};

/// Per-class accounting of one injection.
struct NoiseReport {
  std::vector<std::size_t> planned;        // k_c
  std::vector<std::size_t> performed_add;  // 0 -> 1 flips
  std::vector<std::size_t> performed_sub;  // 1 -> 0 flips
  std::vector<std::size_t> clamped_classes;

  bool is_clamped(std::size_t c) const {
    return std::find(clamped_classes.begin(), clamped_classes.end(), c) != clamped_classes.end();
  }

  std::size_t total_flips() const {
    std::size_t total = 0;
    for (auto v : performed_add) total += v;
    for (auto v : performed_sub) total += v;
    return total;
  }
};

inline std::vector<std::size_t> class_present_counts(const LabelMatrix& labels) {
  std::vector<std::size_t> counts(labels.cols(), 0);
  for (std::size_t i = 0; i < labels.rows(); ++i) {
    auto row = labels.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) counts[c] += row[c] ? 1 : 0;
  }
  return counts;
}

/// round(rate * present_count), halves rounded away from zero.
inline std::size_t planned_flips(std::size_t present_count, double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ValidationError("noise rate must be in [0,1]");
  return static_cast<std::size_t>(std::round(rate * static_cast<double>(present_count)));
}

namespace detail {

// Picks k distinct items uniformly from pool (partial Fisher-Yates).
inline void choose_k(std::vector<std::size_t>& pool, std::size_t k, Rng& rng) {
  for (std::size_t j = 0; j < k; ++j) {
    std::swap(pool[j], pool[j + rng.index(pool.size() - j)]);
  }
  pool.resize(k);
}

}  // namespace detail

struct NoisyLabels {
  LabelMatrix labels;
  NoiseReport report;
};

/// Injects noise class by class. Present and absent positions are gathered
/// from the input matrix before any flip, so in mixed mode both directions
/// are sized and sampled against the original labels.
inline NoisyLabels inject_noise(const LabelMatrix& labels, const NoiseSpec& spec) {
  validate_labels(labels);
  if (!(spec.rate >= 0.0 && spec.rate <= 1.0)) {
    throw ValidationError("noise rate must be in [0,1]");
  }
  const std::size_t n = labels.rows();
  const std::size_t n_classes = labels.cols();
  const bool add = spec.noise_type != NoiseType::subtractive;
  const bool sub = spec.noise_type != NoiseType::additive;

  NoisyLabels out{labels, {}};
  auto& rep = out.report;
  rep.planned.assign(n_classes, 0);
  rep.performed_add.assign(n_classes, 0);
  rep.performed_sub.assign(n_classes, 0);

  std::vector<std::size_t> present;
  std::vector<std::size_t> absent;
  for (std::size_t c = 0; c < n_classes; ++c) {
    present.clear();
    absent.clear();
    for (std::size_t i = 0; i < n; ++i) (labels(i, c) ? present : absent).push_back(i);
    const std::size_t k = planned_flips(present.size(), spec.rate);
    rep.planned[c] = k;
    if (k == 0) continue;

    // One stream per (seed, class, direction) keeps each class independent
    // of the others and of the noise type.
    if (sub) {
      Rng rng(derive_seed(spec.seed, {c, hash_string("subtractive")}));
      detail::choose_k(present, k, rng);
      for (auto i : present) out.labels(i, c) = 0;
      rep.performed_sub[c] = k;
    }
    if (add) {
      std::size_t k_add = k;
      if (k_add > absent.size()) {
        k_add = absent.size();
        rep.clamped_classes.push_back(c);
      }
      Rng rng(derive_seed(spec.seed, {c, hash_string("additive")}));
      detail::choose_k(absent, k_add, rng);
      for (auto i : absent) out.labels(i, c) = 1;
      rep.performed_add[c] = k_add;
    }
  }
  return out;
}

}  // namespace mlnoise
