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

// Ranking and threshold metrics for multi-label predictions.
//
// Average precision is the non-interpolated step area under the
// precision-recall curve: sum over positive hits of (R_k - R_{k-1}) * P_k.
// Scores are ranked in descending order, ties resolved by the lower index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "mlnoise/matrix.hpp"

namespace mlnoise {

/// Marker for an undefined average precision (no positive labels).
inline constexpr double kUndefinedAp = std::numeric_limits<double>::quiet_NaN();

inline bool is_defined(double ap) { return !std::isnan(ap); }

namespace detail {

inline std::vector<std::size_t> rank_descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

template <typename Label>
void require_same_length(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("scores and labels must have the same length");
  }
}

}  // namespace detail

/// Returns kUndefinedAp when there is no positive label.
inline double average_precision(std::span<const double> scores,
                                std::span<const std::uint8_t> labels) {
  detail::require_same_length(scores, labels);
  const auto positives = static_cast<std::size_t>(std::count_if(
      labels.begin(), labels.end(), [](std::uint8_t v) { return v != 0; }));
  if (positives == 0) return kUndefinedAp;
  const auto order = detail::rank_descending(scores);
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (!labels[order[rank]]) continue;
    ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  return ap / static_cast<double>(positives);
}

inline double map_micro(const ScoreMatrix& scores, const LabelMatrix& labels) {
  require_same_shape(scores, labels, "map_micro");
  const double ap = average_precision(scores.flat(), labels.flat());
  if (!is_defined(ap)) throw ValidationError("map_micro: no positive labels");
  return ap;
}

inline std::vector<double> per_class_ap(const ScoreMatrix& scores, const LabelMatrix& labels) {
  require_same_shape(scores, labels, "per_class_ap");
  std::vector<double> out(scores.cols());
  std::vector<double> s(scores.rows());
  std::vector<std::uint8_t> y(scores.rows());
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    for (std::size_t i = 0; i < scores.rows(); ++i) {
      s[i] = scores(i, c);
      y[i] = labels(i, c);
    }
    out[c] = average_precision(s, y);
  }
  return out;
}

struct MacroAp {
  double value = 0.0;
  std::size_t excluded = 0;  // classes without positives
};

inline MacroAp macro_from_per_class(std::span<const double> aps) {
  MacroAp out;
  double sum = 0.0;
  std::size_t defined = 0;
  for (double ap : aps) {
    if (is_defined(ap)) {
      sum += ap;
      ++defined;
    } else {
      ++out.excluded;
    }
  }
  if (defined == 0) throw ValidationError("map_macro: no class has positive labels");
  out.value = sum / static_cast<double>(defined);
  return out;
}

/// Mean per-class AP over classes with at least one positive.
inline MacroAp map_macro(const ScoreMatrix& scores, const LabelMatrix& labels) {
  const auto aps = per_class_ap(scores, labels);
  return macro_from_per_class(aps);
}

enum class Averaging { micro, macro };

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  /// 2TP / (2TP + FP + FN), with 0/0 taken as 0.
  double f1() const {
    const std::size_t denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
};

/// Binarizes scores at `threshold` (score >= threshold counts as present).
inline double f1_at_threshold(const ScoreMatrix& scores, const LabelMatrix& labels,
                              double threshold = 0.5, Averaging averaging = Averaging::micro) {
  require_same_shape(scores, labels, "f1_at_threshold");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("threshold must be in (0,1)");
  std::vector<Confusion> per_class(scores.cols());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    for (std::size_t c = 0; c < scores.cols(); ++c) {
      const bool pred = scores(i, c) >= threshold;
      const bool truth = labels(i, c) != 0;
      auto& cm = per_class[c];
      if (pred && truth) ++cm.tp;
      else if (pred) ++cm.fp;
      else if (truth) ++cm.fn;
    }
  }
  if (averaging == Averaging::micro) {
    Confusion pooled;
    for (const auto& cm : per_class) {
      pooled.tp += cm.tp;
      pooled.fp += cm.fp;
      pooled.fn += cm.fn;
    }
    return pooled.f1();
  }
  double sum = 0.0;
  for (const auto& cm : per_class) sum += cm.f1();
  return sum / static_cast<double>(per_class.size());
}

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

/// One point per distinct score threshold, from the highest score down, so
/// recall is non-decreasing. For tie-free scores the step area of the curve
/// equals average_precision.
inline std::vector<PrPoint> pr_curve(std::span<const double> scores,
                                     std::span<const std::uint8_t> labels) {
  detail::require_same_length(scores, labels);
  const auto positives = static_cast<std::size_t>(std::count_if(
      labels.begin(), labels.end(), [](std::uint8_t v) { return v != 0; }));
  if (positives == 0) throw ValidationError("pr_curve: no positive labels");
  const auto order = detail::rank_descending(scores);
  std::vector<PrPoint> curve;
  std::size_t tp = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]]) ++tp;
    const bool last_of_threshold =
        rank + 1 == order.size() || scores[order[rank + 1]] != scores[order[rank]];
    if (!last_of_threshold) continue;
    curve.push_back({static_cast<double>(tp) / static_cast<double>(positives),
                     static_cast<double>(tp) / static_cast<double>(rank + 1)});
  }
  return curve;
}

/// sum_k (R_k - R_{k-1}) * P_k with R_0 = 0.
inline double step_area(std::span<const PrPoint> curve) {
  double area = 0.0;
  double prev_recall = 0.0;
  for (const auto& pt : curve) {
    area += (pt.recall - prev_recall) * pt.precision;
    prev_recall = pt.recall;
  }
  return area;
}

struct MetricsReport {
  double map_micro = 0.0;
  double map_macro = 0.0;
  double f1_micro = 0.0;
  double f1_macro = 0.0;
  std::vector<double> per_class_ap;  // kUndefinedAp where a class has no positives
  std::size_t n_classes_excluded_from_macro = 0;
};

inline MetricsReport evaluate(const ScoreMatrix& scores, const LabelMatrix& labels,
                              double threshold = 0.5) {
  MetricsReport r;
  r.map_micro = map_micro(scores, labels);
  r.per_class_ap = per_class_ap(scores, labels);
  const auto macro = macro_from_per_class(r.per_class_ap);
  r.map_macro = macro.value;
  r.n_classes_excluded_from_macro = macro.excluded;
  r.f1_micro = f1_at_threshold(scores, labels, threshold, Averaging::micro);
  r.f1_macro = f1_at_threshold(scores, labels, threshold, Averaging::macro);
  return r;
}

}  // namespace mlnoise
