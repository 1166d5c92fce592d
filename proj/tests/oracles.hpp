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

// Independent reference implementations used only by the tests. None of
// these call into the code path they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "mlnoise/matrix.hpp"

namespace mlnoise::oracle {

/// O(n^2) average precision: the rank of item j is one plus the number of
/// items ordered before it (higher score, or equal score and lower index);
/// precision at each positive is counted directly.
inline double brute_ap(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  const std::size_t n = s.size();
  auto before = [&](std::size_t a, std::size_t b) { return s[a] > s[b] || (s[a] == s[b] && a < b); };
  double sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (!y[j]) continue;
    ++positives;
    std::size_t rank = 1;
    std::size_t hits = 1;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == j || !before(k, j)) continue;
      ++rank;
      if (y[k]) ++hits;
    }
    sum += static_cast<double>(hits) / static_cast<double>(rank);
  }
  return positives ? sum / static_cast<double>(positives) : std::nan("");
}

inline double brute_map_micro(const ScoreMatrix& s, const LabelMatrix& y) {
  std::vector<double> fs;
  std::vector<std::uint8_t> fy;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t c = 0; c < s.cols(); ++c) {
      fs.push_back(s(i, c));
      fy.push_back(y(i, c));
    }
  }
  return brute_ap(fs, fy);
}

/// Returns {macro, excluded}.
inline std::pair<double, std::size_t> brute_map_macro(const ScoreMatrix& s, const LabelMatrix& y) {
  double sum = 0.0;
  std::size_t defined = 0;
  std::size_t excluded = 0;
  for (std::size_t c = 0; c < s.cols(); ++c) {
    std::vector<double> cs;
    std::vector<std::uint8_t> cy;
    for (std::size_t i = 0; i < s.rows(); ++i) {
      cs.push_back(s(i, c));
      cy.push_back(y(i, c));
    }
    const double ap = brute_ap(cs, cy);
    if (std::isnan(ap)) {
      ++excluded;
    } else {
      sum += ap;
      ++defined;
    }
  }
  return {defined ? sum / static_cast<double>(defined) : std::nan(""), excluded};
}

/// F1 from precision and recall, 0 when undefined.
inline double f1_from_counts(double tp, double fp, double fn) {
  const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  return precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

inline double brute_f1(const ScoreMatrix& s, const LabelMatrix& y, double threshold, bool micro) {
  double tp_all = 0, fp_all = 0, fn_all = 0, macro = 0;
  for (std::size_t c = 0; c < s.cols(); ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < s.rows(); ++i) {
      const bool pred = !(s(i, c) < threshold);
      tp += pred && y(i, c);
      fp += pred && !y(i, c);
      fn += !pred && y(i, c);
    }
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
    macro += f1_from_counts(tp, fp, fn);
  }
  return micro ? f1_from_counts(tp_all, fp_all, fn_all) : macro / static_cast<double>(s.cols());
}

/// Central-difference gradient of f at x.
inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double step) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + step;
    const double up = f(x);
    x[k] = orig - step;
    const double down = f(x);
    x[k] = orig;
    g[k] = (up - down) / (2.0 * step);
  }
  return g;
}

inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double denom = std::max({std::abs(a[k]), std::abs(b[k]), 1e-8});
    worst = std::max(worst, std::abs(a[k] - b[k]) / denom);
  }
  return worst;
}

/// Direct evaluation of the network on one input row, written from the layer
/// equations: sigmoid(W2 relu(W1 x + b1) + b2).
inline std::vector<double> mlp_row(const std::vector<std::vector<double>>& w1,
                                   const std::vector<double>& b1,
                                   const std::vector<std::vector<double>>& w2,
                                   const std::vector<double>& b2, const std::vector<double>& x) {
  std::vector<double> hidden(b1.size());
  for (std::size_t u = 0; u < b1.size(); ++u) {
    double z = b1[u];
    for (std::size_t j = 0; j < x.size(); ++j) z += w1[u][j] * x[j];
    hidden[u] = std::max(z, 0.0);
  }
  std::vector<double> out(b2.size());
  for (std::size_t c = 0; c < b2.size(); ++c) {
    double z = b2[c];
    for (std::size_t u = 0; u < hidden.size(); ++u) z += w2[c][u] * hidden[u];
    out[c] = 1.0 / (1.0 + std::exp(-z));
  }
  return out;
}

}  // namespace mlnoise::oracle
