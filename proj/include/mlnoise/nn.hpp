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

// One-hidden-layer ReLU network with sigmoid outputs, hand-written
// backpropagation, AdamW with decoupled weight decay, and a central
// finite-difference gradient checker.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mlnoise/csv.hpp"
#include "mlnoise/matrix.hpp"
#include "mlnoise/rng.hpp"

namespace mlnoise {

struct MlpParams {
  RealMatrix w1;           // hidden x features
  std::vector<double> b1;  // hidden
  RealMatrix w2;           // classes x hidden
  std::vector<double> b2;  // classes

  std::size_t n_features() const { return w1.cols(); }
  std::size_t n_hidden() const { return w1.rows(); }
  std::size_t n_classes() const { return w2.rows(); }
  std::size_t n_params() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  /// Parameter blocks in serialization order: w1, b1, w2, b2.
  std::array<std::span<double>, 4> blocks() { return {w1.flat(), b1, w2.flat(), b2}; }
  std::array<std::span<const double>, 4> blocks() const {
    return {w1.flat(), b1, w2.flat(), b2};
  }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Same shapes as `like`, all zeros.
inline MlpParams zeros_like(const MlpParams& like) {
  return {RealMatrix(like.w1.rows(), like.w1.cols()), std::vector<double>(like.b1.size()),
          RealMatrix(like.w2.rows(), like.w2.cols()), std::vector<double>(like.b2.size())};
}

inline MlpParams zero_params(std::size_t n_features, std::size_t n_hidden, std::size_t n_classes) {
  return {RealMatrix(n_hidden, n_features), std::vector<double>(n_hidden),
          RealMatrix(n_classes, n_hidden), std::vector<double>(n_classes)};
}

inline std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> out;
  out.reserve(p.n_params());
  for (auto block : p.blocks()) out.insert(out.end(), block.begin(), block.end());
  return out;
}

inline void unflatten(std::span<const double> flat, MlpParams& p) {
  if (flat.size() != p.n_params()) throw ValidationError("flat parameter size mismatch");
  std::size_t offset = 0;
  for (auto block : p.blocks()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), block.size(), block.begin());
    offset += block.size();
  }
}

/// Gaussian weights with std 1/sqrt(fan_in), zero biases.
inline MlpParams init_params(std::size_t n_features, std::size_t n_hidden, std::size_t n_classes,
                             std::uint64_t seed) {
  if (n_features == 0 || n_hidden == 0 || n_classes == 0) {
    throw ValidationError("network dimensions must be positive");
  }
  MlpParams p = zero_params(n_features, n_hidden, n_classes);
  Rng rng(derive_seed(seed, "init"));
  const double s1 = 1.0 / std::sqrt(static_cast<double>(n_features));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(n_hidden));
  for (double& w : p.w1.flat()) w = rng.normal() * s1;
  for (double& w : p.w2.flat()) w = rng.normal() * s2;
  return p;
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Intermediate activations kept for the backward pass.
struct ForwardPass {
  RealMatrix hidden_pre;  // N x hidden, before relu
  RealMatrix hidden;      // N x hidden
  ScoreMatrix scores;     // N x classes
};

inline ForwardPass forward_pass(const MlpParams& params, const FeatureMatrix& x) {
  if (x.cols() != params.n_features()) {
    throw ValidationError("forward: feature width " + std::to_string(x.cols()) +
                          " does not match network input " +
                          std::to_string(params.n_features()));
  }
  const std::size_t n = x.rows();
  const std::size_t h = params.n_hidden();
  const std::size_t n_classes = params.n_classes();
  ForwardPass fp{RealMatrix(n, h), RealMatrix(n, h), ScoreMatrix(n, n_classes)};
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = x.row(i);
    for (std::size_t u = 0; u < h; ++u) {
      auto wu = params.w1.row(u);
      double z = params.b1[u];
      for (std::size_t j = 0; j < xi.size(); ++j) z += wu[j] * xi[j];
      fp.hidden_pre(i, u) = z;
      fp.hidden(i, u) = z > 0.0 ? z : 0.0;
    }
    auto hi = fp.hidden.row(i);
    for (std::size_t c = 0; c < n_classes; ++c) {
      auto wc = params.w2.row(c);
      double z = params.b2[c];
      for (std::size_t u = 0; u < h; ++u) z += wc[u] * hi[u];
      fp.scores(i, c) = sigmoid(z);
    }
  }
  return fp;
}

inline ScoreMatrix forward(const MlpParams& params, const FeatureMatrix& x) {
  return forward_pass(params, x).scores;
}

/// Parameter gradient of a scalar loss given its gradient with respect to the
/// output scores, chained through the sigmoid and relu Jacobians.
inline MlpParams backward(const MlpParams& params, const FeatureMatrix& x, const ForwardPass& fp,
                          const RealMatrix& d_scores) {
  require_same_shape(d_scores, fp.scores, "backward");
  const std::size_t n = x.rows();
  const std::size_t d = params.n_features();
  const std::size_t h = params.n_hidden();
  const std::size_t n_classes = params.n_classes();
  MlpParams g = zeros_like(params);
  std::vector<double> d_logit(n_classes);
  std::vector<double> d_hidden(h);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < n_classes; ++c) {
      const double s = fp.scores(i, c);
      d_logit[c] = d_scores(i, c) * s * (1.0 - s);
    }
    auto hi = fp.hidden.row(i);
    std::fill(d_hidden.begin(), d_hidden.end(), 0.0);
    for (std::size_t c = 0; c < n_classes; ++c) {
      const double dz = d_logit[c];
      if (dz == 0.0) continue;
      g.b2[c] += dz;
      auto gw = g.w2.row(c);
      auto wc = params.w2.row(c);
      for (std::size_t u = 0; u < h; ++u) {
        gw[u] += dz * hi[u];
        d_hidden[u] += dz * wc[u];
      }
    }
    auto xi = x.row(i);
    for (std::size_t u = 0; u < h; ++u) {
      if (fp.hidden_pre(i, u) <= 0.0) continue;
      const double dz = d_hidden[u];
      g.b1[u] += dz;
      auto gw = g.w1.row(u);
      for (std::size_t j = 0; j < d; ++j) gw[j] += dz * xi[j];
    }
  }
  return g;
}

inline MlpParams backward(const MlpParams& params, const FeatureMatrix& x,
                          const RealMatrix& d_scores) {
  return backward(params, x, forward_pass(params, x), d_scores);
}

// Optimizer -----------------------------------------------------------------

struct AdamWState {
  MlpParams m;
  MlpParams v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamWState for_params(const MlpParams& p) { return {zeros_like(p), zeros_like(p)}; }
};

/// One AdamW update in place. Weight decay is decoupled: params are scaled by
/// (1 - lr * weight_decay) before the bias-corrected Adam step is applied.
inline void adamw_step(MlpParams& params, const MlpParams& grads, AdamWState& state, double lr,
                       double weight_decay) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  const double decay = 1.0 - lr * weight_decay;
  auto pb = params.blocks();
  auto gb = grads.blocks();
  auto mb = state.m.blocks();
  auto vb = state.v.blocks();
  for (std::size_t b = 0; b < pb.size(); ++b) {
    if (gb[b].size() != pb[b].size()) throw ValidationError("adamw: gradient shape mismatch");
    for (std::size_t k = 0; k < pb[b].size(); ++k) {
      const double g = gb[b][k];
      double& m = mb[b][k];
      double& v = vb[b][k];
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = state.beta2 * v + (1.0 - state.beta2) * g * g;
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      pb[b][k] = pb[b][k] * decay - lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::size_t lr_drop_epoch = 20;
  double lr_drop_factor = 5.0;
  double weight_decay = 1e-4;
  std::size_t hidden_units = 64;
  std::uint64_t seed = 0;
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.epochs == 0 || cfg.batch_size == 0 || cfg.hidden_units == 0) {
    throw ValidationError("train config: epochs, batch_size and hidden_units must be positive");
  }
  if (!(cfg.learning_rate > 0.0) || !(cfg.lr_drop_factor > 0.0) || !(cfg.weight_decay >= 0.0)) {
    throw ValidationError("train config: learning_rate and lr_drop_factor must be positive, "
                          "weight_decay non-negative");
  }
  if (cfg.lr_drop_epoch > cfg.epochs) {
    throw ValidationError("train config: lr_drop_epoch must not exceed epochs");
  }
}

/// Step schedule: the base rate for the first lr_drop_epoch epochs, divided by
/// lr_drop_factor afterwards.
inline double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  return epoch < cfg.lr_drop_epoch ? cfg.learning_rate : cfg.learning_rate / cfg.lr_drop_factor;
}

// Gradient checking ---------------------------------------------------------

/// Maximum relative discrepancy |a - b| / max(|a|, |b|, 1e-8) between an
/// analytic gradient and central differences of `loss` around `point`.
/// Above `max_coords` coordinates a seeded subsample is checked.
inline double finite_diff_check(std::span<const double> point,
                                const std::function<double(std::span<const double>)>& loss,
                                std::span<const double> analytic, double step,
                                std::size_t max_coords = 10000, std::uint64_t seed = 0) {
  if (point.size() != analytic.size()) throw ValidationError("finite_diff_check: size mismatch");
  std::vector<std::size_t> coords(point.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (coords.size() > max_coords) {
    Rng rng(derive_seed(seed, "fd-subsample"));
    rng.shuffle(std::span<std::size_t>(coords));
    coords.resize(max_coords);
  }
  std::vector<double> probe(point.begin(), point.end());
  double worst = 0.0;
  for (auto k : coords) {
    const double orig = probe[k];
    probe[k] = orig + step;
    const double up = loss(probe);
    probe[k] = orig - step;
    const double down = loss(probe);
    probe[k] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[k];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

inline double finite_diff_check(const MlpParams& params,
                                const std::function<double(const MlpParams&)>& loss,
                                const MlpParams& analytic, double step) {
  MlpParams scratch = params;
  auto flat_loss = [&](std::span<const double> flat) {
    unflatten(flat, scratch);
    return loss(scratch);
  };
  const auto point = flatten(params);
  const auto grad = flatten(analytic);
  return finite_diff_check(point, flat_loss, grad, step);
}

// Checkpoints ---------------------------------------------------------------
//
// Line 1: n_features=<d>,n_hidden=<h>,n_classes=<c>
// Then one parameter per line in w1, b1, w2, b2 order (row-major).

inline void save_checkpoint(const std::filesystem::path& path, const MlpParams& p) {
  std::string text = "n_features=" + std::to_string(p.n_features()) +
                     ",n_hidden=" + std::to_string(p.n_hidden()) +
                     ",n_classes=" + std::to_string(p.n_classes()) + "\n";
  for (double v : flatten(p)) {
    text += csv::format_real(v);
    text += '\n';
  }
  csv::write_file_atomic(path, text);
}

inline MlpParams load_checkpoint(const std::filesystem::path& path) {
  auto table = csv::read(path);
  if (table.empty() || table.front().size() != 3) {
    throw ValidationError(path.string() + ": missing checkpoint header");
  }
  std::size_t dims[3];
  const char* keys[3] = {"n_features=", "n_hidden=", "n_classes="};
  for (int k = 0; k < 3; ++k) {
    const auto& cell = table.front()[static_cast<std::size_t>(k)];
    if (cell.rfind(keys[k], 0) != 0) throw ValidationError(path.string() + ": bad header");
    dims[k] = static_cast<std::size_t>(
        csv::parse_real(std::string_view(cell).substr(std::string_view(keys[k]).size()), 0,
                        static_cast<std::size_t>(k), path.string()));
  }
  MlpParams p = zero_params(dims[0], dims[1], dims[2]);
  if (table.size() != p.n_params() + 1) {
    throw ValidationError(path.string() + ": expected " + std::to_string(p.n_params()) +
                          " parameters, found " + std::to_string(table.size() - 1));
  }
  std::vector<double> flat(p.n_params());
  for (std::size_t k = 0; k < flat.size(); ++k) {
    if (table[k + 1].size() != 1) throw ValidationError(path.string() + ": one value per line");
    flat[k] = csv::parse_real(table[k + 1][0], k + 1, 0, path.string());
  }
  unflatten(flat, p);
  return p;
}

}  // namespace mlnoise
