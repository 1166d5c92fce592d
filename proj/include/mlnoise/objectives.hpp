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

// Training objectives for noisy multi-label data:
//   bce    binary cross entropy on the observed labels
//   sat    BCE against refurbished targets T <- a*T + (1-a)*p after warm-up
//   elr    BCE plus (lambda/n) * sum log(1 - p*t), resolved per label
//   jocor  two networks, per-label BCE plus symmetric Bernoulli KL,
//          trained on the small-loss labels of each batch
//
// Every loss returns its value together with the gradient with respect to
// the scores; the network module chains that into parameter gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlnoise/matrix.hpp"
#include "mlnoise/nn.hpp"
#include "mlnoise/rng.hpp"

namespace mlnoise {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-7;

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

struct LossAndGrad {
  double loss = 0.0;
  RealMatrix grad;  // d loss / d scores
};

// BCE -----------------------------------------------------------------------

/// Unaveraged single-label BCE term.
inline double bce_term(double p, double t) {
  p = clamp_prob(p);
  return -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
}

/// d bce_term / d p (unaveraged).
inline double bce_term_grad(double p, double t) {
  p = clamp_prob(p);
  return -(t / p - (1.0 - t) / (1.0 - p));
}

/// Mean over examples of the per-example summed BCE. Targets may be soft.
inline LossAndGrad bce_loss(const ScoreMatrix& scores, const RealMatrix& targets) {
  require_same_shape(scores, targets, "bce_loss");
  const double inv_n = 1.0 / static_cast<double>(scores.rows());
  LossAndGrad out{0.0, RealMatrix(scores.rows(), scores.cols())};
  auto p = scores.flat();
  auto t = targets.flat();
  auto g = out.grad.flat();
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    total += bce_term(p[k], t[k]);
    g[k] = bce_term_grad(p[k], t[k]) * inv_n;
  }
  out.loss = total * inv_n;
  return out;
}

inline LossAndGrad bce_loss(const ScoreMatrix& scores, const LabelMatrix& labels) {
  return bce_loss(scores, to_real(labels));
}

namespace detail {

inline void check_rows(std::span<const std::size_t> rows, std::size_t n_rows, std::size_t batch) {
  if (rows.size() != batch) throw ValidationError("row index count does not match score rows");
  for (auto r : rows) {
    if (r >= n_rows) {
      throw ValidationError("row index " + std::to_string(r) + " out of range " +
                            std::to_string(n_rows));
    }
  }
}

// target_i <- keep * target_i + (1 - keep) * p_i for each listed row.
inline void ema_rows(RealMatrix& targets, const ScoreMatrix& scores,
                     std::span<const std::size_t> rows, double keep) {
  if (scores.cols() != targets.cols()) throw ValidationError("target width mismatch");
  check_rows(rows, targets.rows(), scores.rows());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto t = targets.row(rows[k]);
    auto p = scores.row(k);
    for (std::size_t c = 0; c < t.size(); ++c) t[c] = keep * t[c] + (1.0 - keep) * p[c];
  }
}

}  // namespace detail

// SAT -----------------------------------------------------------------------

struct SatConfig {
  double alpha = 0.9;
  std::size_t warmup_epochs = 5;
};

/// Refurbished targets, one row per training example. Starts as the observed labels.
struct SatState {
  RealMatrix targets;

  static SatState from_labels(const LabelMatrix& observed) { return {to_real(observed)}; }
};

/// Blends the listed rows toward the current predictions. Row k of `scores`
/// belongs to training example rows[k].
inline void sat_update_targets(SatState& state, const ScoreMatrix& scores,
                               std::span<const std::size_t> rows, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("sat alpha must be in [0,1]");
  detail::ema_rows(state.targets, scores, rows, alpha);
}

inline LossAndGrad sat_loss(const ScoreMatrix& scores, const SatState& state,
                            std::span<const std::size_t> rows) {
  detail::check_rows(rows, state.targets.rows(), scores.rows());
  return bce_loss(scores, state.targets.gather_rows(rows));
}

// ELR -----------------------------------------------------------------------

enum class ElrTargetMode { ema_predictions, observed_labels };

inline std::string_view to_string(ElrTargetMode m) {
  return m == ElrTargetMode::ema_predictions ? "ema_predictions" : "observed_labels";
}

inline ElrTargetMode parse_elr_target_mode(std::string_view s) {
  if (s == "ema_predictions") return ElrTargetMode::ema_predictions;
  if (s == "observed_labels") return ElrTargetMode::observed_labels;
  throw ValidationError("unknown ELR target mode '" + std::string(s) + "'");
}

struct ElrConfig {
  double lambda = 3.0;
  double ema_beta = 0.7;
  ElrTargetMode target_mode = ElrTargetMode::ema_predictions;
};

/// EMA of predictions per training example, initialized to zero.
struct ElrState {
  RealMatrix targets;

  static ElrState zeros(std::size_t n_examples, std::size_t n_classes) {
    return {RealMatrix(n_examples, n_classes, 0.0)};
  }
};

inline void elr_update_targets(ElrState& state, const ScoreMatrix& scores,
                               std::span<const std::size_t> rows, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("elr beta must be in [0,1]");
  detail::ema_rows(state.targets, scores, rows, beta);
}

/// The label-wise regularizer (lambda/n) * sum_{i,c} log(1 - p_ic * t_ic)
/// alone. It is never positive; the argument of the log is clamped at 1e-7.
inline LossAndGrad elr_penalty(const ScoreMatrix& scores, const RealMatrix& targets,
                               double lambda) {
  require_same_shape(scores, targets, "elr_penalty");
  const double scale = lambda / static_cast<double>(scores.rows());
  LossAndGrad out{0.0, RealMatrix(scores.rows(), scores.cols())};
  auto p = scores.flat();
  auto t = targets.flat();
  auto g = out.grad.flat();
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double pc = clamp_prob(p[k]);
    const double inner = std::max(1.0 - pc * t[k], kProbClamp);
    total += std::log(inner);
    g[k] = scale * (-t[k] / inner);
  }
  out.loss = scale * total;
  return out;
}

/// BCE on the observed labels plus the ELR penalty. `ema_targets` holds the
/// EMA rows of this batch; it is ignored in observed_labels mode.
inline LossAndGrad elr_loss(const ScoreMatrix& scores, const LabelMatrix& observed,
                            const RealMatrix& ema_targets, double lambda, ElrTargetMode mode) {
  const RealMatrix labels = to_real(observed);
  LossAndGrad base = bce_loss(scores, labels);
  const LossAndGrad pen = elr_penalty(
      scores, mode == ElrTargetMode::observed_labels ? labels : ema_targets, lambda);
  base.loss += pen.loss;
  auto g = base.grad.flat();
  auto pg = pen.grad.flat();
  for (std::size_t k = 0; k < g.size(); ++k) g[k] += pg[k];
  return base;
}

inline LossAndGrad elr_loss(const ScoreMatrix& scores, const LabelMatrix& observed,
                            const ElrState& state, std::span<const std::size_t> rows,
                            double lambda, ElrTargetMode mode) {
  detail::check_rows(rows, state.targets.rows(), scores.rows());
  return elr_loss(scores, observed, state.targets.gather_rows(rows), lambda, mode);
}

// JoCoR ---------------------------------------------------------------------

/// D(p||q) + D(q||p) for Bernoulli(p), Bernoulli(q) = (p - q) ln(p(1-q) / (q(1-p))).
inline double sym_kl_bernoulli(double p, double q) {
  p = clamp_prob(p);
  q = clamp_prob(q);
  return (p - q) * std::log((p * (1.0 - q)) / (q * (1.0 - p)));
}

/// Partial derivatives of sym_kl_bernoulli with respect to p and q.
inline std::pair<double, double> sym_kl_bernoulli_grad(double p, double q) {
  p = clamp_prob(p);
  q = clamp_prob(q);
  const double log_ratio = std::log((p * (1.0 - q)) / (q * (1.0 - p)));
  const double diff = p - q;
  return {log_ratio + diff / (p * (1.0 - p)), -log_ratio - diff / (q * (1.0 - q))};
}

struct JoCorConfig {
  double lambda_j = 0.3;
  // Estimated noise fraction; unset means "use the injected rate if known, else 0.2".
  std::optional<double> tau;
  std::size_t ramp_epochs = 5;

  double effective_tau() const { return tau.value_or(0.2); }
};

/// Per-(example, class) joint loss of the two networks.
inline RealMatrix jocor_label_losses(const ScoreMatrix& scores_f, const ScoreMatrix& scores_g,
                                     const LabelMatrix& observed, double lambda_j) {
  require_same_shape(scores_f, scores_g, "jocor_label_losses");
  require_same_shape(scores_f, observed, "jocor_label_losses");
  RealMatrix out(scores_f.rows(), scores_f.cols());
  auto pf = scores_f.flat();
  auto pg = scores_g.flat();
  auto y = observed.flat();
  auto o = out.flat();
  for (std::size_t k = 0; k < o.size(); ++k) {
    const double t = y[k];
    o[k] = (1.0 - lambda_j) * (bce_term(pf[k], t) + bce_term(pg[k], t)) +
           lambda_j * sym_kl_bernoulli(pf[k], pg[k]);
  }
  return out;
}

using SelectionMask = Matrix<std::uint8_t>;

/// Number of entries kept out of `count`: max(1, floor(keep_fraction * count)).
inline std::size_t kept_count(std::size_t count, double keep_fraction) {
  const auto k = static_cast<std::size_t>(std::floor(keep_fraction * static_cast<double>(count)));
  return std::clamp<std::size_t>(k, 1, count);
}

/// Pools every (example, class) entry of the batch into one ranking and keeps
/// the smallest losses. Ties go to the lower row-major index.
inline SelectionMask select_small_loss_labels(const RealMatrix& label_losses,
                                              double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ValidationError("keep_fraction must be in (0,1]");
  }
  auto losses = label_losses.flat();
  std::vector<std::size_t> order(losses.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  SelectionMask mask(label_losses.rows(), label_losses.cols(), 0);
  const std::size_t keep = kept_count(losses.size(), keep_fraction);
  for (std::size_t k = 0; k < keep; ++k) mask.flat()[order[k]] = 1;
  return mask;
}

/// Linear ramp from 0 to tau over ramp_epochs, then constant.
inline double forget_rate(std::size_t epoch, double tau, std::size_t ramp_epochs) {
  if (!(tau >= 0.0 && tau < 1.0)) throw ValidationError("tau must be in [0,1)");
  if (ramp_epochs == 0) return tau;
  return std::min(tau, tau * static_cast<double>(epoch) / static_cast<double>(ramp_epochs));
}

struct JoCorLoss {
  double loss = 0.0;
  RealMatrix grad_f;
  RealMatrix grad_g;
  std::size_t n_selected = 0;
};

/// Mean joint loss over the selected labels, rescaled by the class count so
/// that selecting everything gives sum / n_examples, the same normalization
/// as bce_loss.
inline JoCorLoss jocor_loss(const ScoreMatrix& scores_f, const ScoreMatrix& scores_g,
                            const LabelMatrix& observed, double lambda_j,
                            const SelectionMask& mask) {
  require_same_shape(scores_f, mask, "jocor_loss");
  const RealMatrix losses = jocor_label_losses(scores_f, scores_g, observed, lambda_j);
  JoCorLoss out{0.0, RealMatrix(scores_f.rows(), scores_f.cols()),
                RealMatrix(scores_f.rows(), scores_f.cols()), 0};
  auto m = mask.flat();
  for (auto v : m) out.n_selected += v ? 1 : 0;
  if (out.n_selected == 0) return out;
  const double scale = static_cast<double>(scores_f.cols()) / static_cast<double>(out.n_selected);

  auto pf = scores_f.flat();
  auto pg = scores_g.flat();
  auto y = observed.flat();
  auto l = losses.flat();
  auto gf = out.grad_f.flat();
  auto gg = out.grad_g.flat();
  double total = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (!m[k]) continue;
    total += l[k];
    const double t = y[k];
    const auto [dkl_f, dkl_g] = sym_kl_bernoulli_grad(pf[k], pg[k]);
    gf[k] = ((1.0 - lambda_j) * bce_term_grad(pf[k], t) + lambda_j * dkl_f) * scale;
    gg[k] = ((1.0 - lambda_j) * bce_term_grad(pg[k], t) + lambda_j * dkl_g) * scale;
  }
  out.loss = total * scale;
  return out;
}

// Epoch driver --------------------------------------------------------------

enum class Method { bce, sat, elr, jocor };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::bce: return "bce";
    case Method::sat: return "sat";
    case Method::elr: return "elr";
    case Method::jocor: return "jocor";
  }
  return "unknown";
}

inline Method parse_method(std::string_view s) {
  if (s == "bce") return Method::bce;
  if (s == "sat") return Method::sat;
  if (s == "elr") return Method::elr;
  if (s == "jocor") return Method::jocor;
  throw ValidationError("unknown method '" + std::string(s) + "'");
}

struct MethodConfig {
  SatConfig sat;
  ElrConfig elr;
  JoCorConfig jocor;
};

/// Everything a training run owns: the network(s), optimizer moments and the
/// method's per-example targets.
struct TrainState {
  Method method = Method::bce;
  MlpParams net;
  AdamWState opt;
  MlpParams twin;  // second network, jocor only
  AdamWState twin_opt;
  SatState sat;
  ElrState elr;
};

inline std::uint64_t net_seed(std::uint64_t run_seed) { return derive_seed(run_seed, "net_f"); }
inline std::uint64_t twin_seed(std::uint64_t run_seed) { return derive_seed(run_seed, "net_g"); }
inline std::uint64_t shuffle_seed(std::uint64_t run_seed, std::size_t epoch) {
  return derive_seed(run_seed, {hash_string("shuffle"), epoch});
}

inline TrainState make_train_state(Method method, std::size_t n_features,
                                   const LabelMatrix& observed, const TrainConfig& cfg) {
  TrainState s;
  s.method = method;
  s.net = init_params(n_features, cfg.hidden_units, observed.cols(), net_seed(cfg.seed));
  s.opt = AdamWState::for_params(s.net);
  if (method == Method::jocor) {
    s.twin = init_params(n_features, cfg.hidden_units, observed.cols(), twin_seed(cfg.seed));
    s.twin_opt = AdamWState::for_params(s.twin);
  }
  if (method == Method::sat) s.sat = SatState::from_labels(observed);
  if (method == Method::elr) s.elr = ElrState::zeros(observed.rows(), observed.cols());
  return s;
}

struct EpochResult {
  double mean_loss = 0.0;           // batch losses weighted by batch size
  std::vector<double> batch_losses;
  std::size_t min_selected = std::numeric_limits<std::size_t>::max();  // jocor only
};

/// Epoch-wise mini-batch order, reshuffled from the run seed.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t run_seed,
                                            std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(shuffle_seed(run_seed, epoch));
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

inline EpochResult train_epoch(const FeatureMatrix& x, const LabelMatrix& observed,
                               TrainState& state, const TrainConfig& cfg,
                               const MethodConfig& mcfg, std::size_t epoch) {
  require_same_shape(x.rows(), 1, observed.rows(), 1, "train_epoch");
  const std::size_t n = x.rows();
  const double lr = lr_at_epoch(cfg, epoch);
  const auto order = epoch_order(n, cfg.seed, epoch);

  double keep_fraction = 1.0;
  if (state.method == Method::jocor) {
    keep_fraction =
        1.0 - forget_rate(epoch, mcfg.jocor.effective_tau(), mcfg.jocor.ramp_epochs);
  }

  EpochResult result;
  double weighted = 0.0;
  for (std::size_t start = 0; start < n; start += cfg.batch_size) {
    const std::size_t stop = std::min(n, start + cfg.batch_size);
    const std::span<const std::size_t> rows(order.data() + start, stop - start);
    const FeatureMatrix xb = x.gather_rows(rows);
    const LabelMatrix yb = observed.gather_rows(rows);
    const ForwardPass fp = forward_pass(state.net, xb);

    double batch_loss = 0.0;
    switch (state.method) {
      case Method::bce: {
        const auto lg = bce_loss(fp.scores, yb);
        batch_loss = lg.loss;
        adamw_step(state.net, backward(state.net, xb, fp, lg.grad), state.opt, lr,
                   cfg.weight_decay);
        break;
      }
      case Method::sat: {
        const auto lg = sat_loss(fp.scores, state.sat, rows);
        batch_loss = lg.loss;
        if (epoch >= mcfg.sat.warmup_epochs) {
          sat_update_targets(state.sat, fp.scores, rows, mcfg.sat.alpha);
        }
        adamw_step(state.net, backward(state.net, xb, fp, lg.grad), state.opt, lr,
                   cfg.weight_decay);
        break;
      }
      case Method::elr: {
        if (mcfg.elr.target_mode == ElrTargetMode::ema_predictions) {
          elr_update_targets(state.elr, fp.scores, rows, mcfg.elr.ema_beta);
        }
        const auto lg = elr_loss(fp.scores, yb, state.elr.targets.gather_rows(rows),
                                 mcfg.elr.lambda, mcfg.elr.target_mode);
        batch_loss = lg.loss;
        adamw_step(state.net, backward(state.net, xb, fp, lg.grad), state.opt, lr,
                   cfg.weight_decay);
        break;
      }
      case Method::jocor: {
        const ForwardPass fp_g = forward_pass(state.twin, xb);
        const RealMatrix losses =
            jocor_label_losses(fp.scores, fp_g.scores, yb, mcfg.jocor.lambda_j);
        const SelectionMask mask = select_small_loss_labels(losses, keep_fraction);
        const auto jl = jocor_loss(fp.scores, fp_g.scores, yb, mcfg.jocor.lambda_j, mask);
        batch_loss = jl.loss;
        result.min_selected = std::min(result.min_selected, jl.n_selected);
        auto grad_f = backward(state.net, xb, fp, jl.grad_f);
        auto grad_g = backward(state.twin, xb, fp_g, jl.grad_g);
        adamw_step(state.net, grad_f, state.opt, lr, cfg.weight_decay);
        adamw_step(state.twin, grad_g, state.twin_opt, lr, cfg.weight_decay);
        break;
      }
    }
    result.batch_losses.push_back(batch_loss);
    weighted += batch_loss * static_cast<double>(rows.size());
  }
  result.mean_loss = weighted / static_cast<double>(n);
  return result;
}

}  // namespace mlnoise
