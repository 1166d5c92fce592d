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

// Built-in self test: gradient checks for every objective, noise-injection
// accounting and the metric worked examples. Backs the `check` subcommand.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mlnoise/csv.hpp"
#include "mlnoise/metrics.hpp"
#include "mlnoise/nn.hpp"
#include "mlnoise/noise.hpp"
#include "mlnoise/objectives.hpp"
#include "mlnoise/rng.hpp"

namespace mlnoise {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Small random problem for gradient checks.
struct GradInstance {
  FeatureMatrix x;
  LabelMatrix y;
  RealMatrix soft_targets;  // values in [0,1] for SAT / ELR targets
  MlpParams f;
  MlpParams g;
};

inline GradInstance random_grad_instance(std::uint64_t seed, std::size_t d = 5, std::size_t h = 8,
                                         std::size_t n_classes = 4, std::size_t n = 16) {
  Rng rng(derive_seed(seed, "grad-instance"));
  GradInstance inst{FeatureMatrix(n, d), LabelMatrix(n, n_classes), RealMatrix(n, n_classes),
                    init_params(d, h, n_classes, derive_seed(seed, "f")),
                    init_params(d, h, n_classes, derive_seed(seed, "g"))};
  for (double& v : inst.x.flat()) v = rng.normal();
  for (auto& v : inst.y.flat()) v = rng.bernoulli(0.4) ? 1 : 0;
  for (double& v : inst.soft_targets.flat()) v = rng.uniform();
  for (auto* p : {&inst.f, &inst.g}) {
    for (double& v : p->b1) v = 0.1 * rng.normal();
    for (double& v : p->b2) v = 0.1 * rng.normal();
  }
  return inst;
}

namespace detail {

using ScoreLoss = std::function<LossAndGrad(const ScoreMatrix&)>;

// Relative error of the parameter gradient of loss(forward(params, x)).
inline double param_grad_error(const MlpParams& params, const FeatureMatrix& x,
                               const ScoreLoss& loss, double step) {
  const auto fp = forward_pass(params, x);
  const auto analytic = backward(params, x, fp, loss(fp.scores).grad);
  return finite_diff_check(
      params, [&](const MlpParams& p) { return loss(forward(p, x)).loss; }, analytic, step);
}

// Relative error of the score gradient.
inline double score_grad_error(const ScoreMatrix& scores, const ScoreLoss& loss, double step) {
  const auto analytic = loss(scores).grad;
  ScoreMatrix probe = scores;
  return finite_diff_check(
      scores.flat(),
      [&](std::span<const double> flat) {
        std::copy(flat.begin(), flat.end(), probe.flat().begin());
        return loss(probe).loss;
      },
      analytic.flat(), step);
}

}  // namespace detail

/// Worst score- and parameter-gradient error per objective over `instances`
/// random problems.
inline std::vector<CheckResult> check_gradients(std::size_t instances = 20,
                                                double tolerance = 1e-4, double step = 1e-5) {
  struct Worst {
    std::string name;
    double error = 0.0;
  };
  std::vector<Worst> worst = {{"gradient/bce"},       {"gradient/sat"},
                              {"gradient/elr_ema"},   {"gradient/elr_observed"},
                              {"gradient/jocor_f"},   {"gradient/jocor_g"}};
  for (std::size_t k = 0; k < instances; ++k) {
    const auto inst = random_grad_instance(k);
    const RealMatrix labels = to_real(inst.y);
    std::vector<detail::ScoreLoss> losses = {
        [&](const ScoreMatrix& s) { return bce_loss(s, labels); },
        [&](const ScoreMatrix& s) { return bce_loss(s, inst.soft_targets); },
        [&](const ScoreMatrix& s) {
          return elr_loss(s, inst.y, inst.soft_targets, 3.0, ElrTargetMode::ema_predictions);
        },
        [&](const ScoreMatrix& s) {
          return elr_loss(s, inst.y, inst.soft_targets, 3.0, ElrTargetMode::observed_labels);
        }};
    for (std::size_t m = 0; m < losses.size(); ++m) {
      const double e = std::max(detail::param_grad_error(inst.f, inst.x, losses[m], step),
                                detail::score_grad_error(forward(inst.f, inst.x), losses[m], step));
      worst[m].error = std::max(worst[m].error, e);
    }

    // JoCoR: selection fixed at the evaluation point, each network checked
    // with the other held constant.
    const auto sf = forward(inst.f, inst.x);
    const auto sg = forward(inst.g, inst.x);
    const auto mask = select_small_loss_labels(jocor_label_losses(sf, sg, inst.y, 0.3), 0.7);
    auto via_f = [&](const ScoreMatrix& s) {
      auto jl = jocor_loss(s, sg, inst.y, 0.3, mask);
      return LossAndGrad{jl.loss, std::move(jl.grad_f)};
    };
    auto via_g = [&](const ScoreMatrix& s) {
      auto jl = jocor_loss(sf, s, inst.y, 0.3, mask);
      return LossAndGrad{jl.loss, std::move(jl.grad_g)};
    };
    worst[4].error = std::max({worst[4].error, detail::param_grad_error(inst.f, inst.x, via_f, step),
                               detail::score_grad_error(sf, via_f, step)});
    worst[5].error = std::max({worst[5].error, detail::param_grad_error(inst.g, inst.x, via_g, step),
                               detail::score_grad_error(sg, via_g, step)});
  }
  std::vector<CheckResult> out;
  for (const auto& w : worst) {
    out.push_back({w.name, w.error <= tolerance,
                   "max relative error " + csv::format_real(w.error)});
  }
  return out;
}

/// Flip accounting over random label matrices for every noise type.
inline CheckResult check_noise_accounting(std::size_t instances = 100) {
  for (std::size_t k = 0; k < instances; ++k) {
    Rng rng(derive_seed(k, "noise-check"));
    const std::size_t n = 1 + rng.index(60);
    const std::size_t n_classes = 1 + rng.index(8);
    LabelMatrix y(n, n_classes);
    const double density = rng.uniform();
    for (auto& v : y.flat()) v = rng.bernoulli(density) ? 1 : 0;
    const NoiseSpec spec{static_cast<NoiseType>(rng.index(3)), rng.uniform(), rng.next_u64()};
    const auto out = inject_noise(y, spec);
    const auto present = class_present_counts(y);
    for (std::size_t c = 0; c < n_classes; ++c) {
      std::size_t added = 0;
      std::size_t removed = 0;
      for (std::size_t i = 0; i < n; ++i) {
        added += !y(i, c) && out.labels(i, c);
        removed += y(i, c) && !out.labels(i, c);
      }
      const std::size_t planned = planned_flips(present[c], spec.rate);
      const bool add = spec.noise_type != NoiseType::subtractive;
      const bool sub = spec.noise_type != NoiseType::additive;
      const std::size_t want_add = add ? std::min(planned, n - present[c]) : 0;
      const std::size_t want_sub = sub ? planned : 0;
      if (added != want_add || removed != want_sub || out.report.performed_add[c] != added ||
          out.report.performed_sub[c] != removed ||
          out.report.is_clamped(c) != (add && planned > n - present[c])) {
        return {"noise/accounting", false, "mismatch in instance " + std::to_string(k)};
      }
    }
  }
  return {"noise/accounting", true, std::to_string(instances) + " random instances"};
}

inline CheckResult check_metric_examples() {
  const double scores[] = {0.9, 0.8, 0.3};
  const std::uint8_t labels[] = {1, 0, 1};
  const double ap = average_precision(scores, labels);
  const double expected = 0.5 + 0.5 * (2.0 / 3.0);
  const ScoreMatrix s(2, 2, {0.9, 0.2, 0.6, 0.1});
  const LabelMatrix y(2, 2, {1, 0, 0, 1});
  const double micro = map_micro(s, y);
  const bool ok = std::abs(ap - expected) <= 1e-12 && std::abs(micro - 0.75) <= 1e-12;
  return {"metrics/worked_examples", ok,
          "AP=" + csv::format_real(ap) + " mAP-micro=" + csv::format_real(micro)};
}

inline std::vector<CheckResult> run_self_check() {
  auto results = check_gradients();
  results.push_back(check_noise_accounting());
  results.push_back(check_metric_examples());
  return results;
}

}  // namespace mlnoise
