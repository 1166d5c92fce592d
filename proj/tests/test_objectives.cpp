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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "mlnoise/core.hpp"
#include "mlnoise/objectives.hpp"
#include "mlnoise/selfcheck.hpp"
#include "oracles.hpp"

using namespace mlnoise;

namespace {

ScoreMatrix random_scores(std::size_t n, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  ScoreMatrix s(n, c);
  for (double& v : s.flat()) v = 0.05 + 0.9 * rng.uniform();
  return s;
}

LabelMatrix random_labels(std::size_t n, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  LabelMatrix y(n, c);
  for (auto& v : y.flat()) v = rng.bernoulli(0.4);
  return y;
}

// Score-gradient check against the test oracle.
template <typename LossFn>
double score_grad_error(const ScoreMatrix& s, LossFn loss) {
  const auto analytic = loss(s).grad.values();
  auto f = [&](const std::vector<double>& flat) {
    return loss(ScoreMatrix(s.rows(), s.cols(), flat)).loss;
  };
  return oracle::max_rel_error(analytic, oracle::central_diff(f, s.values(), 1e-5));
}

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

}  // namespace

// BCE -------------------------------------------------------------------------

TEST(Bce, HalfEverywhere) {
  const auto lg = bce_loss(ScoreMatrix(1, 2, 0.5), LabelMatrix(1, 2, {1, 0}));
  EXPECT_NEAR(lg.loss, 2.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(lg.loss, 1.3863, 1e-4);
}

TEST(Bce, SingleLabelHandValues) {
  const auto lg = bce_loss(ScoreMatrix(1, 1, 0.9), LabelMatrix(1, 1, 1));
  EXPECT_NEAR(lg.loss, 0.10536, 1e-5);
  EXPECT_NEAR(lg.grad(0, 0), -1.1111, 1e-4);
}

TEST(Bce, StationaryWhenTargetsEqualScores) {
  const auto lg = bce_loss(ScoreMatrix(1, 1, 0.3), RealMatrix(1, 1, 0.3));
  EXPECT_NEAR(lg.grad(0, 0), 0.0, 1e-12);
}

TEST(Bce, ClampsExtremes) {
  const auto lg = bce_loss(ScoreMatrix(1, 2, {0.0, 1.0}), LabelMatrix(1, 2, {1, 0}));
  EXPECT_TRUE(std::isfinite(lg.loss));
  EXPECT_NEAR(lg.loss, -2.0 * std::log(kProbClamp), 1e-9);
}

TEST(Bce, ShapeMismatch) {
  EXPECT_THROW(bce_loss(ScoreMatrix(2, 2), RealMatrix(2, 3)), ValidationError);
}

TEST(Bce, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto y = to_real(random_labels(16, 4, seed));
    EXPECT_LT(score_grad_error(random_scores(16, 4, seed + 10),
                               [&](const ScoreMatrix& s) { return bce_loss(s, y); }),
              1e-4);
  }
}

// SAT -------------------------------------------------------------------------

TEST(Sat, AlphaOneKeepsTargets) {
  auto state = SatState::from_labels(random_labels(4, 3, 1));
  const auto before = state.targets;
  const std::vector<std::size_t> rows = {0, 2};
  sat_update_targets(state, random_scores(2, 3, 2), rows, 1.0);
  EXPECT_EQ(state.targets, before);
}

TEST(Sat, ConvexCombinationValues) {
  SatState state{RealMatrix(3, 2, {1.0, 0.0, 1.0, 0.0, 1.0, 0.0})};
  const std::vector<std::size_t> rows = {1};
  sat_update_targets(state, ScoreMatrix(1, 2, {0.6, 0.2}), rows, 0.9);
  EXPECT_NEAR(state.targets(1, 0), 0.96, 1e-12);
  EXPECT_NEAR(state.targets(1, 1), 0.02, 1e-12);
  // Unlisted rows untouched.
  EXPECT_EQ(state.targets(0, 0), 1.0);
  EXPECT_EQ(state.targets(2, 1), 0.0);
}

TEST(Sat, IndexOutOfRange) {
  auto state = SatState::from_labels(LabelMatrix(2, 2, 0));
  const std::vector<std::size_t> rows = {5};
  EXPECT_THROW(sat_update_targets(state, ScoreMatrix(1, 2, 0.5), rows, 0.9), ValidationError);
}

TEST(Sat, LossEqualsBceOnFreshState) {
  const auto y = random_labels(8, 3, 4);
  const auto s = random_scores(8, 3, 5);
  const auto state = SatState::from_labels(y);
  const auto rows = iota_rows(8);
  const auto a = sat_loss(s, state, rows);
  const auto b = bce_loss(s, y);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad, b.grad);
}

TEST(Sat, StationaryAtHalf) {
  SatState state{RealMatrix(2, 2, 0.5)};
  const auto lg = sat_loss(ScoreMatrix(2, 2, 0.5), state, iota_rows(2));
  for (double g : lg.grad.flat()) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(Sat, GradientMatchesFiniteDifferences) {
  const auto inst = random_grad_instance(3);
  SatState state{inst.soft_targets};
  const auto rows = iota_rows(16);
  EXPECT_LT(score_grad_error(random_scores(16, 4, 8),
                             [&](const ScoreMatrix& s) { return sat_loss(s, state, rows); }),
            1e-4);
}

TEST(SatProperty, TargetsStayInUnitInterval) {
  Rng rng(17);
  auto state = SatState::from_labels(random_labels(20, 5, 18));
  for (int step = 0; step < 200; ++step) {
    std::vector<std::size_t> rows = {rng.index(20), rng.index(20)};
    if (rows[0] == rows[1]) rows.pop_back();
    ScoreMatrix s(rows.size(), 5);
    for (double& v : s.flat()) v = rng.uniform();
    sat_update_targets(state, s, rows, rng.uniform());
  }
  for (double t : state.targets.flat()) {
    EXPECT_GE(t, 0.0);
    EXPECT_LE(t, 1.0);
  }
}

// ELR -------------------------------------------------------------------------

TEST(Elr, BetaOneFreezesAndBetaZeroCopies) {
  auto state = ElrState::zeros(3, 2);
  const auto s = ScoreMatrix(1, 2, {0.3, 0.8});
  const std::vector<std::size_t> rows = {2};
  elr_update_targets(state, s, rows, 1.0);
  for (double t : state.targets.flat()) EXPECT_EQ(t, 0.0);
  elr_update_targets(state, s, rows, 0.0);
  EXPECT_EQ(state.targets(2, 0), 0.3);
  EXPECT_EQ(state.targets(2, 1), 0.8);
  EXPECT_EQ(state.targets(0, 0), 0.0);
}

TEST(Elr, RepeatedUpdatesFollowClosedForm) {
  auto state = ElrState::zeros(1, 1);
  const std::vector<std::size_t> rows = {0};
  for (int k = 1; k <= 8; ++k) {
    elr_update_targets(state, ScoreMatrix(1, 1, 1.0), rows, 0.7);
    EXPECT_NEAR(state.targets(0, 0), 1.0 - std::pow(0.7, k), 1e-14);
  }
}

TEST(Elr, ZeroTargetsReduceToBce) {
  const auto y = random_labels(6, 3, 1);
  const auto s = random_scores(6, 3, 2);
  const auto lg = elr_loss(s, y, RealMatrix(6, 3, 0.0), 3.0, ElrTargetMode::ema_predictions);
  const auto b = bce_loss(s, y);
  EXPECT_EQ(lg.loss, b.loss);
  EXPECT_EQ(elr_penalty(s, RealMatrix(6, 3, 0.0), 3.0).loss, 0.0);
}

TEST(Elr, SingleLabelPenalty) {
  const auto pen = elr_penalty(ScoreMatrix(1, 1, 0.5), RealMatrix(1, 1, 1.0), 1.0);
  EXPECT_NEAR(pen.loss, std::log(0.5), 1e-12);
  EXPECT_NEAR(pen.grad(0, 0), -2.0, 1e-12);
}

TEST(Elr, ObservedModeUsesLabels) {
  const auto y = LabelMatrix(1, 1, 1);
  const auto s = ScoreMatrix(1, 1, 0.5);
  const auto lg = elr_loss(s, y, RealMatrix(1, 1, 0.0), 1.0, ElrTargetMode::observed_labels);
  EXPECT_NEAR(lg.loss, -std::log(0.5) + std::log(0.5), 1e-12);
}

TEST(Elr, GradientMatchesFiniteDifferencesBothModes) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto inst = random_grad_instance(seed);
    for (auto mode : {ElrTargetMode::ema_predictions, ElrTargetMode::observed_labels}) {
      EXPECT_LT(score_grad_error(random_scores(16, 4, seed + 30),
                                 [&](const ScoreMatrix& s) {
                                   return elr_loss(s, inst.y, inst.soft_targets, 3.0, mode);
                                 }),
                1e-4);
    }
  }
}

TEST(ElrProperty, PenaltyNeverPositive) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    ScoreMatrix s(4, 3);
    RealMatrix t(4, 3);
    for (double& v : s.flat()) v = rng.uniform();
    for (double& v : t.flat()) v = rng.uniform();
    EXPECT_LE(elr_penalty(s, t, 1.0 + rng.uniform()).loss, 0.0);
  }
}

// JoCoR -----------------------------------------------------------------------

TEST(SymKl, HandValues) {
  EXPECT_EQ(sym_kl_bernoulli(0.37, 0.37), 0.0);
  EXPECT_NEAR(sym_kl_bernoulli(0.9, 0.1), 0.8 * std::log(81.0), 1e-12);
  EXPECT_NEAR(sym_kl_bernoulli(0.9, 0.1), 3.5156, 1e-4);
}

TEST(SymKlProperty, SymmetricNonNegativeAndMatchesTwoKls) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const double p = 0.01 + 0.98 * rng.uniform();
    const double q = 0.01 + 0.98 * rng.uniform();
    EXPECT_NEAR(sym_kl_bernoulli(p, q), sym_kl_bernoulli(q, p), 1e-12);
    EXPECT_GE(sym_kl_bernoulli(p, q), 0.0);
    const double kl_pq = p * std::log(p / q) + (1 - p) * std::log((1 - p) / (1 - q));
    const double kl_qp = q * std::log(q / p) + (1 - q) * std::log((1 - q) / (1 - p));
    EXPECT_NEAR(sym_kl_bernoulli(p, q), kl_pq + kl_qp, 1e-10);
    const auto [dp, dq] = sym_kl_bernoulli_grad(p, q);
    const double h = 1e-6;
    EXPECT_NEAR(dp, (sym_kl_bernoulli(p + h, q) - sym_kl_bernoulli(p - h, q)) / (2 * h),
                1e-4 * std::max(1.0, std::abs(dp)));
    EXPECT_NEAR(dq, (sym_kl_bernoulli(p, q + h) - sym_kl_bernoulli(p, q - h)) / (2 * h),
                1e-4 * std::max(1.0, std::abs(dq)));
  }
}

TEST(JocorLabelLosses, Degeneracies) {
  const auto sf = random_scores(5, 3, 1);
  const auto sg = random_scores(5, 3, 2);
  const auto y = random_labels(5, 3, 3);
  const auto l0 = jocor_label_losses(sf, sg, y, 0.0);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_NEAR(l0(i, c), bce_term(sf(i, c), y(i, c)) + bce_term(sg(i, c), y(i, c)), 1e-12);
    }
  }
  const auto l1 = jocor_label_losses(sf, sf, y, 1.0);
  for (double v : l1.flat()) EXPECT_EQ(v, 0.0);
}

TEST(JocorLabelLosses, WorkedExample) {
  const auto l = jocor_label_losses(ScoreMatrix(1, 1, 0.9), ScoreMatrix(1, 1, 0.8),
                                    LabelMatrix(1, 1, 1), 0.5);
  // 0.5 * (-ln 0.9 - ln 0.8) + 0.5 * 0.1 * ln 2.25
  const double expected = 0.5 * (-std::log(0.9) - std::log(0.8)) + 0.5 * 0.1 * std::log(2.25);
  EXPECT_NEAR(l(0, 0), expected, 1e-12);
  EXPECT_NEAR(l(0, 0), 0.20480, 1e-5);
}

TEST(JocorLabelLossesProperty, SymmetricUnderSwap) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto sf = random_scores(6, 4, seed);
    const auto sg = random_scores(6, 4, seed + 100);
    const auto y = random_labels(6, 4, seed + 200);
    const auto a = jocor_label_losses(sf, sg, y, 0.3);
    const auto b = jocor_label_losses(sg, sf, y, 0.3);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a.flat()[k], b.flat()[k], 1e-12);
  }
}

TEST(SmallLossSelection, Examples) {
  const RealMatrix losses(2, 2, {0.1, 0.5, 0.3, 0.9});
  const auto all = select_small_loss_labels(losses, 1.0);
  for (auto v : all.flat()) EXPECT_EQ(v, 1);
  const auto half = select_small_loss_labels(losses, 0.5);
  EXPECT_EQ(half.values(), (std::vector<std::uint8_t>{1, 0, 1, 0}));
  const auto ties = select_small_loss_labels(RealMatrix(1, 4, 0.7), 0.5);
  EXPECT_EQ(ties.values(), (std::vector<std::uint8_t>{1, 1, 0, 0}));
  EXPECT_THROW(select_small_loss_labels(losses, 0.0), ValidationError);
}

TEST(SmallLossSelectionProperty, KeepsExpectedCountOfSmallest) {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(10);
    const std::size_t c = 1 + rng.index(6);
    RealMatrix losses(n, c);
    for (double& v : losses.flat()) v = rng.uniform();
    const double keep = 0.01 + 0.99 * rng.uniform();
    const auto mask = select_small_loss_labels(losses, keep);
    const std::size_t count = n * c;
    const auto expected = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(keep * static_cast<double>(count))));
    std::size_t ones = 0;
    double max_kept = -1.0, min_dropped = 2.0;
    for (std::size_t k = 0; k < count; ++k) {
      if (mask.flat()[k]) {
        ++ones;
        max_kept = std::max(max_kept, losses.flat()[k]);
      } else {
        min_dropped = std::min(min_dropped, losses.flat()[k]);
      }
    }
    EXPECT_EQ(ones, expected);
    EXPECT_LE(max_kept, min_dropped);
  }
}

TEST(ForgetRate, Schedule) {
  EXPECT_EQ(forget_rate(0, 0.2, 5), 0.0);
  EXPECT_NEAR(forget_rate(2, 0.2, 5), 0.08, 1e-15);
  EXPECT_EQ(forget_rate(5, 0.2, 5), 0.2);
  EXPECT_EQ(forget_rate(17, 0.2, 5), 0.2);
  EXPECT_EQ(forget_rate(0, 0.2, 0), 0.2);
  EXPECT_THROW(forget_rate(1, 1.0, 5), ValidationError);
}

TEST(JocorLoss, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto sf = random_scores(16, 4, seed);
    const auto sg = random_scores(16, 4, seed + 7);
    const auto y = random_labels(16, 4, seed + 9);
    const auto mask = select_small_loss_labels(jocor_label_losses(sf, sg, y, 0.3), 0.6);
    EXPECT_LT(score_grad_error(sf,
                               [&](const ScoreMatrix& s) {
                                 auto jl = jocor_loss(s, sg, y, 0.3, mask);
                                 return LossAndGrad{jl.loss, jl.grad_f};
                               }),
              1e-4);
    EXPECT_LT(score_grad_error(sg,
                               [&](const ScoreMatrix& s) {
                                 auto jl = jocor_loss(sf, s, y, 0.3, mask);
                                 return LossAndGrad{jl.loss, jl.grad_g};
                               }),
              1e-4);
  }
}

TEST(JocorLoss, UnselectedEntriesHaveNoGradient) {
  const auto sf = random_scores(4, 3, 1);
  const auto sg = random_scores(4, 3, 2);
  const auto y = random_labels(4, 3, 3);
  const auto mask = select_small_loss_labels(jocor_label_losses(sf, sg, y, 0.3), 0.5);
  const auto jl = jocor_loss(sf, sg, y, 0.3, mask);
  EXPECT_EQ(jl.n_selected, 6u);
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask.flat()[k]) {
      EXPECT_EQ(jl.grad_f.flat()[k], 0.0);
      EXPECT_EQ(jl.grad_g.flat()[k], 0.0);
    }
  }
}

// Epoch driver ---------------------------------------------------------------

namespace {

struct Toy {
  Dataset data;
  TrainConfig cfg;
};

Toy toy(std::size_t epochs = 4) {
  SyntheticSpec spec;
  spec.n_examples = 300;
  spec.n_features = 8;
  spec.n_classes = 5;
  spec.seed = 12;
  Toy t{make_synthetic_dataset(spec), {}};
  t.cfg.epochs = epochs;
  t.cfg.lr_drop_epoch = 2;
  t.cfg.hidden_units = 16;
  t.cfg.batch_size = 32;
  t.cfg.seed = 99;
  return t;
}

}  // namespace

TEST(TrainEpoch, SatWithLongWarmupMatchesBce) {
  auto t = toy();
  MethodConfig mcfg;
  mcfg.sat.warmup_epochs = t.cfg.epochs;
  auto bce = make_train_state(Method::bce, 8, t.data.labels, t.cfg);
  auto sat = make_train_state(Method::sat, 8, t.data.labels, t.cfg);
  for (std::size_t e = 0; e < t.cfg.epochs; ++e) {
    const auto a = train_epoch(t.data.features, t.data.labels, bce, t.cfg, mcfg, e);
    const auto b = train_epoch(t.data.features, t.data.labels, sat, t.cfg, mcfg, e);
    EXPECT_EQ(a.batch_losses, b.batch_losses);
    EXPECT_EQ(bce.net, sat.net);
  }
  EXPECT_EQ(sat.sat.targets, to_real(t.data.labels));
}

TEST(TrainEpoch, SatRefurbishesAfterWarmup) {
  auto t = toy();
  MethodConfig mcfg;
  mcfg.sat.warmup_epochs = 2;
  auto sat = make_train_state(Method::sat, 8, t.data.labels, t.cfg);
  for (std::size_t e = 0; e < 2; ++e) {
    train_epoch(t.data.features, t.data.labels, sat, t.cfg, mcfg, e);
    EXPECT_EQ(sat.sat.targets, to_real(t.data.labels));
  }
  train_epoch(t.data.features, t.data.labels, sat, t.cfg, mcfg, 2);
  EXPECT_NE(sat.sat.targets, to_real(t.data.labels));
  for (double v : sat.sat.targets.flat()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(TrainEpoch, JocorDegeneratesToTwoBceRuns) {
  auto t = toy();
  MethodConfig mcfg;
  mcfg.jocor.lambda_j = 0.0;
  mcfg.jocor.tau = 0.0;
  auto jocor = make_train_state(Method::jocor, 8, t.data.labels, t.cfg);
  auto bce_f = make_train_state(Method::bce, 8, t.data.labels, t.cfg);
  auto bce_g = bce_f;
  bce_g.net = init_params(8, t.cfg.hidden_units, 5, twin_seed(t.cfg.seed));
  bce_g.opt = AdamWState::for_params(bce_g.net);
  ASSERT_NE(jocor.net, jocor.twin);
  for (std::size_t e = 0; e < t.cfg.epochs; ++e) {
    train_epoch(t.data.features, t.data.labels, jocor, t.cfg, mcfg, e);
    train_epoch(t.data.features, t.data.labels, bce_f, t.cfg, mcfg, e);
    train_epoch(t.data.features, t.data.labels, bce_g, t.cfg, mcfg, e);
    EXPECT_EQ(jocor.net, bce_f.net) << "epoch " << e;
    EXPECT_EQ(jocor.twin, bce_g.net) << "epoch " << e;
  }
}

TEST(TrainEpoch, ElrWithZeroLambdaMatchesBceLosses) {
  auto t = toy();
  MethodConfig mcfg;
  mcfg.elr.lambda = 0.0;
  auto bce = make_train_state(Method::bce, 8, t.data.labels, t.cfg);
  auto elr = make_train_state(Method::elr, 8, t.data.labels, t.cfg);
  for (std::size_t e = 0; e < t.cfg.epochs; ++e) {
    const auto a = train_epoch(t.data.features, t.data.labels, bce, t.cfg, mcfg, e);
    const auto b = train_epoch(t.data.features, t.data.labels, elr, t.cfg, mcfg, e);
    ASSERT_EQ(a.batch_losses.size(), b.batch_losses.size());
    for (std::size_t k = 0; k < a.batch_losses.size(); ++k) {
      EXPECT_NEAR(a.batch_losses[k], b.batch_losses[k], 1e-12);
    }
  }
}

TEST(TrainEpoch, JocorSmokeRunKeepsAtLeastOneLabel) {
  auto t = toy(6);
  t.cfg.lr_drop_epoch = 4;
  MethodConfig mcfg;
  mcfg.jocor.tau = 0.9;
  mcfg.jocor.ramp_epochs = 2;
  auto state = make_train_state(Method::jocor, 8, t.data.labels, t.cfg);
  for (std::size_t e = 0; e < t.cfg.epochs; ++e) {
    const auto r = train_epoch(t.data.features, t.data.labels, state, t.cfg, mcfg, e);
    EXPECT_TRUE(std::isfinite(r.mean_loss));
    EXPECT_GE(r.min_selected, 1u);
  }
}

TEST(TrainEpoch, LossDecreasesForEveryMethod) {
  for (auto m : {Method::bce, Method::sat, Method::elr, Method::jocor}) {
    auto t = toy(5);
    MethodConfig mcfg;
    auto state = make_train_state(m, 8, t.data.labels, t.cfg);
    const auto first = train_epoch(t.data.features, t.data.labels, state, t.cfg, mcfg, 0);
    EpochResult last;
    for (std::size_t e = 1; e < 5; ++e) {
      last = train_epoch(t.data.features, t.data.labels, state, t.cfg, mcfg, e);
    }
    EXPECT_LT(last.mean_loss, first.mean_loss) << to_string(m);
  }
}

TEST(Parsing, MethodAndModeNames) {
  for (auto m : {Method::bce, Method::sat, Method::elr, Method::jocor}) {
    EXPECT_EQ(parse_method(to_string(m)), m);
  }
  EXPECT_THROW(parse_method("coteaching"), ValidationError);
  EXPECT_EQ(parse_elr_target_mode("observed_labels"), ElrTargetMode::observed_labels);
  EXPECT_THROW(parse_elr_target_mode("labels"), ValidationError);
}
