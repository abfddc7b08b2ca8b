/*
 * Copyright 2026 The abelnet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "abelnet/trainer.hpp"

using namespace abelnet;

namespace {

const AbelSystem& sys_small() {
  static const AbelSystem s = AbelSystem::build(1.0, 1.0, 100, 8);
  return s;
}

std::vector<SignalRecord> records(const AbelSystem& sys, int n, std::uint64_t seed, double noise = 0.05) {
  std::vector<SignalRecord> out;
  for (int i = 0; i < n; ++i)
    out.push_back(make_record(generate_raw(mix_seed(seed, 0, i), sys.N()), sys, noise, mix_seed(seed, 1, i),
                              "train", i, "test"));
  return out;
}

NetConfig config_for(ConstraintKind kind, int m, int K) {
  NetConfig cfg;
  cfg.m = m;
  cfg.f_max = K / 2;
  cfg.constraint.kind = kind;
  cfg.constraint.x_min = -0.5;
  cfg.constraint.x_max = 1.5;
  return cfg;
}

double loss_at(const NetParams& p, const SignalRecord& r, const NetConfig& cfg, const AbelSystem& sys,
               const Constraint& C) {
  return mse_loss(forward(initial_iterate(r.b0, cfg), r.b0, p, cfg, sys, C).x.coeffs, r.x_true.coeffs);
}

}  // namespace

TEST(Loss, MseExamples) {
  EXPECT_EQ(mse_loss(Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(1.0, 2.0)), 0.0);
  EXPECT_DOUBLE_EQ(mse_loss(Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(0.0, 0.0)), 0.5);
  EXPECT_DOUBLE_EQ(mse_loss(Eigen::Vector3d(3.0, 0.0, 0.0), Eigen::Vector3d(0.0, 0.0, 1.0)), 10.0 / 3.0);
  EXPECT_THROW(mse_loss(Eigen::Vector2d(1, 1), Eigen::Vector3d(1, 1, 1)), Error);
}

TEST(Backward, MatchesFiniteDifferences) {
  const AbelSystem& sys = sys_small();
  const auto recs = records(sys, 20, 7);
  const double eps = 1e-5;
  for (ConstraintKind kind : {ConstraintKind::Box, ConstraintKind::Slab, ConstraintKind::None}) {
    const NetConfig cfg = config_for(kind, 3, 8);
    const Constraint C = cfg.constraint.materialize(sys.grid());
    for (int seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(100 + seed);
      std::uniform_real_distribution<double> uc(-0.5, 0.8), ud(-6.0, -3.0), ue(-6.0, -3.0);
      NetParams p = NetParams::constant(3, 0, 0, 0);
      for (int n = 0; n < 3; ++n) {
        p.c(n) = uc(rng);
        p.d(n) = ud(rng);
        p.e(n) = ue(rng);
      }
      const SignalRecord& r = recs[seed];
      const ForwardResult fr = forward(initial_iterate(r.b0, cfg), r.b0, p, cfg, sys, C);
      const Gradients g = backward(fr.trace, r.x_true.coeffs, p, cfg, sys);
      Eigen::VectorXd got(9), fd(9);
      got << g.c, g.d, g.e;
      for (int j = 0; j < 9; ++j) {
        NetParams pp = p, pm = p;
        Eigen::VectorXd* vp = j < 3 ? &pp.c : (j < 6 ? &pp.d : &pp.e);
        Eigen::VectorXd* vm = j < 3 ? &pm.c : (j < 6 ? &pm.d : &pm.e);
        (*vp)(j % 3) += eps;
        (*vm)(j % 3) -= eps;
        fd(j) = (loss_at(pp, r, cfg, sys, C) - loss_at(pm, r, cfg, sys, C)) / (2 * eps);
      }
      const double scale = std::max(fd.cwiseAbs().maxCoeff(), 1e-12);
      for (int j = 0; j < 9; ++j)
        EXPECT_LE(std::abs(got(j) - fd(j)), 1e-4 * scale)
            << constraint_kind_name(kind) << " seed " << seed << " param " << j << ": " << got(j) << " vs " << fd(j);
    }
  }
}

TEST(Backward, ZeroAtExactFitAndNoBarrierGradient) {
  const AbelSystem& sys = sys_small();
  const auto recs = records(sys, 1, 8);
  const NetConfig cfg = config_for(ConstraintKind::None, 3, 8);
  const NetParams p = NetParams::constant(3, 0.3, -4.0, -2.0);
  const ForwardResult fr = forward(recs[0].b0, recs[0].b0, p, cfg, sys, NoBarrier{});
  const Gradients zero = backward(fr.trace, fr.x.coeffs, p, cfg, sys);
  EXPECT_EQ(zero.c.norm() + zero.d.norm() + zero.e.norm(), 0.0);
  const Gradients g = backward(fr.trace, recs[0].x_true.coeffs, p, cfg, sys);
  EXPECT_GT(g.c.norm(), 0.0);
  EXPECT_EQ(g.e.norm(), 0.0);  // barrier weight has no effect without a barrier
}

TEST(Adam, FirstStepClosedForm) {
  NetParams p = NetParams::constant(2, 1.0, 2.0, 3.0);
  Gradients g{Eigen::Vector2d(0.5, -2.0), Eigen::Vector2d(0.0, 1e-3), Eigen::Vector2d(-7.0, 4.0)};
  AdamState st;
  AdamConfig ac;
  ac.lr = 0.1;
  adam_step(p, g, st, ac);
  // bias-corrected moments equal g and g^2, so each step is lr g / (|g| + eps)
  auto step = [&](double gi) { return 0.1 * gi / (std::abs(gi) + 1e-8); };
  EXPECT_NEAR(p.c(0), 1.0 - step(0.5), 1e-14);
  EXPECT_NEAR(p.c(1), 1.0 - step(-2.0), 1e-14);
  EXPECT_EQ(p.d(0), 2.0);
  EXPECT_NEAR(p.d(1), 2.0 - step(1e-3), 1e-14);
  EXPECT_NEAR(p.e(0), 3.0 - step(-7.0), 1e-14);
  EXPECT_EQ(st.step, 1);

  // second step with the same gradient keeps the same size
  NetParams q = p;
  adam_step(q, g, st, ac);
  EXPECT_NEAR(q.c(0) - p.c(0), -step(0.5), 1e-12);
}

TEST(Init, ScheduleMapsBackToTargets) {
  const AbelSystem& sys = sys_small();
  NetConfig cfg = config_for(ConstraintKind::Box, 3, 8);
  const NetParams p = params_from_schedule({0.5, 1.0, 2.0}, 1e-4, 1e-3, 0.02, cfg);
  EXPECT_NEAR(softplus(p.c(2)), 2.0, 1e-12);
  EXPECT_NEAR(softplus(p.d(0)) * 0.02, 1e-4, 1e-16);
  EXPECT_NEAR(softplus(p.e(1)), 1e-3, 1e-15);
  const auto recs = records(sys, 10, 9);
  const NetParams fixed = initialize_params({InitScheme::Fixed}, recs, cfg, sys, 0.02);
  const double lam = 0.5 / (sys.betaT()(0) + 0.05 * sys.betaD()(7));
  EXPECT_NEAR(softplus(fixed.c(1)), lam, 1e-12);
  EXPECT_NEAR(softplus(fixed.d(1)) * 0.02, 0.05, 1e-12);
}

TEST(Init, SurrogateMatchesBarrierFreeNetwork) {
  const AbelSystem& sys = sys_small();
  NetConfig cfg = config_for(ConstraintKind::None, 4, 8);
  const auto recs = records(sys, 6, 10);
  const double ratio = reference_ratio(recs, cfg, sys);
  const std::vector<double> lam{0.5, 0.8, 1.2, 1.6};
  const NetParams p = params_from_schedule(lam, 1e-3, 1.0, ratio, cfg);
  EXPECT_NEAR(linear_surrogate_error(lam, 1e-3, ratio, recs, cfg, sys), evaluate(p, recs, cfg, sys), 1e-12);
}

TEST(Init, CalibratedBeatsFixed) {
  const AbelSystem& sys = sys_small();
  NetConfig cfg = config_for(ConstraintKind::Box, 4, 8);
  cfg.constraint.x_min = 0.0;
  cfg.constraint.x_max = 1.0;
  const auto recs = records(sys, 20, 11);
  const double ratio = reference_ratio(recs, cfg, sys);
  const NetParams cal = initialize_params({}, recs, cfg, sys, ratio);
  const NetParams fix = initialize_params({InitScheme::Fixed}, recs, cfg, sys, ratio);
  EXPECT_LT(evaluate(cal, recs, cfg, sys), evaluate(fix, recs, cfg, sys));
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  const AbelSystem& sys = sys_small();
  const NetConfig cfg = config_for(ConstraintKind::Box, 3, 8);
  const auto tr = records(sys, 5, 12);
  TrainConfig tc;
  tc.epochs = 0;
  const TrainResult res = train(tr, {}, tc, cfg, sys);
  ASSERT_EQ(res.reports.size(), 1u);
  EXPECT_EQ(res.reports[0].epoch, 0);
  EXPECT_NEAR(res.reports[0].val_loss, mean_loss(res.initial, tr, cfg, sys, cfg.constraint.materialize(sys.grid())), 1e-15);
  EXPECT_EQ(res.best_epoch, 0);
  EXPECT_EQ(res.params.c, res.initial.c);
  EXPECT_GT(res.tau_reference_ratio, 0.0);
  tc.epochs = -1;
  EXPECT_THROW(train(tr, {}, tc, cfg, sys), Error);
}

TEST(Train, OverfitsSmallSet) {
  const AbelSystem& sys = sys_small();
  const NetConfig cfg = config_for(ConstraintKind::Box, 5, 8);
  const Constraint C = cfg.constraint.materialize(sys.grid());
  const auto tr = records(sys, 5, 13, 0.0);
  // short steps (lambda ~ 0.05): the output starts close to b0, far from the optimum
  const NetParams init = NetParams::constant(5, -3.0, softplus_inverse(1e-2), softplus_inverse(1e-3));
  TrainConfig tc;
  tc.epochs = 50;
  tc.learning_rate = 0.2;
  tc.certify_each_epoch = false;
  const TrainResult res = train(tr, tr, tc, cfg, sys, &init);
  const double before = mean_loss(init, tr, cfg, sys, C);
  const double after = mean_loss(res.params, tr, cfg, sys, C);
  EXPECT_LE(after, before / 10.0) << before << " -> " << after;
  ASSERT_EQ(res.reports.size(), 51u);
  EXPECT_NEAR(res.reports[0].val_loss, before, 1e-15);
  EXPECT_GT(res.best_epoch, 0);
}

TEST(Train, DeterministicForFixedSeed) {
  const AbelSystem& sys = sys_small();
  const NetConfig cfg = config_for(ConstraintKind::Box, 3, 8);
  const auto tr = records(sys, 8, 14), va = records(sys, 4, 15);
  TrainConfig tc;
  tc.epochs = 3;
  tc.learning_rate = 1e-2;
  tc.batch_size = 2;
  const TrainResult a = train(tr, va, tc, cfg, sys), b = train(tr, va, tc, cfg, sys);
  EXPECT_EQ(a.params.c, b.params.c);
  EXPECT_EQ(a.params.d, b.params.d);
  EXPECT_EQ(a.params.e, b.params.e);
  ASSERT_EQ(a.reports.size(), 4u);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(a.reports[k].epoch, k);
    EXPECT_EQ(a.reports[k].val_loss, b.reports[k].val_loss);
    EXPECT_TRUE(std::isfinite(a.reports[k].lipschitz_case1));
  }
}

TEST(Adam, ZeroGradientLeavesParamsAndDecaysMoments) {
  NetParams p = NetParams::constant(2, 1.0, 2.0, 3.0);
  AdamState st;
  AdamConfig ac;
  adam_step(p, Gradients{Eigen::Vector2d(1.0, 1.0), Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()}, st, ac);
  const NetParams before = p;
  const Eigen::VectorXd m1 = st.m1;
  adam_step(p, Gradients::zeros(2), st, ac);
  EXPECT_EQ(p.d, before.d);
  EXPECT_EQ(p.e, before.e);
  EXPECT_DOUBLE_EQ(st.m1(0), 0.9 * m1(0));
}

TEST(Evaluate, RelativeErrorEndpoints) {
  const Eigen::Vector3d x(1.0, -2.0, 0.5);
  EXPECT_EQ(relative_error(x, x), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(Eigen::Vector3d::Zero(), x), 1.0);
  EXPECT_THROW(relative_error(x, Eigen::Vector3d::Zero()), Error);
}

TEST(Evaluate, FixtureRegression) {
  const AbelSystem& sys = sys_small();
  std::vector<SignalRecord> recs;
  for (int i = 0; i < 6; ++i)
    recs.push_back(make_record(generate_raw(mix_seed(21, 0, i), sys.N()), sys, 0.05, mix_seed(21, 1, i), "val", i,
                               "test"));
  NetConfig cfg;
  cfg.m = 4;
  cfg.f_max = 4;
  const NetParams p = NetParams::constant(4, softplus_inverse(1.5), softplus_inverse(1e-3), softplus_inverse(1e-3));
  EXPECT_NEAR(evaluate(p, recs, cfg, sys), 0.4528017713087979, 1e-12);
}
