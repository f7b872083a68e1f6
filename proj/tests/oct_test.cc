// Copyright 2026 The qsense Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at

//     https://www.apache.org/licenses/LICENSE-2.0

// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qsense/oct.hpp"

#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "qsense/protocols.hpp"
#include "test_util.h"

namespace qsense {
namespace {

using testing::RandomWaveform;

double Cost(const ControlWaveform& wf, const CostSpec& cost) {
  return terminal_cost(evolve(SensorModel{}, wf), cost);
}

Eigen::VectorXd FiniteDifferenceGradient(const ControlWaveform& wf,
                                         const CostSpec& cost, double eps) {
  Eigen::VectorXd g(wf.n_t());
  ControlWaveform w = wf;
  w.u_max = wf.u_max + 2 * eps;
  for (int i = 0; i < wf.n_t(); ++i) {
    const double u = w.values(i);
    w.values(i) = u + eps;
    const double cp = Cost(w, cost);
    w.values(i) = u - eps;
    const double cm = Cost(w, cost);
    w.values(i) = u;
    g(i) = (cp - cm) / (2 * eps);
  }
  return g;
}

AugmentedState RandomPair(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  AugmentedState s;
  for (int k = 0; k < 2; ++k) {
    s.psi0(k) = {n(rng), n(rng)};
    s.psi1(k) = {n(rng), n(rng)};
  }
  return s;
}

TEST(TerminalCostTest, ZeroWaveform) {
  const Trajectory traj = evolve(SensorModel{}, ControlWaveform::zeros(3.0, 0.2, 100));
  EXPECT_NEAR(terminal_cost(traj, {CostKind::EtaSquared, 0.0}), 0.0, 1e-15);
  EXPECT_NEAR(terminal_cost(traj, {CostKind::NegQfi, 0.0}), 0.0, 1e-12);
}

TEST(TerminalCostTest, MatchesSensitivityAndQfi) {
  std::mt19937_64 rng(3);
  const ControlWaveform wf = RandomWaveform(rng, 6.0, 0.3, 60);
  const double eta = sensitivity(SensorModel{}, wf);
  EXPECT_NEAR(Cost(wf, {CostKind::EtaSquared, 0.0}), -0.5 * eta * eta, 1e-15);
  EXPECT_NEAR(Cost(wf, {CostKind::NegQfi, 0.0}), -qfi(SensorModel{}, wf), 1e-13);
}

class TerminalAdjointTest : public ::testing::TestWithParam<CostKind> {};

TEST_P(TerminalAdjointTest, IsDirectionalDerivative) {
  std::mt19937_64 rng(4);
  const AugmentedState s = evolve_final(SensorModel{}, RandomWaveform(rng, 5.0, 0.3, 40),
                                        Frame::Lab);
  const AugmentedState pi = terminal_adjoint(s, GetParam());
  for (int k = 0; k < 5; ++k) {
    const AugmentedState d = RandomPair(rng);
    const double eps = 1e-6;
    const double fd = (terminal_cost_value(s + d * eps, GetParam()) -
                       terminal_cost_value(s + d * -eps, GetParam())) /
                      (2 * eps);
    EXPECT_NEAR(inner(pi, d).real(), fd, 1e-7 * (1 + std::abs(fd)));
  }
}

INSTANTIATE_TEST_SUITE_P(Costs, TerminalAdjointTest,
                         ::testing::Values(CostKind::EtaSquared, CostKind::NegQfi));

class SwitchingFunctionTest : public ::testing::TestWithParam<CostKind> {};

TEST_P(SwitchingFunctionTest, MatchesFiniteDifferenceGradient) {
  std::mt19937_64 rng(20 + static_cast<int>(GetParam()));
  const double u = 0.2;
  for (int trial = 0; trial < 3; ++trial) {
    const ControlWaveform wf = RandomWaveform(rng, 0.6 * t_qsl(u), u, 200);
    const CostSpec cost{GetParam(), 0.0};
    const auto diag = adjoint_diagnostics(evolve(SensorModel{}, wf), cost).second;
    const Eigen::VectorXd fd = FiniteDifferenceGradient(wf, cost, 1e-6);
    EXPECT_LT(testing::RelErr(diag.phi * wf.dt(), fd), 1e-4);
  }
}

INSTANTIATE_TEST_SUITE_P(Costs, SwitchingFunctionTest,
                         ::testing::Values(CostKind::EtaSquared, CostKind::NegQfi));

TEST(CostGradientTest, SmoothnessTermMatchesFiniteDifference) {
  std::mt19937_64 rng(31);
  const ControlWaveform wf = RandomWaveform(rng, 6.0, 0.2, 120);
  const CostSpec cost{CostKind::EtaSquared, 3.0};
  const CostGradient cg = cost_and_gradient(SensorModel{}, wf, cost);
  EXPECT_NEAR(cg.cost, Cost(wf, cost), 1e-14);
  EXPECT_LT(testing::RelErr(cg.gradient, FiniteDifferenceGradient(wf, cost, 1e-6)),
            1e-6);
}

TEST(SmoothnessTest, ConstantWaveformIsFree) {
  const ControlWaveform wf(2.0, 0.2, Eigen::VectorXd::Constant(10, 0.13));
  const auto [c, g] = smoothness_cost_and_gradient(wf);
  EXPECT_EQ(c, 0.0);
  EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(smoothness_cost_and_gradient(ControlWaveform::zeros(1.0, 0.2, 2)),
               std::invalid_argument);
}

TEST(SmoothnessTest, QuadraticFormValue) {
  const ControlWaveform wf(1.0, 1.0, Eigen::Vector4d(0.0, 1.0, 1.0, 0.0));
  EXPECT_DOUBLE_EQ(smoothness_cost_and_gradient(wf).first, 0.5 * 2.0 / 0.25);
}

TEST(ControlHamiltonianTest, ConstantAcrossEachInterval) {
  std::mt19937_64 rng(41);
  const ControlWaveform wf = RandomWaveform(rng, 4.0, 0.3, 50);
  const Trajectory traj = evolve(SensorModel{}, wf);
  const CostSpec cost{CostKind::EtaSquared, 0.0};
  const auto [adj, diag] = adjoint_diagnostics(traj, cost);
  for (int i = 0; i < wf.n_t(); ++i) {
    const Field3<double> h(wf.values(i), 0.0, 0.5);
    const double end =
        sandwich(adj.states[i + 1], augmented_generator(h), traj.states[i + 1]).imag();
    EXPECT_NEAR(end, diag.h_oc(i), 1e-12);
  }
}

TEST(ControlHamiltonianTest, DiagnosticsNeedLabFrameAtZeroField) {
  const ControlWaveform wf = yx_waveform({0.2, 5.0, 1.0}, 100);
  const CostSpec cost;
  EXPECT_THROW(adjoint_diagnostics(evolve(SensorModel{}, wf, Frame::Rotating), cost),
               std::invalid_argument);
  EXPECT_THROW(adjoint_diagnostics(evolve(SensorModel{1.0, 0.1}, wf), cost),
               std::invalid_argument);
}

TEST(ParametricGradientTest, IndicatorBasisSumsBlocks) {
  std::mt19937_64 rng(51);
  const ControlWaveform wf = RandomWaveform(rng, 5.0, 0.2, 100);
  const CostGradient cg = cost_and_gradient(SensorModel{}, wf, {});
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(100, 4);
  for (int i = 0; i < 100; ++i) jac(i, i / 25) = 1.0;
  const Eigen::VectorXd g = parametric_gradient(cg, jac);
  for (int b = 0; b < 4; ++b)
    EXPECT_NEAR(g(b), cg.gradient.segment(25 * b, 25).sum(), 1e-15);
}

TEST(ParametricGradientTest, DetuneFamilyMatchesFiniteDifference) {
  const DetuneParams p{0.2, 9.0, 1.3, 0.2, 1.0};
  const int n = 400;
  auto cost_of = [&](const DetuneParams& q) {
    ControlWaveform wf = detune_waveform(q, n);
    wf.envelope.reset();
    return Cost(wf, {});
  };
  ControlWaveform wf = detune_waveform(p, n);
  wf.envelope.reset();
  const Eigen::VectorXd g =
      parametric_gradient(cost_and_gradient(SensorModel{}, wf, {}),
                          Eigen::MatrixXd(detune_jacobian(p, n)));
  const double eps = 1e-6;
  DetuneParams a = p, b = p;
  a.omega += eps;
  b.omega -= eps;
  EXPECT_NEAR(g(0), (cost_of(a) - cost_of(b)) / (2 * eps), 1e-6 * std::abs(g(0)));
  a = p;
  b = p;
  a.a += eps;
  b.a -= eps;
  EXPECT_NEAR(g(1), (cost_of(a) - cost_of(b)) / (2 * eps), 1e-6 * std::abs(g(1)));
}

TEST(CostDeviationTest, FirstOrderEstimate) {
  std::mt19937_64 rng(61);
  const ControlWaveform ref = RandomWaveform(rng, 5.0, 0.2, 100);
  const CostGradient cg = cost_and_gradient(SensorModel{}, ref, {});
  EXPECT_EQ(estimate_cost_deviation(cg.phi, ref, ref), 0.0);
  ControlWaveform app = ref;
  for (int i = 0; i < 100; ++i) app.values(i) += 1e-4 * std::sin(0.3 * i);
  app.u_max += 1e-4;
  const double direct = Cost(app, {}) - cg.cost;
  EXPECT_NEAR(estimate_cost_deviation(cg.phi, ref, app), direct,
              1e-2 * std::abs(direct));
  EXPECT_THROW(estimate_cost_deviation(cg.phi.head(99), ref, app),
               std::invalid_argument);
}

TEST(CostDeviationTest, SensitivityChange) {
  EXPECT_DOUBLE_EQ(eta_change_from_cost(-0.02, 4.0), 0.005);
  EXPECT_DOUBLE_EQ(eta_change_from_cost(-0.02, -4.0), 0.005);
}

ControlWaveform FromValues(std::initializer_list<double> v) {
  Eigen::VectorXd e(v.size());
  int k = 0;
  for (double x : v) e(k++) = x;
  return ControlWaveform(1.0, 1.0, e);
}

TEST(ArcClassificationTest, BangsSwitchesAndSingularRuns) {
  const ControlWaveform wf = FromValues({1, 1, 0.3, -1, -1, 0.1, 0.2, -0.1, 1});
  const auto labels = classify_arcs(wf);
  EXPECT_EQ(encode_arcs(labels), "3+2-3S1+");
  EXPECT_EQ(count_singular(labels), 3);
  EXPECT_TRUE(singular_arc_contiguous(labels));
}

TEST(ArcClassificationTest, SwitchSamplesTakeTheirSign) {
  const auto labels = classify_arcs(FromValues({1, 1, -0.2, 0.4, -1, -1}));
  EXPECT_EQ(encode_arcs(labels), "2+1-1+2-");
  EXPECT_EQ(count_singular(labels), 0);
  EXPECT_FALSE(singular_arc_contiguous(labels));
}

TEST(ArcClassificationTest, NonContiguousSingularRuns) {
  const auto labels = classify_arcs(FromValues({0, 0, 0, 1, 1, 1, 0, 0, 0}));
  EXPECT_EQ(encode_arcs(labels), "3S3+3S");
  EXPECT_FALSE(singular_arc_contiguous(labels));
}

TEST(ArcClassificationTest, LargeSwitchingFunctionRulesOutSingular) {
  const ControlWaveform wf = FromValues({1, 0.2, 0.1, -0.1, -1});
  Eigen::VectorXd phi(5);
  phi << -1, -0.5, 1e-5, 0.5, 1;
  EXPECT_EQ(encode_arcs(classify_arcs(wf)), "1+3S1-");
  EXPECT_EQ(encode_arcs(classify_arcs(wf, phi)), "2+1S2-");
  EXPECT_THROW(classify_arcs(wf, phi.head(4)), std::invalid_argument);
}

TEST(CostKindTest, RoundTrip) {
  EXPECT_EQ(cost_kind_from_string(to_string(CostKind::NegQfi)), CostKind::NegQfi);
  EXPECT_EQ(cost_kind_from_string("eta2"), CostKind::EtaSquared);
  EXPECT_THROW(cost_kind_from_string("eta"), std::invalid_argument);
}

OptimizationConfig Config(double u, double r, CostKind kind = CostKind::EtaSquared) {
  OptimizationConfig c;
  c.u_max = u;
  c.tau = r * t_qsl(u);
  c.n_t = 400;
  c.cost.kind = kind;
  return c;
}

TEST(OptimizerTest, ShortDurationIsBangBang) {
  const OptimizationConfig cfg = Config(0.2, 0.6);
  const OptimizationResult r = optimize_multistart(cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(count_singular(r.arc_labels), 0) << encode_arcs(r.arc_labels);
  const double eta = std::abs(sensitivity(SensorModel{}, r.waveform));
  EXPECT_GT(eta, eta_yx_rwa(cfg.u_max, cfg.tau));
  for (std::size_t k = 1; k < r.history.size(); ++k)
    EXPECT_LE(r.history[k], r.history[k - 1]);
  const OptimalityReport rep = verify_optimality(r);
  EXPECT_TRUE(rep.passed()) << rep.h_oc_constancy << " " << rep.bang_consistency_rate;
  EXPECT_EQ(rep.singular_samples, 0);
}

TEST(OptimizerTest, LongDurationHasSingularArc) {
  const OptimizationConfig cfg = Config(0.2, 1.2);
  const OptimizationResult r = optimize_multistart(cfg);
  EXPECT_GT(count_singular(r.arc_labels), 0) << encode_arcs(r.arc_labels);
  EXPECT_TRUE(singular_arc_contiguous(r.arc_labels));
  EXPECT_EQ(r.arc_labels.front(), r.arc_labels.back());
  EXPECT_NE(r.arc_labels.front(), ArcLabel::Singular);
  const OptimalityReport rep = verify_optimality(r);
  EXPECT_TRUE(rep.passed()) << rep.h_oc_constancy << " " << rep.singular_phi_ratio;

  // The singular candidate reproduces the control deep inside the arc.
  int checked = 0;
  const int n = cfg.n_t;
  for (int i = n / 2 - 20; i <= n / 2 + 20; ++i) {
    if (r.arc_labels[i] != ArcLabel::Singular) continue;
    ASSERT_TRUE(std::isfinite(r.diagnostics.u_sing(i)));
    EXPECT_NEAR(r.diagnostics.u_sing(i), r.waveform.values(i), 2e-2 * cfg.u_max);
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(OptimizerTest, ArbitraryWaveformsFailVerification) {
  std::mt19937_64 rng(71);
  const OptimizationConfig cfg = Config(0.2, 0.6);
  const OptimizationResult random =
      diagnose(SensorModel{}, RandomWaveform(rng, cfg.tau, cfg.u_max, 400), cfg.cost);
  EXPECT_FALSE(verify_optimality(random).h_oc_constant_ok);
  const OptimizationResult bang = diagnose(
      SensorModel{}, ControlWaveform(cfg.tau, cfg.u_max, Eigen::VectorXd::Constant(400, cfg.u_max)),
      cfg.cost);
  EXPECT_LT(verify_optimality(bang).bang_consistency_rate, 1.0);
  EXPECT_FALSE(verify_optimality(bang).passed());
}

TEST(OptimizerTest, QfiOptimumStaysBelowBound) {
  const OptimizationConfig cfg = Config(0.2, 1.2, CostKind::NegQfi);
  const OptimizationResult r = optimize_multistart(cfg);
  const Eigen::VectorXd q = qfi_series(evolve(SensorModel{}, r.waveform));
  const double dt = r.waveform.dt();
  for (int k = 0; k < q.size(); ++k) EXPECT_LE(q(k), std::pow(k * dt, 2) + 1e-9);
  EXPECT_GT(q(q.size() - 1), 0.5 * cfg.tau * cfg.tau);
}

TEST(OptimizerTest, SingularSubstitutionNeverRaisesCost) {
  OptimizationConfig cfg = Config(0.2, 1.2);
  cfg.singular_substitution = true;
  cfg.max_iters = 200;
  std::mt19937_64 rng(81);
  const OptimizationResult r =
      optimize_free_form(cfg, RandomWaveform(rng, cfg.tau, cfg.u_max, 400));
  for (std::size_t k = 1; k < r.history.size(); ++k)
    EXPECT_LE(r.history[k], r.history[k - 1]);
}

TEST(OptimizerTest, RejectsInvalidConfiguration) {
  OptimizationConfig cfg = Config(0.2, 0.6);
  cfg.n_t = 50;
  EXPECT_THROW(optimize_multistart(cfg), std::invalid_argument);
  cfg = Config(0.2, 0.6);
  EXPECT_THROW(optimize_free_form(cfg, ControlWaveform::zeros(cfg.tau, 0.2, 300)),
               std::invalid_argument);
  cfg.cost.smooth_weight = -1;
  EXPECT_THROW(optimize_multistart(cfg), std::invalid_argument);
}

TEST(OptimizerTest, MultistartGuessesAreFeasible) {
  OptimizationConfig cfg = Config(0.2, 0.6);
  cfg.seeds = {1, 2};
  const auto guesses = multistart_guesses(cfg);
  ASSERT_EQ(guesses.size(), 6u);
  EXPECT_EQ(guesses[5].first, "random:2");
  for (const auto& [name, wf] : guesses) {
    EXPECT_NO_THROW(wf.validate()) << name;
    EXPECT_EQ(wf.n_t(), cfg.n_t);
    EXPECT_FALSE(wf.envelope.has_value());
  }
}

}  // namespace
}  // namespace qsense
