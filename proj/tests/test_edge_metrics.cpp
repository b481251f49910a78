#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "edgelab/edge_metrics.hpp"
#include "edgelab/errors.hpp"

using namespace edgelab;

namespace {

Vector scalar(double x) { return Vector::Constant(1, x); }

ModelPtr quad1d(double lambda) { return make_quadratic(SymMatrix::diagonal(scalar(lambda)), Vector::Zero(1)); }

ModelPtr random_quadratic(std::uint64_t seed, Index n, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  Matrix A(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) A(i, j) = N(rng);
  }
  const Matrix Q = Eigen::HouseholderQR<Matrix>(A).householderQ();
  const Vector ev = Vector::LinSpaced(n, lo, hi);
  Matrix H = Q * ev.asDiagonal() * Q.transpose();
  H = (0.5 * (H + H.transpose())).eval();
  Vector c(n);
  for (Index i = 0; i < n; ++i) c(i) = N(rng);
  return make_quadratic(SymMatrix(H), c);
}

}  // namespace

TEST(Curvature, QuadraticIsConstant) {
  const auto m = quad1d(3.0);
  const TrajectoryLog log = run_gd(*m, scalar(1.0), 0.5, 10);
  for (Index k = 0; k < 10; ++k) {
    EXPECT_NEAR(rbar_exact(log, k), 3.0, 1e-13);
    EXPECT_NEAR(rtilde_from_loss(log, k), 3.0, 1e-10);
    EXPECT_NEAR(rbar_quadrature(*m, log, k, quadrature_for(*m)), 3.0, 1e-13);
    EXPECT_NEAR(rtilde_quadrature(*m, log, k, quadrature_for(*m)), 3.0, 1e-13);
  }
}

TEST(Curvature, LinearProfileMeans) {
  // L = ½λx² + (γ/3)x³ has q(τ) = λ + 2γ(w + τd), linear in τ.
  const double lambda = 1.0, gamma = 0.5;
  const auto m = make_scalar_poly(lambda, gamma, 0.0);
  const TrajectoryLog log = run_gd(*m, scalar(0.4), 0.3, 1);
  const double w = 0.4, d = log.steps[0](0);
  const double q0 = lambda + 2 * gamma * w, s = 2 * gamma * d;
  EXPECT_NEAR(q_profile(*m, scalar(w), scalar(d), 0.0), q0, 1e-15);
  EXPECT_NEAR(q_profile(*m, scalar(w), scalar(d), 1.0), q0 + s, 1e-15);
  EXPECT_NEAR(rbar_exact(log, 0), q0 + s / 2, 1e-13);
  EXPECT_NEAR(rtilde_quadrature(*m, log, 0, quadrature_for(*m)), q0 + s / 3, 1e-14);
  const LocalizationRecord rec = localize(*m, log, 0);
  EXPECT_NEAR(rec.xi, 1.0 / 3.0, 1e-9);
  EXPECT_NEAR(rec.zeta, 0.5, 1e-9);
  EXPECT_NEAR(rec.q_xi, rec.rtilde, 1e-10);
  EXPECT_NEAR(rec.q_zeta, rec.rbar, 1e-10);
  EXPECT_FALSE(rec.constant_profile);
}

TEST(Curvature, QProfileOfQuarticBump) {
  // L = ½x²+(1/3)x³ → q(τ) = 1 + 2τ at w=0, d=1.
  const auto m = make_scalar_poly(1.0, 1.0, 0.0);
  for (double t : {0.0, 0.25, 0.5, 1.0}) EXPECT_NEAR(q_profile(*m, scalar(0.0), scalar(1.0), t), 1.0 + 2.0 * t, 1e-15);
}

TEST(Curvature, RoutesAgreeOnPolynomials) {
  const auto m = make_scalar_poly(1.0, 0.6, -0.3);
  const TrajectoryLog log = run_gd(*m, scalar(0.5), 1.2, 40);
  const auto ex = curvature_samples(*m, log, CurvatureRoute::Exact);
  const auto qu = curvature_samples(*m, log, CurvatureRoute::Quadrature);
  ASSERT_EQ(ex.size(), 40u);
  for (std::size_t k = 0; k < ex.size(); ++k) {
    if (ex[k].step_norm_sq < 1e-12) continue;
    EXPECT_NEAR(ex[k].rbar, qu[k].rbar, 1e-9 * (1 + std::abs(qu[k].rbar)));
    // r̃ from losses loses digits by cancellation: scale by 1/‖d‖².
    EXPECT_NEAR(ex[k].rtilde, qu[k].rtilde, 1e-13 / ex[k].step_norm_sq + 1e-9);
  }
}

TEST(Curvature, DegenerateStepsAreNaN) {
  const auto m = quad1d(1.0);
  const TrajectoryLog log = run_gd(*m, scalar(0.0), 0.5, 3);
  const auto s = curvature_samples(*m, log, CurvatureRoute::Exact);
  for (const auto& c : s) EXPECT_TRUE(std::isnan(c.rtilde));
  EXPECT_THROW(localize(*m, log, 0), DegenerateStepError);
}

TEST(EdgeBalance, SingleModeQuadraticReport) {
  const auto m = quad1d(3.0);
  const TrajectoryLog log = run_gd(*m, scalar(1.0), 0.5, 50);
  const EdgeBalanceReport r = edge_balance_report(*m, log, CurvatureRoute::Quadrature);
  EXPECT_EQ(r.K, 50);
  EXPECT_NEAR(r.weighted_mean, 3.0, 1e-12);
  EXPECT_NEAR(r.max_rtilde, 3.0, 1e-12);
  // Oracle: E_K as a geometric sum of (1.5·0.5^k)².
  double E = 0.0;
  for (int k = 0; k < 50; ++k) E += 2.25 * std::pow(0.25, k);
  EXPECT_NEAR(r.E_K, E, 1e-12);
  EXPECT_NEAR(r.identity_lhs, r.identity_rhs, 1e-12);
  ASSERT_TRUE(r.forcing_bound.has_value());
  EXPECT_LE(*r.forcing_bound, r.max_rtilde + 1e-12);
  EXPECT_NEAR(*r.forcing_bound, 3.0, 1e-12);
  EXPECT_TRUE(r.forcing_holds);
}

TEST(EdgeBalance, IdentityHoldsAlongEdgeOfStabilityRun) {
  const auto m = make_scalar_poly(1.0, 0.0, -1.0);
  const TrajectoryLog log = run_gd(*m, scalar(0.3), 2.2, 300);
  for (auto route : {CurvatureRoute::Exact, CurvatureRoute::Quadrature}) {
    const EdgeBalanceReport r = edge_balance_report(*m, log, route);
    EXPECT_LT(std::abs(r.identity_residual), 1e-10 * (1 + std::abs(r.identity_rhs)));
    EXPECT_NEAR(r.signed_residual, 0.0, 1e-10);
    EXPECT_NEAR(r.weighted_mean, 2.0 / 2.2, 1e-3);
  }
}

TEST(EdgeBalance, WindowMassesRespectBounds) {
  const auto m = make_scalar_poly(1.0, 0.5, 0.2);
  const TrajectoryLog log = run_gd(*m, scalar(0.9), 1.5, 200);
  const EdgeBalanceReport r = edge_balance_report(*m, log, CurvatureRoute::Quadrature, {0.01, 0.1, 0.5});
  ASSERT_EQ(r.windows.size(), 3u);
  for (const WindowMass& w : r.windows) {
    ASSERT_TRUE(w.sub_bound.has_value());
    EXPECT_LE(w.sub_mass, *w.sub_bound + 1e-12);
    EXPECT_LE(w.super_mass, w.super_bound + 1e-12);
    EXPECT_GE(w.in_window_fraction, 0.0);
    EXPECT_LE(w.in_window_fraction, 1.0);
  }
}

TEST(EdgeBalance, RunningBalanceEndsAtTheReport) {
  const auto m = random_quadratic(3, 6, 0.5, 3.0);
  const TrajectoryLog log = run_gd(*m, Vector::Ones(6), 0.6, 80);
  const auto s = curvature_samples(*m, log, CurvatureRoute::Quadrature);
  const RunningBalance rb = running_balance(log, s, m->infimum());
  const EdgeBalanceReport r = edge_balance_from_samples(log, s, m->infimum());
  ASSERT_EQ(rb.weighted_mean.size(), 80u);
  EXPECT_NEAR(rb.weighted_mean.back(), r.weighted_mean, 1e-12);
  EXPECT_NEAR(rb.max_rtilde.back(), r.max_rtilde, 1e-12);
  EXPECT_TRUE(rb.forcing_holds_everywhere);
}

TEST(EdgeBalance, OnsetDetection) {
  std::vector<CurvatureSample> s(10);
  for (Index k = 0; k < 10; ++k) {
    s[static_cast<std::size_t>(k)].k = k;
    s[static_cast<std::size_t>(k)].rtilde = 0.5 * static_cast<double>(k);
  }
  // 0.95·(2/0.5) = 3.8, first reached at k = 8.
  EXPECT_EQ(eos_onset(s, 0.5), 8);
  EXPECT_EQ(eos_onset(s, 0.1), -1);
}

TEST(NearPeriodicity, QuadraticExamples) {
  const auto m = quad1d(3.0);
  const TrajectoryLog log = run_gd(*m, scalar(1.0), 0.5, 5);
  const NearPeriodicity p = near_periodicity_bound(log, 0);
  EXPECT_NEAR(p.lhs, 1.0, 1e-14);
  EXPECT_NEAR(p.rhs, 1.0, 1e-14);
  EXPECT_NEAR(p.return_ratio, 0.5, 1e-14);

  const auto edge = quad1d(4.0);
  const TrajectoryLog e = run_gd(*edge, scalar(1.0), 0.5, 5);
  const NearPeriodicity q = near_periodicity_bound(e, 1);
  EXPECT_NEAR(q.lhs, 0.0, 1e-14);
  EXPECT_NEAR(q.rhs, 0.0, 1e-14);
  EXPECT_THROW(near_periodicity_bound(e, 4), IndexError);
}

TEST(NearPeriodicity, BoundHoldsOnPolynomialRuns) {
  const auto m = make_scalar_poly(1.0, 0.3, 0.4);
  const TrajectoryLog log = run_gd(*m, scalar(1.1), 1.3, 60);
  for (Index k = 0; k + 2 <= log.num_steps(); ++k) {
    const NearPeriodicity p = near_periodicity_bound(log, k);
    EXPECT_LE(p.lhs, p.rhs * (1 + 1e-9) + 1e-12) << "k=" << k;
  }
}

TEST(LossChangeProxy, ExactForQuadratics) {
  const auto m = random_quadratic(5, 5, 0.3, 3.5);
  const TrajectoryLog log = run_gd(*m, Vector::Zero(5), 0.55, 20);
  for (Index k = 0; k + 2 <= 20; ++k) {
    const LossChange c = loss_change_proxy(log, k);
    EXPECT_NEAR(c.proxy, c.actual, 1e-12 * (1 + std::abs(c.actual))) << "k=" << k;
  }
}

TEST(Classifier, Cases) {
  EXPECT_EQ(descent_classifier(3.0, 0.5, -1.0), StepClass::Descent);
  EXPECT_EQ(descent_classifier(5.0, 0.5, 1.0), StepClass::Ascent);
  EXPECT_EQ(descent_classifier(5.0, 0.5, 0.0), StepClass::Stationary);
  EXPECT_THROW(descent_classifier(5.0, 0.5, -1.0), InvariantViolation);
  EXPECT_STREQ(to_string(StepClass::Ascent), "ascent");
}

TEST(Localize, ConstantProfileGetsMidpoint) {
  bool constant = false;
  LocalizeOptions o;
  EXPECT_DOUBLE_EQ(localize_point([](double) { return 2.0; }, 2.0, o, &constant), 0.5);
  EXPECT_TRUE(constant);
  const double t = localize_point([](double x) { return x * x; }, 0.49, o, &constant);
  EXPECT_NEAR(t, 0.7, 1e-10);
  EXPECT_FALSE(constant);
}

TEST(Localize, LanczosAtLocalizedPointBoundsTheProfile) {
  const auto m = random_quadratic(8, 4, 0.5, 2.0);
  const TrajectoryLog log = run_gd(*m, Vector::Ones(4), 0.7, 3);
  const LocalizationRecord r = localize(*m, log, 1);
  EXPECT_NEAR(r.lambda_xi, 2.0, 1e-8);
  EXPECT_GE(r.lambda_xi, r.q_xi - 1e-12);
}

TEST(SgdBalance, QuadraticIdentityHolds) {
  const auto m = quad1d(2.0);
  GaussianNoise g(0.2, 5);
  const StochasticTrajectoryLog log = run_sgd(*m, scalar(1.0), 0.4, 200, g);
  const SgdBalanceReport r = sgd_balance_report(*m, log, CurvatureRoute::Quadrature);
  EXPECT_LE(std::abs(r.residual), 1e-11);
  EXPECT_LE(r.max_propagator_residual, 1e-11);
  const StochasticTrajectoryLog bad = [&] {
    StochasticTrajectoryLog b = log;
    b.noise.pop_back();
    return b;
  }();
  EXPECT_THROW(sgd_balance_report(*m, bad, CurvatureRoute::Exact), InvariantViolation);
}

TEST(Metrics, RowsAndCsv) {
  const auto m = make_scalar_poly(1.0, 0.2, 0.1);
  const TrajectoryLog log = run_gd(*m, scalar(0.8), 1.1, 10);
  const auto rows = compute_metrics(*m, log);
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_TRUE(std::isnan(rows.back().proxy));
  EXPECT_FALSE(std::isnan(rows.front().xi));
  std::stringstream ss;
  write_metrics_csv(ss, rows);
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header.rfind("k,step_norm_sq,rbar,rtilde,xi,zeta", 0), 0u);
}
