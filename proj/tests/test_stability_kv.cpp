#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "edgelab/errors.hpp"
#include "edgelab/stability_kv.hpp"

using namespace edgelab;

namespace {

Vector scalar(double x) { return Vector::Constant(1, x); }

ModelPtr quad1d(double lambda, double center = 0.0) {
  return make_quadratic(SymMatrix::diagonal(scalar(lambda)), scalar(center));
}

}  // namespace

TEST(Recoil, QuadraticExamples) {
  const auto m = quad1d(5.0);
  const TrajectoryLog log = run_gd(*m, scalar(1.0), 0.5, 6);
  const RecoilCheck r = recoil_check(log, 0);
  EXPECT_NEAR(r.growth_ratio, 1.5, 1e-14);
  EXPECT_NEAR(r.rbar, 5.0, 1e-13);
  EXPECT_NEAR(r.inner, r.predicted, 1e-12);
  EXPECT_NEAR(log.steps[5].norm() / log.steps[0].norm(), std::pow(1.5, 5), 1e-12);

  const auto q = quad1d(3.0);
  const TrajectoryLog l3 = run_gd(*q, scalar(1.0), 0.5, 3);
  const RecoilCheck r3 = recoil_check(l3, 0);
  EXPECT_NEAR(r3.inner, -0.5 * l3.steps[0].squaredNorm(), 1e-14);
  EXPECT_THROW(recoil_check(l3, 2), IndexError);
}

TEST(Recoil, HoldsOnNonQuadraticRuns) {
  const auto m = make_scalar_poly(1.0, 0.5, 0.2);
  const TrajectoryLog log = run_gd(*m, scalar(0.8), 1.4, 40);
  for (Index k = 0; k + 1 < log.num_steps(); ++k) {
    if (log.steps[static_cast<std::size_t>(k)].norm() < 1e-8) break;
    EXPECT_LT(recoil_check(log, k).residual, 1e-10) << "k=" << k;
  }
}

TEST(SupercriticalRuns, GrowthBoundOnUnstableQuadratic) {
  const auto m = quad1d(5.0);
  const TrajectoryLog log = run_gd(*m, scalar(1e-3), 0.5, 10);
  const SupercriticalRuns s = supercritical_runs(log);
  EXPECT_EQ(s.runs, 1);
  EXPECT_GE(s.longest, 9);
  EXPECT_TRUE(s.holds);
}

TEST(SupercriticalRuns, NoneWhenStable) {
  const auto m = quad1d(1.0);
  const SupercriticalRuns s = supercritical_runs(run_gd(*m, scalar(1.0), 0.5, 10));
  EXPECT_EQ(s.runs, 0);
  EXPECT_EQ(s.longest, 0);
  EXPECT_TRUE(s.holds);
}

TEST(Oscillatory, FullReflectionAndBounds) {
  const std::vector<double> m(6, -1.0), u(6, 2.0);
  const OscillatoryResult r = oscillatory_bound(m, u, 0.1);
  EXPECT_NEAR(r.x_T, 0.0, 1e-15);
  EXPECT_NEAR(r.bound, 0.2, 1e-15);
  EXPECT_TRUE(r.holds);

  // Oracle: direct recursion with varying multipliers and forcing.
  const std::vector<double> mm = {-0.2, -0.9, -0.5, 0.0, -1.0}, uu = {1.0, -0.5, 0.3, 0.8, -0.1};
  double x = 0.0, tv = 0.0;
  for (std::size_t k = 0; k < mm.size(); ++k) x = mm[k] * x - 0.3 * uu[k];
  for (std::size_t k = 0; k + 1 < uu.size(); ++k) tv += std::abs(uu[k + 1] - uu[k]);
  const OscillatoryResult v = oscillatory_bound(mm, uu, 0.3);
  EXPECT_NEAR(v.x_T, x, 1e-15);
  EXPECT_NEAR(v.bound, 0.3 * (std::abs(uu[4]) + tv), 1e-15);
  EXPECT_LE(std::abs(v.x_T), v.bound);

  EXPECT_THROW(oscillatory_bound({0.5}, {1.0}, 0.1), InvariantViolation);
  EXPECT_THROW(oscillatory_bound({-0.5}, {}, 0.1), ShapeError);
}

TEST(Kappa, Examples) {
  EXPECT_DOUBLE_EQ(excursion_kappa(SymMatrix::diagonal((Vector(2) << 1.0, 2.0).finished()), 0.5), 0.0);
  EXPECT_DOUBLE_EQ(excursion_kappa(SymMatrix::diagonal(scalar(5.0)), 0.5), 0.5);
  EXPECT_DOUBLE_EQ(excursion_kappa(SymMatrix::diagonal(scalar(-1.0)), 0.5), 0.5);
}

TEST(Propagator, IdentityAndContraction) {
  const std::vector<SymMatrix> A(2, SymMatrix::diagonal(Vector::Constant(2, 0.75)));
  const PropagatorProduct id = propagator_from(A, 1.0, 1, 1);
  EXPECT_LT((id.T - Matrix::Identity(2, 2)).norm(), 1e-15);
  const PropagatorProduct p = propagator_from(A, 1.0, 2, 0);
  EXPECT_NEAR(p.T(0, 0), 0.0625, 1e-15);
  EXPECT_NEAR(p.T(1, 1), 0.0625, 1e-15);
  EXPECT_NEAR(p.op_norm, 0.0625, 1e-15);
  EXPECT_DOUBLE_EQ(p.bound, 1.0);
  EXPECT_LE(p.op_norm, p.bound);
}

TEST(Propagator, NormWithinExcursionBound) {
  std::vector<SymMatrix> A;
  for (double l : {5.0, 1.0, 4.5, -0.4, 3.0}) A.push_back(SymMatrix::diagonal((Vector(2) << l, 0.5 * l).finished()));
  const PropagatorProduct p = propagator_from(A, 0.5, 5, 0);
  EXPECT_LE(p.op_norm, p.bound * (1 + 1e-12));
}

TEST(Strain, IdenticalRunsHaveZeroStrain) {
  const auto m = make_scalar_poly(1.0, 0.4, 0.1);
  const PairedLog pair = run_pair_gd(*m, *m, scalar(0.7), 1.2, 30);
  const StrainLog s = strain_run(pair, *m, *m);
  ASSERT_EQ(s.num_steps(), 30);
  for (const StrainRecord& r : s.records) EXPECT_EQ(r.delta.norm(), 0.0);
  EXPECT_TRUE(s.strain_bound_holds());
}

TEST(Strain, QuadraticClosedForm) {
  const double h = 1.6, eta = 0.9, c = 0.0, c2 = 0.25;
  const auto a = quad1d(h, c), b = quad1d(h, c2);
  const PairedLog pair = run_pair_gd(*a, *b, scalar(1.0), eta, 25);
  const StrainLog s = strain_run(pair, *a, *b);
  for (Index k = 0; k <= 25; ++k) {
    const double expect = (c - c2) * (1.0 - std::pow(1.0 - eta * h, static_cast<double>(k)));
    EXPECT_NEAR(s.records[static_cast<std::size_t>(k)].delta(0), expect, 1e-14) << "k=" << k;
  }
  EXPECT_LT(s.max_recurrence_residual(), 1e-14);
  EXPECT_TRUE(s.strain_bound_holds());
  EXPECT_NEAR(s.records[0].A(0, 0), h, 1e-15);
  EXPECT_NEAR(s.records[0].f(0), h * (c2 - c), 1e-15);
}

TEST(Strain, PropagatorSumReproducesDelta) {
  const auto a = make_scalar_poly(1.0, 0.5, 0.1);
  const auto b = make_scalar_poly(1.05, 0.5, 0.1);
  const PairedLog pair = run_pair_gd(*a, *b, scalar(0.6), 1.3, 20);
  const StrainLog s = strain_run(pair, *a, *b);
  EXPECT_EQ(strain_via_propagator(s, 0).norm(), 0.0);
  EXPECT_NEAR(strain_via_propagator(s, 1)(0), -1.3 * s.records[0].f(0), 1e-15);
  for (Index k = 0; k <= 20; ++k) {
    EXPECT_NEAR(strain_via_propagator(s, k)(0), s.records[static_cast<std::size_t>(k)].delta(0), 1e-12);
  }
  EXPECT_TRUE(s.strain_bound_holds());
}

TEST(Strain, CsvHeader) {
  const auto m = quad1d(1.0);
  const StrainLog s = strain_run(run_pair_gd(*m, *m, scalar(1.0), 0.5, 3), *m, *m);
  std::stringstream ss;
  write_strain_csv(ss, s);
  std::string header;
  std::getline(ss, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  EXPECT_EQ(header, "k,strain_norm,stress_norm,kappa,recurrence_residual,bound_rhs");
}
