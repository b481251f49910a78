#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "edgelab/errors.hpp"
#include "edgelab/trajectory.hpp"

using namespace edgelab;

namespace {

Vector scalar(double x) { return Vector::Constant(1, x); }

}  // namespace

TEST(RunGd, SingleQuadraticStep) {
  const auto m = make_quadratic(SymMatrix::diagonal(scalar(3.0)), Vector::Zero(1));
  const TrajectoryLog log = run_gd(*m, scalar(1.0), 0.5, 1);
  ASSERT_EQ(log.num_steps(), 1);
  EXPECT_DOUBLE_EQ(log.iterate(1)(0), -0.5);
  EXPECT_DOUBLE_EQ(log.losses[0], 1.5);
  EXPECT_DOUBLE_EQ(log.losses[1], 0.375);
  EXPECT_DOUBLE_EQ(log.grads[0](0), 3.0);
  EXPECT_NO_THROW(log.validate_shape());
}

TEST(RunGd, PeriodTwoAtTheEdge) {
  const auto m = make_quadratic(SymMatrix::diagonal(scalar(4.0)), Vector::Zero(1));
  const TrajectoryLog log = run_gd(*m, scalar(1.0), 0.5, 6);
  for (Index k = 0; k <= 6; ++k) EXPECT_DOUBLE_EQ(log.iterate(k)(0), k % 2 == 0 ? 1.0 : -1.0);
}

TEST(RunGd, QuarticTwoCycle) {
  // x ↦ x − η(x − x³) sends a to −a when a² = 1 − 2/η.
  const auto m = make_scalar_poly(1.0, 0.0, -1.0);
  const double a = std::sqrt(1.0 - 2.0 / 2.5);
  EXPECT_NEAR(a, std::sqrt(0.2), 1e-15);
  const TrajectoryLog log = run_gd(*m, scalar(a), 2.5, 8);
  for (Index k = 0; k <= 8; ++k) EXPECT_NEAR(std::abs(log.iterate(k)(0)), a, 1e-12);
  EXPECT_NEAR(log.iterate(1)(0), -a, 1e-12);
}

TEST(RunGd, StepsMatchTheUpdateRule) {
  const auto m = make_scalar_poly(1.0, 0.4, 0.1);
  const TrajectoryLog log = run_gd(*m, scalar(0.8), 0.7, 20);
  for (Index k = 0; k < 20; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    EXPECT_DOUBLE_EQ(log.steps[ks](0), (log.iterate(k) - 0.7 * log.grads[ks])(0) - log.iterate(k)(0));
    EXPECT_DOUBLE_EQ(log.losses[ks], m->value(log.iterate(k)));
  }
}

TEST(RunGd, StrideStoresEndpointsAndReplaysInterior) {
  const auto m = make_quadratic(SymMatrix::diagonal((Vector(2) << 1.0, 3.0).finished()), Vector::Zero(2));
  RunOptions dense, sparse;
  sparse.store_stride = 4;
  const TrajectoryLog a = run_gd(*m, Vector::Ones(2), 0.3, 10, dense);
  const TrajectoryLog b = run_gd(*m, Vector::Ones(2), 0.3, 10, sparse);
  EXPECT_EQ(b.stored_index, (std::vector<Index>{0, 4, 8, 10}));
  for (Index k = 0; k <= 10; ++k) EXPECT_LT((a.iterate(k) - b.iterate(k)).norm(), 1e-15);
  EXPECT_THROW(b.iterate(11), IndexError);
}

TEST(RunGd, DivergenceIsCaught) {
  const auto m = make_quadratic(SymMatrix::diagonal(scalar(10.0)), Vector::Zero(1));
  RunOptions o;
  o.norm_limit = 1e6;
  const TrajectoryLog log = run_gd(*m, scalar(1.0), 0.5, 100, o);
  EXPECT_TRUE(log.diverged);
  EXPECT_GT(log.diverged_at, 0);
  EXPECT_FALSE(log.divergence_reason.empty());
  EXPECT_NO_THROW(log.validate_shape());
  EXPECT_LE(std::abs(log.iterate(log.num_steps())(0)), 1e6);
}

TEST(RunGd, InvalidArgumentsThrow) {
  const auto m = make_scalar_poly(1.0, 0.0, 0.0);
  EXPECT_THROW(run_gd(*m, scalar(1.0), 0.0, 5), InvariantViolation);
  EXPECT_THROW(run_gd(*m, scalar(1.0), 0.1, 0), InvariantViolation);
  EXPECT_THROW(run_gd(*m, Vector::Zero(2), 0.1, 5), ShapeError);
}

TEST(RunSgd, ZeroNoiseIsBitwiseGd) {
  const auto m = make_scalar_poly(1.0, 0.3, 0.2);
  GaussianNoise none(0.0, 1);
  const TrajectoryLog gd = run_gd(*m, scalar(0.9), 0.8, 30);
  const StochasticTrajectoryLog sgd = run_sgd(*m, scalar(0.9), 0.8, 30, none);
  for (Index k = 0; k <= 30; ++k) EXPECT_EQ(gd.iterate(k)(0), sgd.iterate(k)(0));
}

TEST(RunSgd, GaussianNoiseEntersTheStep) {
  const auto m = make_quadratic(SymMatrix::identity(3), Vector::Zero(3));
  GaussianNoise g(0.1, 7);
  const StochasticTrajectoryLog log = run_sgd(*m, Vector::Ones(3), 0.2, 10, g);
  ASSERT_EQ(log.noise.size(), 10u);
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_LT((log.steps[k] + 0.2 * (log.grads[k] + log.noise[k])).norm(), 1e-15);
  }
}

TEST(RunSgd, MiniBatchNoiseIsBatchMinusFullGradient) {
  const Dataset d = make_synthetic_dataset(2, 20, 3, 1);
  const auto m = make_mlp({3, 4, 1}, Activation::Tanh, d);
  MiniBatchNoise mb(5, 9);
  const StochasticTrajectoryLog log = run_sgd(*m, m->init_params(1, 1.0), 0.1, 5, mb);
  // Replay the sampler with the same engine to recompute each ε.
  std::mt19937_64 rng(9);
  for (Index k = 0; k < 5; ++k) {
    std::uniform_int_distribution<Index> pick(0, 19);
    std::vector<Index> batch(5);
    for (auto& b : batch) b = pick(rng);
    const Vector w = log.iterate(k);
    const Vector eps = m->batch_gradient(w, batch) - m->gradient(w);
    EXPECT_LT((eps - log.noise[static_cast<std::size_t>(k)]).norm(), 1e-14);
  }
  EXPECT_THROW(
      {
        const auto q = make_scalar_poly(1.0, 0.0, 0.0);
        MiniBatchNoise bad(1, 0);
        run_sgd(*q, scalar(1.0), 0.1, 2, bad);
      },
      InvariantViolation);
}

TEST(RunPairGd, IdenticalObjectivesGiveIdenticalRuns) {
  const auto m = make_scalar_poly(1.0, 0.5, 0.1);
  const PairedLog p = run_pair_gd(*m, *m, scalar(0.6), 0.9, 25);
  ASSERT_EQ(p.num_steps(), 25);
  for (Index k = 0; k <= 25; ++k) EXPECT_EQ(p.first.iterate(k)(0), p.second.iterate(k)(0));
}

TEST(RunPairGd, DifferentObjectivesSeparate) {
  const auto a = make_quadratic(SymMatrix::identity(2), Vector::Zero(2));
  const auto b = make_quadratic(SymMatrix::identity(2), Vector::Constant(2, 0.1));
  const PairedLog p = run_pair_gd(*a, *b, Vector::Ones(2), 0.5, 10);
  EXPECT_GT((p.first.iterate(10) - p.second.iterate(10)).norm(), 0.05);
  const auto c = make_quadratic(SymMatrix::identity(3), Vector::Zero(3));
  EXPECT_THROW(run_pair_gd(*a, *c, Vector::Ones(2), 0.5, 10), ShapeError);
}

TEST(TrajectoryCsv, RoundTripWithIterates) {
  const auto m = make_quadratic(SymMatrix::diagonal((Vector(2) << 1.0, 2.5).finished()), Vector::Zero(2));
  const TrajectoryLog log = run_gd(*m, (Vector(2) << 1.0, -0.3).finished(), 0.6, 12);
  std::stringstream ss;
  write_trajectory_csv(ss, log, true);
  const TrajectoryLog back = read_trajectory_csv(ss, 0.6, m.get());
  ASSERT_EQ(back.num_steps(), 12);
  for (Index k = 0; k <= 12; ++k) {
    EXPECT_EQ(back.iterate(k), log.iterate(k));
    EXPECT_EQ(back.losses[static_cast<std::size_t>(k)], log.losses[static_cast<std::size_t>(k)]);
  }
}

TEST(TrajectoryCsv, MissingIteratesRejected) {
  const auto m = make_scalar_poly(1.0, 0.0, 0.0);
  std::stringstream ss;
  write_trajectory_csv(ss, run_gd(*m, scalar(1.0), 0.1, 3), false);
  EXPECT_THROW(read_trajectory_csv(ss, 0.1, m.get()), ShapeError);
}
