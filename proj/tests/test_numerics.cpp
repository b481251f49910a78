#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "edgelab/errors.hpp"
#include "edgelab/numerics.hpp"
#include "edgelab/quadrature.hpp"

using namespace edgelab;

namespace {

Matrix random_symmetric(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> N(0.0, 1.0);
  Matrix A(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) A(i, j) = N(rng);
  }
  return (0.5 * (A + A.transpose())).eval();
}

double bisect(const std::function<double(double)>& f, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(lo) * f(mid) <= 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(Quadrature, UniformRuleExamples) {
  const QuadratureRule r = gauss_uniform(2);
  EXPECT_NEAR(integrate_uniform([](double) { return 1.0; }, r), 1.0, 1e-15);
  EXPECT_NEAR(integrate_uniform([](double t) { return t; }, r), 0.5, 1e-15);
  EXPECT_NEAR(integrate_uniform([](double t) { return t * t * t; }, r), 0.25, 1e-15);
}

TEST(Quadrature, TriangularRuleExamples) {
  const QuadratureRule r = gauss_triangular(2);
  EXPECT_NEAR(integrate_triangular([](double) { return 1.0; }, r), 1.0, 1e-15);
  EXPECT_NEAR(integrate_triangular([](double t) { return t; }, r), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(integrate_triangular([](double t) { return t * t; }, r), 1.0 / 6.0, 1e-15);
}

TEST(Quadrature, DegreeExactnessUpToTwoNMinusOne) {
  for (int n = 1; n <= 10; ++n) {
    const QuadratureRule u = gauss_uniform(n), t = gauss_triangular(n);
    double wu = 0.0, wt = 0.0;
    for (int i = 0; i < n; ++i) {
      wu += u.weights[static_cast<std::size_t>(i)];
      wt += t.weights[static_cast<std::size_t>(i)];
      EXPECT_GT(u.nodes[static_cast<std::size_t>(i)], 0.0);
      EXPECT_LT(u.nodes[static_cast<std::size_t>(i)], 1.0);
    }
    EXPECT_NEAR(wu, 1.0, 1e-14);
    EXPECT_NEAR(wt, 1.0, 1e-14);
    for (int k = 0; k <= 2 * n - 1; ++k) {
      const auto f = [k](double x) { return std::pow(x, k); };
      EXPECT_NEAR(integrate_uniform(f, u), 1.0 / (k + 1), 1e-14) << "n=" << n << " k=" << k;
      EXPECT_NEAR(integrate_triangular(f, t), 2.0 / ((k + 1.0) * (k + 2.0)), 1e-14) << "n=" << n << " k=" << k;
    }
  }
}

TEST(Quadrature, AdaptiveSmoothIntegrand) {
  QuadratureOptions o;
  o.adaptive = true;
  o.rel_tol = 1e-13;
  const double v = integrate_weighted([](double t) { return std::exp(3.0 * t); }, Weight::Uniform, o);
  EXPECT_NEAR(v, (std::exp(3.0) - 1.0) / 3.0, 1e-12);
  // 2∫(1−τ)e^τ dτ = 2(e − 2).
  const double w = integrate_weighted([](double t) { return std::exp(t); }, Weight::Triangular, o);
  EXPECT_NEAR(w, 2.0 * (std::exp(1.0) - 2.0), 1e-12);
}

TEST(Quadrature, MatrixValuedIntegrand) {
  QuadratureOptions o;
  o.order = 3;
  const Matrix I = integrate_weighted(
      [](double t) {
        Matrix m(2, 2);
        m << 1.0, t, t, t * t;
        return m;
      },
      Weight::Uniform, o);
  EXPECT_NEAR(I(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(I(0, 1), 0.5, 1e-15);
  EXPECT_NEAR(I(1, 1), 1.0 / 3.0, 1e-15);
}

TEST(Quadrature, NonFiniteIntegrandThrows) {
  EXPECT_THROW(integrate_uniform([](double) { return std::nan(""); }, gauss_uniform(3)), EvaluationError);
}

// ---------------------------------------------------------------------------

TEST(Brent, Examples) {
  EXPECT_NEAR(brent_root([](double x) { return x - 0.5; }, 0.0, 1.0, 1e-14), 0.5, 1e-14);
  const auto sq = [](double x) { return x * x - 2.0; };
  EXPECT_NEAR(brent_root(sq, 1.0, 2.0, 1e-14), bisect(sq, 1.0, 2.0), 1e-13);
  // Oracle: the fixed point of x ↦ cos x by plain iteration.
  double x = 0.5;
  for (int i = 0; i < 200; ++i) x = std::cos(x);
  EXPECT_NEAR(brent_root([](double y) { return std::cos(y) - y; }, 0.0, 1.0, 1e-14), x, 1e-13);
}

TEST(Brent, NoSignChangeThrows) {
  EXPECT_THROW(brent_root([](double y) { return y * y + 1.0; }, -1.0, 1.0, 1e-12), BracketError);
}

TEST(Newton, Examples) {
  auto lin = newton_solve([](const Vector& x) { return x; }, [](const Vector&) { return Matrix::Identity(1, 1); },
                          Vector::Constant(1, 3.0));
  EXPECT_NEAR(lin.x(0), 0.0, 1e-14);

  auto cube = newton_solve([](const Vector& x) { return Vector::Constant(1, x(0) * x(0) * x(0) - 8.0); },
                           [](const Vector& x) { return Matrix::Constant(1, 1, 3.0 * x(0) * x(0)); },
                           Vector::Constant(1, 3.0));
  EXPECT_NEAR(cube.x(0), std::cbrt(8.0), 1e-13);

  auto dec = newton_solve(
      [](const Vector& x) {
        Vector r(2);
        r << x(0) - 1.0, x(1) + 2.0;
        return r;
      },
      [](const Vector&) { return Matrix::Identity(2, 2); }, Vector::Zero(2));
  EXPECT_NEAR(dec.x(0), 1.0, 1e-14);
  EXPECT_NEAR(dec.x(1), -2.0, 1e-14);
}

TEST(Newton, SingularJacobianThrows) {
  EXPECT_THROW(newton_solve([](const Vector& x) { return Vector::Constant(1, x(0) * x(0) + 1.0); },
                            [](const Vector&) { return Matrix::Zero(1, 1); }, Vector::Constant(1, 1.0)),
               SingularityError);
}

TEST(Newton, PolishTightensAtADoubleRoot) {
  // F(x) = (x − 1)²: the residual tolerance is met while x is still about
  // sqrt(tol) away, and polishing steps keep halving the error.
  const auto F = [](const Vector& x) { return Vector::Constant(1, (x(0) - 1.0) * (x(0) - 1.0)); };
  const auto J = [](const Vector& x) { return Matrix::Constant(1, 1, 2.0 * (x(0) - 1.0)); };
  NewtonOptions plain, polished;
  plain.tol = polished.tol = 1e-10;
  polished.polish = 3;
  const double e0 = std::abs(newton_solve(F, J, Vector::Constant(1, 2.0), plain).x(0) - 1.0);
  const double e1 = std::abs(newton_solve(F, J, Vector::Constant(1, 2.0), polished).x(0) - 1.0);
  EXPECT_LT(e1, e0);
}

// ---------------------------------------------------------------------------

TEST(Eigh, SmallExamples) {
  const Eigh a = dense_eigh(SymMatrix::diagonal((Vector(2) << 2.0, 1.0).finished()));
  EXPECT_NEAR(a.values(0), 1.0, 1e-15);
  EXPECT_NEAR(a.values(1), 2.0, 1e-15);

  Matrix s(2, 2);
  s << 0.0, 1.0, 1.0, 0.0;
  const Eigh b = dense_eigh(SymMatrix(s));
  EXPECT_NEAR(b.values(0), -1.0, 1e-15);
  EXPECT_NEAR(b.values(1), 1.0, 1e-15);
  EXPECT_NEAR(std::abs(b.vectors(0, 0)), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(b.vectors(0, 0), -b.vectors(1, 0), 1e-15);
  EXPECT_NEAR(b.vectors(0, 1), b.vectors(1, 1), 1e-15);
}

TEST(Eigh, RandomReconstruction) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const Matrix A = random_symmetric(rng, 5);
    const Eigh e = dense_eigh(SymMatrix(A));
    const Matrix rec = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
    EXPECT_LT((A - rec).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((e.vectors.transpose() * e.vectors - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-12);
    for (Index i = 1; i < 5; ++i) EXPECT_LE(e.values(i - 1), e.values(i));
  }
}

TEST(SymMatrixTest, RejectsAsymmetricInput) {
  Matrix a(2, 2);
  a << 1.0, 2.0, 0.0, 1.0;
  EXPECT_THROW(SymMatrix{a}, InvariantViolation);
}

TEST(Gershgorin, ContainsSpectrum) {
  std::mt19937_64 rng(6);
  const Matrix A = random_symmetric(rng, 8);
  const auto [lo, hi] = gershgorin_bounds(SymMatrix(A));
  const Eigh e = dense_eigh(SymMatrix(A));
  EXPECT_LE(lo, e.values(0));
  EXPECT_GE(hi, e.values(7));
}

TEST(Lanczos, Examples) {
  const auto op = [](Vector d) { return [d](const Vector& v) { return Vector(d.cwiseProduct(v)); }; };
  EXPECT_NEAR(lambda_max_iter(op((Vector(2) << 3.0, 1.0).finished()), 2), 3.0, 1e-10);
  // Largest algebraic eigenvalue, not largest magnitude.
  EXPECT_NEAR(lambda_max_iter(op((Vector(2) << -5.0, 2.0).finished()), 2), 2.0, 1e-10);
}

TEST(Lanczos, MatchesDenseOnRandomMatrices) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 10; ++t) {
    const Matrix A = random_symmetric(rng, 20);
    const double dense = dense_eigh(SymMatrix(A)).values(19);
    LanczosOptions o;
    o.seed = static_cast<std::uint64_t>(t);
    EXPECT_NEAR(lambda_max_iter([&](const Vector& v) { return Vector(A * v); }, 20, o), dense, 1e-9);
  }
}

TEST(Lanczos, RitzValueDominatesStartingRayleighQuotient) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    const Matrix A = random_symmetric(rng, 12);
    Vector u(12);
    for (Index i = 0; i < 12; ++i) u(i) = N(rng);
    LanczosOptions o;
    o.start = u;
    const double est = lambda_max_iter([&](const Vector& v) { return Vector(A * v); }, 12, o);
    EXPECT_GE(est, u.dot(A * u) / u.squaredNorm() - 1e-12);
  }
}

TEST(Lanczos, AsymmetricOperatorDetected) {
  Matrix A(2, 2);
  A << 1.0, 5.0, 0.0, 1.0;
  EXPECT_THROW(lambda_max_iter([&](const Vector& v) { return Vector(A * v); }, 2), InvariantViolation);
}

// ---------------------------------------------------------------------------

TEST(FiniteDifference, Examples) {
  const Vector zero = Vector::Zero(1), one = Vector::Ones(1);
  const auto quad = [](const Vector& x) { return 1.5 * x(0) * x(0); };
  EXPECT_NEAR(fd_directional(quad, one, one, 2), 3.0, 1e-6);
  const auto quart = [](const Vector& x) { return 0.25 * std::pow(x(0), 4); };
  EXPECT_NEAR(fd_directional(quart, zero, one, 4), 6.0, 1e-6);
  const auto cub = [](const Vector& x) { return 0.5 * x(0) * x(0) + x(0) * x(0) * x(0); };
  EXPECT_NEAR(fd_directional(cub, zero, one, 3), 6.0, 1e-6);
}

TEST(FiniteDifference, PolynomialsUpToDegreeFour) {
  // f(w) = Σ c_i (u·w)^i along a unit direction; order-k derivative at w is
  // the k-th derivative of the scalar polynomial at t0 = u·w.
  Vector u = (Vector(3) << 1.0, 2.0, 2.0).finished() / 3.0;
  const Vector w = (Vector(3) << 0.3, -0.2, 0.7).finished();
  const double c[5] = {0.4, -1.0, 0.7, 1.3, -0.6};
  const auto f = [&](const Vector& x) {
    const double t = u.dot(x);
    double s = 0.0;
    for (int i = 4; i >= 0; --i) s = s * t + c[i];
    return s;
  };
  const double t0 = u.dot(w);
  const double d1 = c[1] + 2 * c[2] * t0 + 3 * c[3] * t0 * t0 + 4 * c[4] * t0 * t0 * t0;
  const double d2 = 2 * c[2] + 6 * c[3] * t0 + 12 * c[4] * t0 * t0;
  const double d3 = 6 * c[3] + 24 * c[4] * t0;
  const double d4 = 24 * c[4];
  EXPECT_NEAR(fd_directional(f, w, u, 1), d1, 1e-6);
  EXPECT_NEAR(fd_directional(f, w, u, 2), d2, 1e-6);
  EXPECT_NEAR(fd_directional(f, w, u, 3), d3, 1e-6);
  EXPECT_NEAR(fd_directional(f, w, u, 4), d4, 1e-6);
}

TEST(FiniteDifference, RejectsBadOrder) {
  const auto f = [](const Vector& x) { return x(0); };
  EXPECT_THROW(fd_directional(f, Vector::Zero(1), Vector::Ones(1), 5), InvariantViolation);
  EXPECT_THROW(fd_directional(f, Vector::Zero(1), Vector::Ones(1), 0), InvariantViolation);
}

TEST(LogLogSlope, RecoversPowerLaw) {
  std::vector<double> x, y;
  for (int i = 1; i <= 6; ++i) {
    x.push_back(std::pow(10.0, -i));
    y.push_back(3.0 * std::pow(x.back(), 0.5));
  }
  EXPECT_NEAR(fit_loglog_slope(x, y), 0.5, 1e-12);
}
