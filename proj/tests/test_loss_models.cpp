#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "edgelab/errors.hpp"
#include "edgelab/loss_models.hpp"

using namespace edgelab;

namespace {

Vector randn(std::mt19937_64& rng, Index n, double s = 1.0) {
  std::normal_distribution<double> N(0.0, s);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = N(rng);
  return v;
}

// Central differences of the gradient, one column per coordinate.
Matrix fd_hessian(const LossModel& m, const Vector& w, double h = 1e-5) {
  const Index n = m.dim();
  Matrix H(n, n);
  for (Index i = 0; i < n; ++i) {
    Vector e = Vector::Zero(n);
    e(i) = h;
    H.col(i) = (m.gradient(w + e) - m.gradient(w - e)) / (2.0 * h);
  }
  return H;
}

Vector fd_gradient(const LossModel& m, const Vector& w, double h = 1e-6) {
  Vector g(m.dim());
  for (Index i = 0; i < m.dim(); ++i) {
    Vector e = Vector::Zero(m.dim());
    e(i) = h;
    g(i) = (m.value(w + e) - m.value(w - e)) / (2.0 * h);
  }
  return g;
}

double rel(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

}  // namespace

TEST(ScalarPoly, ValueAndDerivatives) {
  const ScalarPolyModel m(1.0, 0.0, -1.0);
  EXPECT_DOUBLE_EQ(m.value(Vector::Ones(1)), 0.25);
  const ScalarPolyModel q(2.0, 0.5, 0.3);
  const Vector x = Vector::Constant(1, 0.7);
  EXPECT_NEAR(q.gradient(x)(0), 2.0 * 0.7 + 0.5 * 0.49 + 0.3 * 0.343, 1e-15);
  EXPECT_NEAR(q.hvp(x, Vector::Ones(1))(0), q.second(0.7), 1e-15);
  EXPECT_NEAR(q.third(0.7), 2.0 * 0.5 + 6.0 * 0.3 * 0.7, 1e-15);
  EXPECT_NEAR(q.fourth(), 1.8, 1e-15);
}

TEST(ScalarPoly, Infimum) {
  EXPECT_FALSE(ScalarPolyModel(1.0, 0.0, -1.0).infimum().has_value());
  ASSERT_TRUE(ScalarPolyModel(1.0, 0.0, 1.0).infimum().has_value());
  EXPECT_DOUBLE_EQ(*ScalarPolyModel(1.0, 0.0, 1.0).infimum(), 0.0);
}

TEST(Quadratic, GradientAndHvp) {
  const QuadraticModel m(SymMatrix::diagonal((Vector(2) << 3.0, 1.0).finished()), Vector::Zero(2));
  const Vector g = m.gradient(Vector::Ones(2));
  EXPECT_DOUBLE_EQ(g(0), 3.0);
  EXPECT_DOUBLE_EQ(g(1), 1.0);
  EXPECT_DOUBLE_EQ(m.value(Vector::Ones(2)), 2.0);
  ASSERT_TRUE(m.infimum().has_value());
  EXPECT_EQ(*m.infimum(), 0.0);
}

TEST(Quadratic, IndefiniteHasNoInfimum) {
  const QuadraticModel m(SymMatrix::diagonal((Vector(2) << 3.0, -1.0).finished()), Vector::Zero(2));
  EXPECT_FALSE(m.infimum().has_value());
}

TEST(Quadratic, ShapeMismatchThrows) {
  const QuadraticModel m(SymMatrix::identity(3), Vector::Zero(3));
  EXPECT_THROW(m.value(Vector::Zero(2)), ShapeError);
}

TEST(LinearNet, ZeroLossAtBalancedMinimizer) {
  Matrix M = Matrix::Zero(2, 2);
  M.diagonal() << 2.0, 1.0;
  const LinearNetGeometry g = balanced_minimizer(M, 2);
  const TwoLayerLinearModel model(M, 2);
  EXPECT_LT(model.value(g.wbar), 1e-28);
  EXPECT_LT(model.gradient(g.wbar).norm(), 1e-14);
}

TEST(LinearNet, BalancedMinimizerShapes) {
  Matrix M1 = Matrix::Constant(1, 1, 4.0);
  const LinearNetGeometry a = balanced_minimizer(M1, 1);
  const TwoLayerLinearModel m1(M1, 1);
  EXPECT_NEAR(std::abs(m1.unpack_w1(a.wbar)(0, 0)), 2.0, 1e-14);
  EXPECT_NEAR(std::abs(m1.unpack_w2(a.wbar)(0, 0)), 2.0, 1e-14);

  Matrix M2 = Matrix::Zero(2, 2);
  M2.diagonal() << 2.0, 1.0;
  const TwoLayerLinearModel m2(M2, 2);
  const LinearNetGeometry b = balanced_minimizer(M2, 2);
  const Matrix W1 = m2.unpack_w1(b.wbar), W2 = m2.unpack_w2(b.wbar);
  // Balanced: W1 W1ᵀ = W2ᵀ W2, and both carry singular values (√2, 1).
  EXPECT_LT((W1 * W1.transpose() - W2.transpose() * W2).norm(), 1e-14);
  Eigen::JacobiSVD<Matrix> svd(W1);
  EXPECT_NEAR(svd.singularValues()(0), std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(svd.singularValues()(1), 1.0, 1e-14);

  const TwoLayerLinearModel m3(M2, 3);
  const LinearNetGeometry c = balanced_minimizer(M2, 3);
  EXPECT_LT(m3.unpack_w1(c.wbar).row(2).norm(), 1e-15);
  EXPECT_LT(m3.unpack_w2(c.wbar).col(2).norm(), 1e-15);
}

TEST(LinearNet, HiddenBelowRankThrows) {
  EXPECT_THROW(balanced_minimizer(Matrix::Identity(3, 3), 2), ShapeError);
}

TEST(LinearNet, GradientAndHvpAgainstFiniteDifferences) {
  std::mt19937_64 rng(21);
  Matrix M = Matrix::Zero(3, 4);
  M.diagonal() << 3.0, 1.5, 0.5;
  const TwoLayerLinearModel m(M, 3);
  const Vector w = randn(rng, m.dim(), 0.5);
  EXPECT_LT(rel(m.gradient(w), fd_gradient(m, w)), 1e-7);
  const Vector v = randn(rng, m.dim());
  EXPECT_LT(rel(m.hvp(w, v), fd_hessian(m, w) * v), 1e-6);
  EXPECT_LT(gradient_check(m, w), 1e-6);
}

TEST(LinearNet, NormalSpectrumMatchesDenseHessian) {
  Matrix M = Matrix::Zero(3, 4);
  M.diagonal() << 3.0, 2.0, 1.0;
  const Index h = 3;
  const LinearNetGeometry g = balanced_minimizer(M, h);
  const TwoLayerLinearModel m(M, h);
  const Matrix H = m.hessian_dense(g.wbar).matrix();
  // Each normal column is an eigenvector with its recorded eigenvalue.
  for (Index c = 0; c < g.normal_dim(); ++c) {
    const Vector u = g.normal_basis.col(c);
    EXPECT_LT((H * u - g.normal_eigenvalues(c) * u).norm(), 1e-12) << "column " << c;
  }
  EXPECT_LT((g.normal_basis.transpose() * g.normal_basis - Matrix::Identity(g.normal_dim(), g.normal_dim())).norm(),
            1e-12);
  // Nonzero Hessian eigenvalues are exactly the normal ones.
  const Eigh e = dense_eigh(SymMatrix(H));
  Index nonzero = 0;
  for (Index i = 0; i < e.values.size(); ++i) nonzero += e.values(i) > 1e-10 ? 1 : 0;
  EXPECT_EQ(nonzero, g.normal_dim());
  EXPECT_NEAR(e.values.maxCoeff(), 2.0 * 3.0, 1e-12);
  const Vector s = g.sharp_direction();
  EXPECT_NEAR(s.dot(H * s), 6.0, 1e-12);
}

TEST(LinearNet, NormalEmbedIsAnIsometry) {
  std::mt19937_64 rng(22);
  Matrix M = Matrix::Zero(3, 4);
  M.diagonal() << 3.0, 2.0;
  const LinearNetGeometry g = balanced_minimizer(M, 2);
  ASSERT_EQ(g.r, 2);
  const Matrix Y = randn(rng, 4).reshaped(2, 2);
  const Matrix B = randn(rng, 4).reshaped(2, 2);
  const Matrix G = randn(rng, 2).reshaped(1, 2);
  const Vector xi = normal_embed(g, Y, B, G);
  // ‖Σ^{1/2}Y‖² + ‖YΣ^{1/2}‖² + ‖B‖² + ‖G‖² by direct expansion.
  const Vector rs = g.sigma.cwiseSqrt();
  const double norm2 = (rs.asDiagonal() * Y).squaredNorm() + (Y * rs.asDiagonal()).squaredNorm() +
                       B.squaredNorm() + G.squaredNorm();
  EXPECT_NEAR(xi.squaredNorm(), norm2, 1e-12);
  const NormalCoordinates back = normal_coordinates(g, xi);
  EXPECT_LT((back.Y - Y).norm(), 1e-12);
  EXPECT_LT((back.B - B).norm(), 1e-12);
  EXPECT_LT((back.G - G).norm(), 1e-12);
}

TEST(LinearNet, SharpDirectionFromTheTopBlock) {
  Matrix M = Matrix::Zero(3, 4);
  M.diagonal() << 3.0, 2.0;
  const LinearNetGeometry g = balanced_minimizer(M, 2);
  Matrix Y = Matrix::Zero(2, 2);
  Y(0, 0) = 1.0 / std::sqrt(2.0 * 3.0);
  const Vector u = normal_embed(g, Y, Matrix::Zero(2, 2), Matrix::Zero(1, 2));
  EXPECT_NEAR(u.norm(), 1.0, 1e-14);
  EXPECT_NEAR(std::abs(u.dot(g.sharp_direction())), 1.0, 1e-12);
}

TEST(LinearNet, NormalCoordinatesRejectTangentComponent) {
  Matrix M = Matrix::Zero(2, 2);
  M.diagonal() << 2.0, 1.0;
  const LinearNetGeometry g = balanced_minimizer(M, 2);
  // A tangent direction: the Hessian null space is orthogonal to 𝒩.
  const TwoLayerLinearModel m(M, 2);
  const Eigh e = dense_eigh(m.hessian_dense(g.wbar));
  EXPECT_THROW(normal_coordinates(g, e.vectors.col(0)), InvariantViolation);
}

TEST(LinearNet, WidthPadPreservesLossAndNorm) {
  std::mt19937_64 rng(23);
  Matrix M = Matrix::Zero(3, 3);
  M.diagonal() << 2.5, 1.0;
  const LinearNetGeometry gr = balanced_minimizer(M, 2);
  const TwoLayerLinearModel mr(M, 2);
  const Vector xi = gr.normal_basis * randn(rng, gr.normal_dim(), 0.1);
  for (Index h : {2, 3, 5}) {
    const LinearNetGeometry gh = balanced_minimizer(M, h);
    const TwoLayerLinearModel mh(M, h);
    const Vector xh = width_pad(gr, xi, h);
    EXPECT_NEAR(xh.norm(), xi.norm(), 1e-13) << "h=" << h;
    EXPECT_NEAR(mh.value(gh.wbar + xh), mr.value(gr.wbar + xi), 1e-13) << "h=" << h;
  }
}

TEST(Dataset, DeterministicAndShaped) {
  const Dataset a = make_synthetic_dataset(3, 50, 6, 4);
  const Dataset b = make_synthetic_dataset(3, 50, 6, 4);
  const Dataset c = make_synthetic_dataset(4, 50, 6, 4);
  EXPECT_EQ(a.inputs.rows(), 50);
  EXPECT_EQ(a.inputs.cols(), 6);
  EXPECT_EQ(a.targets.cols(), 4);
  EXPECT_TRUE(a.inputs == b.inputs && a.targets == b.targets);
  EXPECT_FALSE(a.inputs == c.inputs);
}

TEST(Dataset, TeacherRankIsRespected) {
  DatasetOptions o;
  o.teacher_rank = 3;
  const Dataset d = make_synthetic_dataset(5, 100, 8, 6, o);
  const Matrix T = least_squares_target(d);
  Eigen::JacobiSVD<Matrix> svd(T);
  const Vector s = svd.singularValues();
  EXPECT_GT(s(2), 1e-6 * s(0));
  EXPECT_LT(s(3), 1e-9 * s(0));
  EXPECT_EQ(least_squares_target(d, 2).fullPivLu().rank(), 2);
}

TEST(Dataset, DropSampleAndCsvRoundTrip) {
  const Dataset d = make_synthetic_dataset(9, 10, 3, 2);
  const Dataset e = drop_sample(d, 4);
  EXPECT_EQ(e.size(), 9);
  EXPECT_TRUE(e.inputs.row(4) == d.inputs.row(5));
  EXPECT_THROW(drop_sample(d, 10), IndexError);
  std::stringstream ss;
  write_dataset_csv(ss, d);
  const Dataset r = read_dataset_csv(ss, 3);
  EXPECT_TRUE(r.inputs == d.inputs && r.targets == d.targets);
}

TEST(Mlp, GradientHvpAndBatchesAgainstFiniteDifferences) {
  std::mt19937_64 rng(31);
  for (Activation act : {Activation::Tanh, Activation::Gelu}) {
    const Dataset d = make_synthetic_dataset(12, 30, 4, 2);
    const MlpModel m({4, 5, 3, 2}, act, d);
    EXPECT_EQ(m.dim(), 4 * 5 + 5 + 5 * 3 + 3 + 3 * 2 + 2);
    const Vector w = m.init_params(1, 1.0) + randn(rng, m.dim(), 0.05);
    EXPECT_LT(rel(m.gradient(w), fd_gradient(m, w)), 1e-7);
    const Vector v = randn(rng, m.dim());
    const Matrix Hfd = fd_hessian(m, w);
    EXPECT_LT(rel(m.hvp(w, v), Hfd * v), 1e-6);
    EXPECT_LT((m.hessian_dense(w).matrix() - Hfd).cwiseAbs().maxCoeff(), 1e-6);

    std::vector<Index> all(30);
    for (Index i = 0; i < 30; ++i) all[static_cast<std::size_t>(i)] = i;
    EXPECT_LT(rel(m.batch_gradient(w, all), m.gradient(w)), 1e-14);
    // Mean of two half-batch gradients is the full gradient.
    const std::vector<Index> lo(all.begin(), all.begin() + 15), hi(all.begin() + 15, all.end());
    EXPECT_LT(rel(0.5 * (m.batch_gradient(w, lo) + m.batch_gradient(w, hi)), m.gradient(w)), 1e-14);
  }
}

TEST(Mlp, InitIsDeterministic) {
  const MlpModel m({3, 4, 1}, Activation::Tanh, make_synthetic_dataset(1, 5, 3, 1));
  EXPECT_TRUE(m.init_params(2, 0.5) == m.init_params(2, 0.5));
  EXPECT_FALSE(m.init_params(2, 0.5) == m.init_params(3, 0.5));
}

TEST(AffineSlice, RestrictsValueAndDerivatives) {
  std::mt19937_64 rng(41);
  auto base = make_scalar_poly(1.0, 0.3, 0.2);
  const Matrix basis = Matrix::Ones(1, 1);
  const AffineSliceModel s(base, Vector::Constant(1, 0.5), basis);
  const Vector xi = Vector::Constant(1, 0.25);
  EXPECT_DOUBLE_EQ(s.value(xi), base->value(Vector::Constant(1, 0.75)));
  EXPECT_DOUBLE_EQ(s.gradient(xi)(0), base->gradient(Vector::Constant(1, 0.75))(0));

  const auto q = make_quadratic(SymMatrix::diagonal((Vector(3) << 1.0, 2.0, 3.0).finished()), Vector::Zero(3));
  Matrix B(3, 2);
  B << 1, 0, 0, 0, 0, 1;
  const AffineSliceModel sq(q, Vector::Zero(3), B);
  EXPECT_EQ(sq.dim(), 2);
  const Vector v = randn(rng, 2);
  EXPECT_NEAR(sq.hvp(Vector::Zero(2), v)(0), v(0), 1e-15);
  EXPECT_NEAR(sq.hvp(Vector::Zero(2), v)(1), 3.0 * v(1), 1e-15);
  EXPECT_LT((sq.coordinates(sq.embed(v)) - v).norm(), 1e-15);
}
