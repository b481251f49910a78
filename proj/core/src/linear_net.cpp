#include <cmath>

#include "edgelab/errors.hpp"
#include "edgelab/loss_models.hpp"

namespace edgelab {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Flip column signs so that the largest-magnitude entry of each column of U
// is positive. Makes the SVD reproducible across platforms.
void fix_signs(Matrix& U, Matrix& V, Index r) {
  for (Index i = 0; i < U.cols(); ++i) {
    Index arg = 0;
    U.col(i).cwiseAbs().maxCoeff(&arg);
    if (U(arg, i) < 0.0) {
      U.col(i) *= -1.0;
      if (i < r) V.col(i) *= -1.0;
    }
  }
  for (Index j = r; j < V.cols(); ++j) {
    Index arg = 0;
    V.col(j).cwiseAbs().maxCoeff(&arg);
    if (V(arg, j) < 0.0) V.col(j) *= -1.0;
  }
}

}  // namespace

TwoLayerLinearModel::TwoLayerLinearModel(Matrix target, Index hidden)
    : M_(std::move(target)), p_(M_.rows()), d_(M_.cols()), hidden_(hidden) {
  if (p_ < 1 || d_ < 1 || hidden_ < 1) {
    throw ShapeError("TwoLayerLinearModel: empty target or zero width");
  }
  if (!M_.allFinite()) throw ShapeError("TwoLayerLinearModel: non-finite target");
}

Matrix TwoLayerLinearModel::unpack_w1(const Vector& w) const {
  if (w.size() != dim()) throw ShapeError("TwoLayerLinearModel: parameter dimension mismatch");
  return Eigen::Map<const RowMajor>(w.data(), hidden_, d_);
}

Matrix TwoLayerLinearModel::unpack_w2(const Vector& w) const {
  if (w.size() != dim()) throw ShapeError("TwoLayerLinearModel: parameter dimension mismatch");
  return Eigen::Map<const RowMajor>(w.data() + hidden_ * d_, p_, hidden_);
}

Vector TwoLayerLinearModel::pack(const Matrix& w1, const Matrix& w2) const {
  if (w1.rows() != hidden_ || w1.cols() != d_ || w2.rows() != p_ || w2.cols() != hidden_) {
    throw ShapeError("TwoLayerLinearModel::pack: block shapes do not match");
  }
  Vector w(dim());
  Eigen::Map<RowMajor>(w.data(), hidden_, d_) = w1;
  Eigen::Map<RowMajor>(w.data() + hidden_ * d_, p_, hidden_) = w2;
  return w;
}

double TwoLayerLinearModel::value(const Vector& w) const {
  const Matrix R = unpack_w2(w) * unpack_w1(w) - M_;
  return 0.5 * R.squaredNorm();
}

Vector TwoLayerLinearModel::gradient(const Vector& w) const {
  const Matrix W1 = unpack_w1(w);
  const Matrix W2 = unpack_w2(w);
  const Matrix R = W2 * W1 - M_;
  return pack(W2.transpose() * R, R * W1.transpose());
}

Vector TwoLayerLinearModel::hvp(const Vector& w, const Vector& v) const {
  const Matrix W1 = unpack_w1(w);
  const Matrix W2 = unpack_w2(w);
  const Matrix V1 = unpack_w1(v);
  const Matrix V2 = unpack_w2(v);
  const Matrix R = W2 * W1 - M_;
  const Matrix dR = V2 * W1 + W2 * V1;
  return pack(V2.transpose() * R + W2.transpose() * dR,
              dR * W1.transpose() + R * V1.transpose());
}

// ---------------------------------------------------------------------------

Vector LinearNetGeometry::sharp_direction() const {
  if (normal_basis.cols() == 0) throw InvariantViolation("empty normal space");
  return normal_basis.col(0);
}

LinearNetGeometry balanced_minimizer(const Matrix& target, Index hidden) {
  LinearNetGeometry g;
  g.target = target;
  g.p = target.rows();
  g.d = target.cols();
  g.h = hidden;
  if (g.p < 1 || g.d < 1) throw ShapeError("balanced_minimizer: empty target");

  Eigen::JacobiSVD<Matrix> svd(target, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  Index r = 0;
  while (r < s.size() && s(r) > kRankTolerance * s(0)) ++r;
  if (r == 0) throw ShapeError("balanced_minimizer: target is zero");
  if (hidden < r) {
    throw ShapeError("balanced_minimizer: hidden width " + std::to_string(hidden) +
                     " is below rank(M) = " + std::to_string(r));
  }
  g.r = r;
  g.U = svd.matrixU();
  g.V = svd.matrixV();
  fix_signs(g.U, g.V, r);
  g.sigma = s.head(r);

  const Vector root = g.sigma.cwiseSqrt();
  Matrix W1 = Matrix::Zero(hidden, g.d);
  Matrix W2 = Matrix::Zero(g.p, hidden);
  W1.topRows(r) = root.asDiagonal() * g.V.leftCols(r).transpose();
  W2.leftCols(r) = g.U.leftCols(r) * root.asDiagonal();
  TwoLayerLinearModel model(target, hidden);
  g.wbar = model.pack(W1, W2);

  const Index n_normal = r * (g.p + g.d - r);
  g.normal_basis.resize(model.dim(), n_normal);
  g.normal_eigenvalues.resize(n_normal);
  Index col = 0;
  Matrix Y = Matrix::Zero(r, r);
  Matrix B = Matrix::Zero(r, g.d - r);
  Matrix G = Matrix::Zero(g.p - r, r);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < r; ++j) {
      const double lam = g.sigma(i) + g.sigma(j);
      Y(i, j) = 1.0 / std::sqrt(lam);
      g.normal_basis.col(col) = normal_embed(g, Y, B, G);
      g.normal_eigenvalues(col++) = lam;
      Y(i, j) = 0.0;
    }
  }
  for (Index i = 0; i < r; ++i) {
    for (Index b = 0; b < g.d - r; ++b) {
      B(i, b) = 1.0;
      g.normal_basis.col(col) = normal_embed(g, Y, B, G);
      g.normal_eigenvalues(col++) = g.sigma(i);
      B(i, b) = 0.0;
    }
  }
  for (Index a = 0; a < g.p - r; ++a) {
    for (Index j = 0; j < r; ++j) {
      G(a, j) = 1.0;
      g.normal_basis.col(col) = normal_embed(g, Y, B, G);
      g.normal_eigenvalues(col++) = g.sigma(j);
      G(a, j) = 0.0;
    }
  }
  return g;
}

Vector normal_embed(const LinearNetGeometry& geom, const Matrix& Y, const Matrix& B,
                    const Matrix& G) {
  const Index r = geom.r, p = geom.p, d = geom.d, h = geom.h;
  if (Y.rows() != r || Y.cols() != r || B.rows() != r || B.cols() != d - r ||
      G.rows() != p - r || G.cols() != r) {
    throw ShapeError("normal_embed: expected Y r×r, B r×(d−r), G (p−r)×r with r = " +
                     std::to_string(r));
  }
  const Vector root = geom.sigma.cwiseSqrt();
  // Canonical (rotated) coordinates, then back through U and V.
  Matrix D1 = Matrix::Zero(h, d);
  Matrix D2 = Matrix::Zero(p, h);
  D1.topLeftCorner(r, r) = root.asDiagonal() * Y;
  D1.topRightCorner(r, d - r) = B;
  D2.topLeftCorner(r, r) = Y * root.asDiagonal();
  D2.bottomLeftCorner(p - r, r) = G;
  TwoLayerLinearModel model(geom.target, h);
  return model.pack(D1 * geom.V.transpose(), geom.U * D2);
}

NormalCoordinates normal_coordinates(const LinearNetGeometry& geom, const Vector& xi,
                                     double tol) {
  if (xi.size() != geom.normal_basis.rows()) {
    throw ShapeError("normal_coordinates: vector has the wrong dimension");
  }
  const Vector c = geom.normal_basis.transpose() * xi;
  const double off = (xi - geom.normal_basis * c).norm();
  if (off > tol * (1.0 + xi.norm())) {
    throw InvariantViolation("normal_coordinates: vector leaves the normal slice (residual " +
                             std::to_string(off) + ")");
  }
  const Index r = geom.r;
  NormalCoordinates out{Matrix::Zero(r, r), Matrix::Zero(r, geom.d - r),
                        Matrix::Zero(geom.p - r, r)};
  Index col = 0;
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < r; ++j)
      out.Y(i, j) = c(col++) / std::sqrt(geom.sigma(i) + geom.sigma(j));
  for (Index i = 0; i < r; ++i)
    for (Index b = 0; b < geom.d - r; ++b) out.B(i, b) = c(col++);
  for (Index a = 0; a < geom.p - r; ++a)
    for (Index j = 0; j < r; ++j) out.G(a, j) = c(col++);
  return out;
}

Vector width_pad(const LinearNetGeometry& geom_r, const Vector& xi, Index h) {
  if (h < geom_r.r) throw ShapeError("width_pad: target width below rank");
  const NormalCoordinates nc = normal_coordinates(geom_r, xi);
  LinearNetGeometry wide = geom_r;
  wide.h = h;
  return normal_embed(wide, nc.Y, nc.B, nc.G);
}

}  // namespace edgelab
