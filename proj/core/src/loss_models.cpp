#include "edgelab/loss_models.hpp"

#include <cmath>
#include <limits>

#include "edgelab/errors.hpp"

namespace edgelab {

namespace {

void check_dim(const Vector& w, Index dim, const char* what) {
  if (w.size() != dim) {
    throw ShapeError(std::string(what) + ": expected dimension " + std::to_string(dim) +
                     ", got " + std::to_string(w.size()));
  }
}

}  // namespace

SymMatrix LossModel::hessian_dense(const Vector& w) const {
  const Index n = dim();
  if (n > kDenseDimLimit) {
    throw ShapeError("hessian_dense: dimension " + std::to_string(n) +
                     " exceeds the dense limit");
  }
  Matrix H(n, n);
  Vector e = Vector::Zero(n);
  for (Index j = 0; j < n; ++j) {
    e(j) = 1.0;
    H.col(j) = hvp(w, e);
    e(j) = 0.0;
  }
  return SymMatrix(std::move(H));
}

// ---------------------------------------------------------------------------

QuadraticModel::QuadraticModel(SymMatrix H, Vector center)
    : H_(std::move(H)), center_(std::move(center)) {
  if (H_.dim() != center_.size()) {
    throw ShapeError("QuadraticModel: H and center dimensions differ");
  }
  require_finite(center_, "QuadraticModel center");
  const Eigh eig = dense_eigh(H_);
  const double scale = std::max(1.0, eig.values.cwiseAbs().maxCoeff());
  psd_ = eig.values.size() == 0 || eig.values(0) >= -1e-14 * scale;
}

double QuadraticModel::value(const Vector& w) const {
  check_dim(w, dim(), "QuadraticModel::value");
  const Vector r = w - center_;
  return 0.5 * H_.quadratic_form(r);
}

Vector QuadraticModel::gradient(const Vector& w) const {
  check_dim(w, dim(), "QuadraticModel::gradient");
  return H_ * (w - center_);
}

Vector QuadraticModel::hvp(const Vector& w, const Vector& v) const {
  check_dim(w, dim(), "QuadraticModel::hvp");
  check_dim(v, dim(), "QuadraticModel::hvp");
  return H_ * v;
}

SymMatrix QuadraticModel::hessian_dense(const Vector& w) const {
  check_dim(w, dim(), "QuadraticModel::hessian_dense");
  return H_;
}

std::optional<double> QuadraticModel::infimum() const {
  // An indefinite quadratic is unbounded below.
  if (psd_) return 0.0;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

ScalarPolyModel::ScalarPolyModel(double lambda, double gamma, double beta)
    : lambda_(lambda), gamma_(gamma), beta_(beta) {
  if (!std::isfinite(lambda) || !std::isfinite(gamma) || !std::isfinite(beta)) {
    throw ShapeError("ScalarPolyModel: coefficients must be finite");
  }
  auto L = [&](double x) {
    return 0.5 * lambda_ * x * x + gamma_ / 3.0 * x * x * x + 0.25 * beta_ * x * x * x * x;
  };
  if (beta_ > 0.0) {
    // Critical points: x = 0 and the real roots of βx² + γx + λ.
    double best = L(0.0);
    const double disc = gamma_ * gamma_ - 4.0 * beta_ * lambda_;
    if (disc >= 0.0) {
      const double s = std::sqrt(disc);
      best = std::min({best, L((-gamma_ + s) / (2.0 * beta_)), L((-gamma_ - s) / (2.0 * beta_))});
    }
    infimum_ = best;
  } else if (beta_ == 0.0 && gamma_ == 0.0 && lambda_ >= 0.0) {
    infimum_ = 0.0;
  }
}

double ScalarPolyModel::value(const Vector& w) const {
  check_dim(w, 1, "ScalarPolyModel::value");
  const double x = w(0);
  const double x2 = x * x;
  return 0.5 * lambda_ * x2 + gamma_ / 3.0 * x2 * x + 0.25 * beta_ * x2 * x2;
}

Vector ScalarPolyModel::gradient(const Vector& w) const {
  check_dim(w, 1, "ScalarPolyModel::gradient");
  const double x = w(0);
  Vector g(1);
  g(0) = lambda_ * x + gamma_ * x * x + beta_ * x * x * x;
  return g;
}

Vector ScalarPolyModel::hvp(const Vector& w, const Vector& v) const {
  check_dim(w, 1, "ScalarPolyModel::hvp");
  check_dim(v, 1, "ScalarPolyModel::hvp");
  Vector out(1);
  out(0) = second(w(0)) * v(0);
  return out;
}

SymMatrix ScalarPolyModel::hessian_dense(const Vector& w) const {
  check_dim(w, 1, "ScalarPolyModel::hessian_dense");
  Matrix H(1, 1);
  H(0, 0) = second(w(0));
  return SymMatrix(std::move(H));
}

// ---------------------------------------------------------------------------

AffineSliceModel::AffineSliceModel(ModelPtr base, Vector origin, Matrix basis)
    : base_(std::move(base)), origin_(std::move(origin)), basis_(std::move(basis)) {
  if (!base_) throw ShapeError("AffineSliceModel: null base model");
  if (origin_.size() != base_->dim() || basis_.rows() != base_->dim()) {
    throw ShapeError("AffineSliceModel: origin/basis do not match the base dimension");
  }
  const Index k = basis_.cols();
  const double err = (basis_.transpose() * basis_ - Matrix::Identity(k, k)).cwiseAbs().maxCoeff();
  if (k > 0 && err > 1e-10) {
    throw InvariantViolation("AffineSliceModel: basis is not orthonormal (defect " +
                             std::to_string(err) + ")");
  }
}

double AffineSliceModel::value(const Vector& xi) const {
  check_dim(xi, dim(), "AffineSliceModel::value");
  return base_->value(embed(xi));
}

Vector AffineSliceModel::gradient(const Vector& xi) const {
  check_dim(xi, dim(), "AffineSliceModel::gradient");
  return basis_.transpose() * base_->gradient(embed(xi));
}

Vector AffineSliceModel::hvp(const Vector& xi, const Vector& v) const {
  check_dim(xi, dim(), "AffineSliceModel::hvp");
  check_dim(v, dim(), "AffineSliceModel::hvp");
  return basis_.transpose() * base_->hvp(embed(xi), basis_ * v);
}

// ---------------------------------------------------------------------------

ModelPtr make_quadratic(const SymMatrix& H, const Vector& center) {
  return std::make_shared<QuadraticModel>(H, center);
}

ModelPtr make_scalar_poly(double lambda, double gamma, double beta) {
  return std::make_shared<ScalarPolyModel>(lambda, gamma, beta);
}

std::shared_ptr<const TwoLayerLinearModel> make_two_layer_linear(const Matrix& M, Index h) {
  return std::make_shared<TwoLayerLinearModel>(M, h);
}

std::shared_ptr<const MlpModel> make_mlp(const std::vector<Index>& widths, Activation act,
                                         Dataset data) {
  return std::make_shared<MlpModel>(widths, act, std::move(data));
}

double gradient_check(const LossModel& model, const Vector& w) {
  // Five-point central differences: O(h⁴) truncation.
  const Vector g = model.gradient(w);
  const double h = std::pow(std::numeric_limits<double>::epsilon(), 0.2) * (1.0 + w.norm());
  const double scale = std::max(g.cwiseAbs().maxCoeff(), 1e-8);
  double worst = 0.0;
  Vector x = w;
  for (Index i = 0; i < w.size(); ++i) {
    auto f = [&](double t) {
      x(i) = w(i) + t;
      const double v = model.value(x);
      x(i) = w(i);
      return v;
    };
    const double fd = (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h);
    worst = std::max(worst, std::abs(fd - g(i)) / scale);
  }
  return worst;
}

}  // namespace edgelab
