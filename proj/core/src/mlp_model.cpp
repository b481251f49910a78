#include <cmath>
#include <numbers>
#include <random>

#include "edgelab/errors.hpp"
#include "edgelab/loss_models.hpp"

namespace edgelab {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// σ, σ′, σ″ evaluated elementwise.
struct ActivationValues {
  Matrix s, ds, d2s;
};

ActivationValues activate(const Matrix& Z, Activation act, bool want_second) {
  ActivationValues out;
  out.s.resize(Z.rows(), Z.cols());
  out.ds.resize(Z.rows(), Z.cols());
  if (want_second) out.d2s.resize(Z.rows(), Z.cols());
  constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (Index j = 0; j < Z.cols(); ++j) {
    for (Index i = 0; i < Z.rows(); ++i) {
      const double x = Z(i, j);
      if (act == Activation::Tanh) {
        const double t = std::tanh(x);
        const double sech2 = 1.0 - t * t;
        out.s(i, j) = t;
        out.ds(i, j) = sech2;
        if (want_second) out.d2s(i, j) = -2.0 * t * sech2;
      } else {
        // Exact GELU: x·Φ(x).
        const double Phi = 0.5 * std::erfc(-x * inv_sqrt2);
        const double phi = inv_sqrt2pi * std::exp(-0.5 * x * x);
        out.s(i, j) = x * Phi;
        out.ds(i, j) = Phi + x * phi;
        if (want_second) out.d2s(i, j) = phi * (2.0 - x * x);
      }
    }
  }
  return out;
}

}  // namespace

struct MlpModel::Pass {
  std::vector<Matrix> Ws;
  std::vector<Vector> bs;
  std::vector<Matrix> A, Z;  // A[0] = X, Z[l] pre-activation of layer l
  std::vector<ActivationValues> act;
  std::vector<Matrix> delta;  // ∂L/∂Z[l]
  std::vector<Matrix> back;   // delta[l+1]·W[l+1], before the σ′ factor
  double value = 0.0;
  Vector grad;
};

MlpModel::MlpModel(std::vector<Index> widths, Activation act, Dataset data)
    : widths_(std::move(widths)), act_(act), data_(std::move(data)) {
  if (widths_.size() < 2) throw ShapeError("MlpModel: need at least input and output widths");
  for (Index w : widths_) {
    if (w < 1) throw ShapeError("MlpModel: widths must be positive");
  }
  if (data_.size() < 1) throw ShapeError("MlpModel: empty dataset");
  if (data_.inputs.cols() != widths_.front() || data_.targets.cols() != widths_.back() ||
      data_.targets.rows() != data_.inputs.rows()) {
    throw ShapeError("MlpModel: dataset shape does not match the layer widths");
  }
  if (!data_.inputs.allFinite() || !data_.targets.allFinite()) {
    throw ShapeError("MlpModel: dataset has non-finite entries");
  }
  dim_ = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    dim_ += widths_[l + 1] * widths_[l] + widths_[l + 1];
  }
}

MlpModel::Pass MlpModel::forward(const Vector& w, const Matrix& X, const Matrix& Y,
                                 bool want_grad, bool want_second) const {
  if (w.size() != dim_) throw ShapeError("MlpModel: parameter dimension mismatch");
  const std::size_t layers = widths_.size() - 1;
  const Index n = X.rows();
  Pass p;
  p.Ws.resize(layers);
  p.bs.resize(layers);
  Index off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const Index out = widths_[l + 1], in = widths_[l];
    p.Ws[l] = Eigen::Map<const RowMajor>(w.data() + off, out, in);
    off += out * in;
    p.bs[l] = w.segment(off, out);
    off += out;
  }

  p.A.resize(layers + 1);
  p.Z.resize(layers);
  p.act.resize(layers);
  p.A[0] = X;
  for (std::size_t l = 0; l < layers; ++l) {
    p.Z[l] = (p.A[l] * p.Ws[l].transpose()).rowwise() + p.bs[l].transpose();
    if (l + 1 < layers) {
      p.act[l] = activate(p.Z[l], act_, want_second);
      p.A[l + 1] = p.act[l].s;
    } else {
      p.A[l + 1] = p.Z[l];
    }
  }
  const Matrix residual = p.A[layers] - Y;
  p.value = 0.5 * residual.squaredNorm() / static_cast<double>(n);
  if (!want_grad) return p;

  p.delta.resize(layers);
  p.back.resize(layers);
  p.grad.resize(dim_);
  p.delta[layers - 1] = residual / static_cast<double>(n);
  Index end = dim_;
  for (std::size_t li = layers; li-- > 0;) {
    const Index outw = widths_[li + 1], inw = widths_[li];
    const Index bo = end - outw;
    const Index wo = bo - outw * inw;
    const Matrix& d = p.delta[li];
    Eigen::Map<RowMajor>(p.grad.data() + wo, outw, inw) = d.transpose() * p.A[li];
    p.grad.segment(bo, outw) = d.colwise().sum().transpose();
    if (li > 0) {
      p.back[li - 1] = d * p.Ws[li];
      p.delta[li - 1] = p.back[li - 1].cwiseProduct(p.act[li - 1].ds);
    }
    end = wo;
  }
  return p;
}

// Pearlmutter R-operator on a finished pass: directional derivative of the
// gradient along v.
Vector MlpModel::rop(const Pass& p, const Vector& v) const {
  if (v.size() != dim_) throw ShapeError("MlpModel: tangent dimension mismatch");
  const std::size_t layers = widths_.size() - 1;
  const Index n = p.A[0].rows();
  std::vector<Matrix> Vs(layers);
  std::vector<Vector> cs(layers);
  Index off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const Index out = widths_[l + 1], in = widths_[l];
    Vs[l] = Eigen::Map<const RowMajor>(v.data() + off, out, in);
    off += out * in;
    cs[l] = v.segment(off, out);
    off += out;
  }
  std::vector<Matrix> RA(layers + 1), RZ(layers);
  RA[0] = Matrix::Zero(n, p.A[0].cols());
  for (std::size_t l = 0; l < layers; ++l) {
    RZ[l] = (p.A[l] * Vs[l].transpose() + RA[l] * p.Ws[l].transpose()).rowwise() +
            cs[l].transpose();
    RA[l + 1] = l + 1 < layers ? Matrix(p.act[l].ds.cwiseProduct(RZ[l])) : RZ[l];
  }

  Vector hv(dim_);
  Matrix Rdelta = RA[layers] / static_cast<double>(n);
  Index end = dim_;
  for (std::size_t li = layers; li-- > 0;) {
    const Index outw = widths_[li + 1], inw = widths_[li];
    const Index bo = end - outw;
    const Index wo = bo - outw * inw;
    Eigen::Map<RowMajor>(hv.data() + wo, outw, inw) =
        Rdelta.transpose() * p.A[li] + p.delta[li].transpose() * RA[li];
    hv.segment(bo, outw) = Rdelta.colwise().sum().transpose();
    if (li > 0) {
      const ActivationValues& a = p.act[li - 1];
      const Matrix Rback = Rdelta * p.Ws[li] + p.delta[li] * Vs[li];
      Rdelta = Rback.cwiseProduct(a.ds) +
               p.back[li - 1].cwiseProduct(a.d2s).cwiseProduct(RZ[li - 1]);
    }
    end = wo;
  }
  return hv;
}

double MlpModel::value(const Vector& w) const {
  return forward(w, data_.inputs, data_.targets, false, false).value;
}

Vector MlpModel::gradient(const Vector& w) const {
  return forward(w, data_.inputs, data_.targets, true, false).grad;
}

Vector MlpModel::hvp(const Vector& w, const Vector& v) const {
  return rop(forward(w, data_.inputs, data_.targets, true, true), v);
}

SymMatrix MlpModel::hessian_dense(const Vector& w) const {
  if (dim_ > kDenseDimLimit) {
    throw ShapeError("hessian_dense: dimension " + std::to_string(dim_) + " exceeds the dense limit");
  }
  const Pass p = forward(w, data_.inputs, data_.targets, true, true);
  Matrix H(dim_, dim_);
  Vector e = Vector::Zero(dim_);
  for (Index j = 0; j < dim_; ++j) {
    e(j) = 1.0;
    H.col(j) = rop(p, e);
    e(j) = 0.0;
  }
  return SymMatrix(0.5 * (H + H.transpose()));
}

Vector MlpModel::batch_gradient(const Vector& w, std::span<const Index> batch) const {
  if (batch.empty()) throw ShapeError("MlpModel::batch_gradient: empty batch");
  Matrix X(static_cast<Index>(batch.size()), data_.inputs.cols());
  Matrix Y(static_cast<Index>(batch.size()), data_.targets.cols());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Index s = batch[i];
    if (s < 0 || s >= data_.size()) throw IndexError("MlpModel::batch_gradient: bad sample index");
    X.row(static_cast<Index>(i)) = data_.inputs.row(s);
    Y.row(static_cast<Index>(i)) = data_.targets.row(s);
  }
  return forward(w, X, Y, true, false).grad;
}

Vector MlpModel::init_params(std::uint64_t seed, double scale) const {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector w = Vector::Zero(dim_);
  Index off = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const Index out = widths_[l + 1], in = widths_[l];
    const double sd = scale / std::sqrt(static_cast<double>(in));
    for (Index i = 0; i < out * in; ++i) w(off + i) = sd * normal(rng);
    off += out * in + out;
  }
  return w;
}

}  // namespace edgelab
