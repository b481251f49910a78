#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgelab/numerics.hpp"

namespace edgelab {

/// Differentiable objective L: ℝᵈ → ℝ with gradient and Hessian-vector
/// products. Implementations are immutable after construction and safe to
/// evaluate concurrently.
class LossModel {
 public:
  virtual ~LossModel() = default;

  virtual Index dim() const = 0;
  virtual double value(const Vector& w) const = 0;
  virtual Vector gradient(const Vector& w) const = 0;
  virtual Vector hvp(const Vector& w, const Vector& v) const = 0;

  /// Dense Hessian, assembled column by column from hvp unless overridden.
  /// Only available for dim ≤ kDenseDimLimit.
  virtual SymMatrix hessian_dense(const Vector& w) const;

  /// inf_w L(w) when known. The forcing bound is skipped when absent.
  virtual std::optional<double> infimum() const { return std::nullopt; }

  /// Total degree when L is a polynomial, -1 otherwise. Lets callers pick a
  /// Gauss order that is exact for the curvature profile.
  virtual int polynomial_degree() const { return -1; }

  virtual std::string name() const = 0;
};

using ModelPtr = std::shared_ptr<const LossModel>;

/// A model that is an average of per-sample losses, so mini-batch gradients
/// are meaningful.
class FiniteSumModel : public LossModel {
 public:
  virtual Index num_samples() const = 0;
  /// Gradient of the average loss over the listed sample indices
  /// (repetitions allowed).
  virtual Vector batch_gradient(const Vector& w,
                                std::span<const Index> batch) const = 0;
};

// ---------------------------------------------------------------------------

/// L(w) = ½ (w − c)ᵀ H (w − c).
class QuadraticModel final : public LossModel {
 public:
  QuadraticModel(SymMatrix H, Vector center);

  Index dim() const override { return center_.size(); }
  double value(const Vector& w) const override;
  Vector gradient(const Vector& w) const override;
  Vector hvp(const Vector& w, const Vector& v) const override;
  SymMatrix hessian_dense(const Vector& w) const override;
  std::optional<double> infimum() const override;
  int polynomial_degree() const override { return 2; }
  std::string name() const override { return "quadratic"; }

  const SymMatrix& hessian() const noexcept { return H_; }
  const Vector& center() const noexcept { return center_; }

 private:
  SymMatrix H_;
  Vector center_;
  bool psd_ = false;
};

/// L(x) = ½λx² + (γ/3)x³ + ¼βx⁴ on ℝ.
class ScalarPolyModel final : public LossModel {
 public:
  ScalarPolyModel(double lambda, double gamma, double beta);

  Index dim() const override { return 1; }
  double value(const Vector& w) const override;
  Vector gradient(const Vector& w) const override;
  Vector hvp(const Vector& w, const Vector& v) const override;
  SymMatrix hessian_dense(const Vector& w) const override;
  std::optional<double> infimum() const override { return infimum_; }
  int polynomial_degree() const override { return 4; }
  std::string name() const override { return "scalar_poly"; }

  double second(double x) const { return lambda_ + 2.0 * gamma_ * x + 3.0 * beta_ * x * x; }
  double third(double x) const { return 2.0 * gamma_ + 6.0 * beta_ * x; }
  double fourth() const { return 6.0 * beta_; }

  double lambda() const noexcept { return lambda_; }
  double gamma() const noexcept { return gamma_; }
  double beta() const noexcept { return beta_; }

 private:
  double lambda_, gamma_, beta_;
  std::optional<double> infimum_;
};

/// L(W₁, W₂) = ½‖W₂W₁ − M‖_F² with W₁ ∈ ℝ^{h×d}, W₂ ∈ ℝ^{p×h}.
///
/// Parameter packing: W₁ row-major (h·d entries), followed by W₂ row-major
/// (p·h entries). Every geometry routine in this library uses this order.
class TwoLayerLinearModel final : public LossModel {
 public:
  TwoLayerLinearModel(Matrix target, Index hidden);

  Index dim() const override { return hidden_ * (d_ + p_); }
  double value(const Vector& w) const override;
  Vector gradient(const Vector& w) const override;
  Vector hvp(const Vector& w, const Vector& v) const override;
  std::optional<double> infimum() const override { return 0.0; }
  int polynomial_degree() const override { return 4; }
  std::string name() const override { return "two_layer_linear"; }

  Index out_dim() const noexcept { return p_; }
  Index in_dim() const noexcept { return d_; }
  Index hidden() const noexcept { return hidden_; }
  const Matrix& target() const noexcept { return M_; }

  Matrix unpack_w1(const Vector& w) const;
  Matrix unpack_w2(const Vector& w) const;
  Vector pack(const Matrix& w1, const Matrix& w2) const;

 private:
  Matrix M_;
  Index p_, d_, hidden_;
};

/// Canonical balanced minimizer of a two-layer linear net and the orthonormal
/// basis of the normal space 𝒩 = (ker ∇²L(w̄))^⊥.
struct LinearNetGeometry {
  Matrix target;     // M
  Index p = 0, d = 0, h = 0, r = 0;
  Matrix U;          // p×p orthogonal, first r columns span the column space of M
  Matrix V;          // d×d orthogonal
  Vector sigma;      // r singular values, descending
  Vector wbar;       // balanced minimizer
  /// Orthonormal columns spanning 𝒩, ordered: Y-block (i,j) row-major, then
  /// B-block (i,β), then G-block (α,j). Coordinates coincide across widths.
  Matrix normal_basis;
  /// Hessian eigenvalue associated with each normal_basis column.
  Vector normal_eigenvalues;

  Index normal_dim() const noexcept { return normal_basis.cols(); }
  /// Unit eigenvector of the largest transverse eigenvalue 2σ₁.
  Vector sharp_direction() const;
};

/// Rank threshold for SVD truncation: σ > rank_tol·σ₁.
inline constexpr double kRankTolerance = 1e-10;

/// Balanced minimizer W̄₂ = U_rΣ^{1/2}Rᵀ, W̄₁ = RΣ^{1/2}V_rᵀ with R the first
/// r hidden coordinates. Throws ShapeError if h < rank(M).
LinearNetGeometry balanced_minimizer(const Matrix& target, Index hidden);

/// Block matrices of a normal-space perturbation.
struct NormalCoordinates {
  Matrix Y;  // r×r
  Matrix B;  // r×(d−r)
  Matrix G;  // (p−r)×r
};

/// T_h(Y, B, G) as a packed parameter-space vector.
Vector normal_embed(const LinearNetGeometry& geom, const Matrix& Y,
                    const Matrix& B, const Matrix& G);

/// Inverse of normal_embed on 𝒩. Throws InvariantViolation if ξ has a
/// component outside 𝒩 larger than `tol`·(1 + ‖ξ‖).
NormalCoordinates normal_coordinates(const LinearNetGeometry& geom,
                                     const Vector& xi, double tol = 1e-10);

/// Zero-padding isometry Z_h = T_h T_r⁻¹ from the width-r normal slice to
/// width h.
Vector width_pad(const LinearNetGeometry& geom_r, const Vector& xi, Index h);

// ---------------------------------------------------------------------------

enum class Activation { Tanh, Gelu };

struct Dataset {
  Matrix inputs;   // n × d_in
  Matrix targets;  // n × d_out

  Index size() const noexcept { return inputs.rows(); }
};

struct DatasetOptions {
  /// Rank of the linear teacher; 0 means full rank.
  Index teacher_rank = 0;
  /// Explicit teacher singular values (overrides teacher_rank).
  std::vector<double> teacher_singular_values;
  double target_scale = 1.0;
  double noise = 0.0;
};

/// Gaussian inputs, targets y = scale·T x + noise·ε from a random linear
/// teacher T (d_out × d_in). Bit-identical for equal arguments.
Dataset make_synthetic_dataset(std::uint64_t seed, Index n, Index d_in,
                               Index d_out, const DatasetOptions& opts = {});

/// Least-squares linear map fitted to a dataset, truncated to `rank`
/// (0 = numerical rank).
Matrix least_squares_target(const Dataset& data, Index rank = 0);

/// Dataset copy without sample `index` (leave-one-out pairs).
Dataset drop_sample(const Dataset& data, Index index);

void write_dataset_csv(std::ostream& os, const Dataset& data);
Dataset read_dataset_csv(std::istream& is, Index d_in);

/// Fully connected network, tanh or exact-erf GELU hidden activations, linear
/// output, loss (1/n)·Σ ½‖f(xᵢ) − yᵢ‖².
///
/// Parameter packing per layer ℓ: W_ℓ (out×in) row-major, then b_ℓ.
class MlpModel final : public FiniteSumModel {
 public:
  MlpModel(std::vector<Index> widths, Activation act, Dataset data);

  Index dim() const override { return dim_; }
  double value(const Vector& w) const override;
  Vector gradient(const Vector& w) const override;
  Vector hvp(const Vector& w, const Vector& v) const override;
  /// One forward pass shared by all columns.
  SymMatrix hessian_dense(const Vector& w) const override;
  std::optional<double> infimum() const override { return 0.0; }
  std::string name() const override { return "mlp"; }

  Index num_samples() const override { return data_.size(); }
  Vector batch_gradient(const Vector& w, std::span<const Index> batch) const override;

  const std::vector<Index>& widths() const noexcept { return widths_; }
  const Dataset& data() const noexcept { return data_; }
  Activation activation() const noexcept { return act_; }

  /// Weights N(0, scale²/fan_in), zero biases.
  Vector init_params(std::uint64_t seed, double scale) const;

 private:
  struct Pass;
  Pass forward(const Vector& w, const Matrix& X, const Matrix& Y, bool want_grad,
               bool want_second) const;
  Vector rop(const Pass& p, const Vector& v) const;

  std::vector<Index> widths_;
  Activation act_;
  Dataset data_;
  Index dim_ = 0;
};

// ---------------------------------------------------------------------------

/// Restriction ξ ↦ L(origin + Bξ) to an affine slice with orthonormal basis B.
/// This is how Morse–Bott minima are handled: restrict to the normal space.
class AffineSliceModel final : public LossModel {
 public:
  AffineSliceModel(ModelPtr base, Vector origin, Matrix basis);

  Index dim() const override { return basis_.cols(); }
  double value(const Vector& xi) const override;
  Vector gradient(const Vector& xi) const override;
  Vector hvp(const Vector& xi, const Vector& v) const override;
  std::optional<double> infimum() const override { return base_->infimum(); }
  int polynomial_degree() const override { return base_->polynomial_degree(); }
  std::string name() const override { return base_->name() + "_slice"; }

  Vector embed(const Vector& xi) const { return origin_ + basis_ * xi; }
  Vector coordinates(const Vector& w) const { return basis_.transpose() * (w - origin_); }
  const LossModel& base() const noexcept { return *base_; }
  const ModelPtr& base_ptr() const noexcept { return base_; }
  const Matrix& basis() const noexcept { return basis_; }
  const Vector& origin() const noexcept { return origin_; }

 private:
  ModelPtr base_;
  Vector origin_;
  Matrix basis_;
};

ModelPtr make_quadratic(const SymMatrix& H, const Vector& center);
ModelPtr make_scalar_poly(double lambda, double gamma, double beta);
std::shared_ptr<const TwoLayerLinearModel> make_two_layer_linear(const Matrix& M, Index h);
std::shared_ptr<const MlpModel> make_mlp(const std::vector<Index>& widths,
                                         Activation act, Dataset data);

/// Maximum relative error between the analytic gradient and central FD of
/// the value along coordinate directions, at w.
double gradient_check(const LossModel& model, const Vector& w);

}  // namespace edgelab
