#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace edgelab {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Largest dimension for which dense Hessian paths are allowed.
inline constexpr Index kDenseDimLimit = 512;

/// Throws EvaluationError if any entry of v is NaN or infinite.
void require_finite(const Vector& v, std::string_view what);

/// Dense symmetric matrix. Symmetry is checked on construction:
/// ‖A − Aᵀ‖_max ≤ 1e-12·‖A‖_max, after which the stored matrix is exactly
/// symmetrized.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(Matrix m);

  static SymMatrix identity(Index n);
  static SymMatrix diagonal(const Vector& diag);

  const Matrix& matrix() const noexcept { return m_; }
  Index dim() const noexcept { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }

  Vector operator*(const Vector& v) const { return m_ * v; }
  double quadratic_form(const Vector& v) const { return v.dot(m_ * v); }

 private:
  Matrix m_;
};

// ---------------------------------------------------------------------------
// Root finding and Newton

/// Brent's method on [lo, hi]. Requires f(lo)·f(hi) ≤ 0. Returns ξ with
/// |f(ξ)| ≤ tol or a final bracket no wider than tol.
double brent_root(const std::function<double(double)>& f, double lo, double hi,
                  double tol);

struct NewtonOptions {
  double tol = 1e-12;
  int max_iter = 50;
  double max_condition = 1e12;
  /// Extra steps taken after convergence, each kept only if it does not
  /// increase the residual. Useful when the Jacobian is nearly singular and a
  /// small residual still leaves a sizeable error in x.
  int polish = 0;
};

struct NewtonResult {
  Vector x;
  double residual = 0.0;
  int iterations = 0;
  std::vector<double> history;
};

using VectorField = std::function<Vector(const Vector&)>;
using JacobianField = std::function<Matrix(const Vector&)>;

/// Newton's method for F(x) = 0 with an explicit Jacobian. Throws
/// SingularityError when the Jacobian condition estimate exceeds
/// `max_condition`, NonConvergenceError when `max_iter` is exhausted.
NewtonResult newton_solve(const VectorField& F, const JacobianField& J,
                          Vector x0, const NewtonOptions& opts = {});

// ---------------------------------------------------------------------------
// Symmetric eigenproblems

struct Eigh {
  Vector values;   // ascending
  Matrix vectors;  // orthonormal columns
};

Eigh dense_eigh(const SymMatrix& A);

/// max_i Σ_j |a_ij| style Gershgorin interval for a symmetric matrix.
std::pair<double, double> gershgorin_bounds(const SymMatrix& A);

using LinearOperator = std::function<Vector(const Vector&)>;

struct LanczosOptions {
  double tol = 1e-10;  // on the Ritz residual, relative to the spectral scale
  int max_iter = 200;
  std::uint64_t seed = 0;
  std::optional<Vector> start;    // deterministic random start when absent
  bool check_symmetry = true;
};

struct LanczosResult {
  double lambda_max = 0.0;
  Vector eigenvector;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> ritz_history;
};

/// Largest (algebraic, not magnitude) eigenvalue of a symmetric operator by
/// Lanczos with full reorthogonalization. Deterministic given the seed.
LanczosResult lambda_max_lanczos(const LinearOperator& hvp, Index dim,
                                 const LanczosOptions& opts = {});

inline double lambda_max_iter(const LinearOperator& hvp, Index dim,
                              const LanczosOptions& opts = {}) {
  return lambda_max_lanczos(hvp, dim, opts).lambda_max;
}

// ---------------------------------------------------------------------------
// Finite differences

/// Default central-difference step for the k-th derivative at a point of norm
/// `wnorm`: ε^(1/(k+2))·(1 + wnorm).
double default_fd_step(int order, double wnorm);

struct FdEstimate {
  double value = 0.0;
  double step = 0.0;
  bool cancellation_warning = false;
};

using ScalarField = std::function<double(const Vector&)>;

/// Central-difference estimate of dᵏ/dtᵏ f(w + t·u) at t = 0, k ∈ {1,2,3,4},
/// with O(h²) truncation error.
FdEstimate fd_directional_estimate(const ScalarField& f, const Vector& w,
                                   const Vector& u, int order,
                                   std::optional<double> step = std::nullopt);

inline double fd_directional(const ScalarField& f, const Vector& w,
                             const Vector& u, int order,
                             std::optional<double> step = std::nullopt) {
  return fd_directional_estimate(f, w, u, order, step).value;
}

/// Central-difference second τ-derivative of a vector field G(w + τu) at τ=0.
Vector fd_second_directional(const VectorField& G, const Vector& w,
                             const Vector& u, double step);

/// Slope of the least-squares line through (log x, log y).
double fit_loglog_slope(const std::vector<double>& x,
                        const std::vector<double>& y);

}  // namespace edgelab
