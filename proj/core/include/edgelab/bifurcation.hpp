#pragma once

#include <optional>
#include <string>
#include <vector>

#include "edgelab/loss_models.hpp"
#include "edgelab/numerics.hpp"

namespace edgelab {

/// 𝒜_η(x, y) = L(x) + L(y) − ‖x − y‖²/(2η) and its reduced form
/// Ψ_η(m, a) = ½(L(m+a) + L(m−a)) − ‖a‖²/η.
class EdgeCoupling {
 public:
  EdgeCoupling(const LossModel& model, double eta);

  double value(const Vector& x, const Vector& y) const;
  double reduced(const Vector& m, const Vector& a) const;
  /// ∇ₓ𝒜 = ∇L(x) − (x − y)/η; zero exactly when y is the GD image of x.
  Vector grad_x(const Vector& x, const Vector& y) const;
  /// ∇ᵧ𝒜 = ∇L(y) + (x − y)/η.
  Vector grad_y(const Vector& x, const Vector& y) const;
  double eta() const noexcept { return eta_; }

 private:
  const LossModel& model_;
  double eta_;
};

/// Orthonormal basis of a working subspace through a base point. Empty
/// optional means the full parameter space.
using Subspace = std::optional<Matrix>;

/// Eigenvectors of ∇²L(w) whose eigenvalues exceed rel·λ_max in magnitude.
Matrix numeric_normal_basis(const LossModel& model, const Vector& w, double rel = 1e-8);

struct CriticalPoint {
  Vector w;
  double grad_norm = 0.0;
  int iterations = 0;
  Index kernel_dim = 0;  // Hessian null count at the solution
  std::vector<double> history;
};

struct CriticalPointOptions {
  double tol = 1e-12;
  int max_iter = 50;
  double kernel_rel = 1e-8;
};

/// Newton on ∇L with the dense Hessian. Rank-deficient Hessians are handled
/// by restricting each step to the eigenvectors above the kernel threshold.
CriticalPoint find_critical_point(const LossModel& model, const Vector& w0,
                                  const CriticalPointOptions& opts = {});

struct CenterOptions {
  double tol = 1e-12;
  int max_iter = 50;
  int max_halvings = 5;
  bool check_evenness = true;
  Subspace subspace;
};

struct CenterSolve {
  Vector wbar;
  Vector a;         // amplitude actually reached (after halvings)
  Vector m;
  double residual = 0.0;  // ‖∇L(m+a) + ∇L(m−a)‖
  int halvings = 0;
  double evenness_defect = 0.0;  // ‖m(a) − m(−a)‖ when checked
};

/// Solves ∇L(m+a) + ∇L(m−a) = 0 for m near w̄ by Newton with Jacobian
/// ½(H(m+a) + H(m−a)). Halves a and retries on failure.
CenterSolve center_solve(const LossModel& model, const Vector& wbar, const Vector& a,
                         const CenterOptions& opts = {});

struct EdgeProfile {
  double value = 0.0;  // 𝒫(a) = ½(L(m+a) + L(m−a))
  Vector gradient;     // ½(∇L(m+a) − ∇L(m−a))
};

EdgeProfile edge_profile(const LossModel& model, const CenterSolve& solve);

/// Central-difference gradient of 𝒫 at a, re-solving the center at each
/// displaced amplitude (within the subspace when given).
Vector edge_profile_fd_gradient(const LossModel& model, const Vector& wbar, const Vector& a,
                                double h, const CenterOptions& opts = {});

/// Central-difference Hessian of 𝒫 at a = 0 from the analytic ∇𝒫, in
/// subspace coordinates.
Matrix edge_profile_hessian_fd(const LossModel& model, const Vector& wbar, double h,
                               const CenterOptions& opts = {});

// ---------------------------------------------------------------------------

struct CriticalEta {
  double eta_c = 0.0;
  double lambda_max = 0.0;
  Matrix E_c;             // full-space orthonormal basis of the top eigenspace
  Vector spectrum;        // ascending, on the working space
  bool simple = true;     // dim E_c == 1
};

/// η_c = 2/λ_max(H) on the working space.
CriticalEta critical_eta(const LossModel& model, const Vector& wbar, const Subspace& subspace = {});

struct QuarticOptions {
  Subspace subspace;
  std::optional<double> step;  // displacement step; default from the FD rules
  double rel_consistency = 1e-3;
};

struct QuarticJet {
  Vector direction;       // the argument a (full space)
  double Q = 0.0;         // Richardson-extrapolated value
  double Q_coarse = 0.0;  // at step h
  double Q_fine = 0.0;    // at step h/2
  double fourth = 0.0;    // ∇⁴L[a,a,a,a]
  Vector third;           // ∇³L[a,a,·] on the working space
  double consistency = 0.0;  // |Q(h) − Q(h/2)| / |Q|
  bool consistent = true;
  double eta_c = 0.0;
};

/// 𝒬(a) = (1/6)∇⁴L[a,a,a,a] − ½⟨∇³L[a,a,·], H⁻¹∇³L[a,a,·]⟩ on the working
/// space. Throws SingularityError if H is singular there.
QuarticJet quartic_Q(const LossModel& model, const Vector& wbar, const Vector& a,
                     const QuarticOptions& opts = {});

struct BranchPrediction {
  bool exists = false;
  double alpha_sq = 0.0;
};

/// α² = ((2/η) − (2/η_c))/𝒬; the branch exists where this is positive.
BranchPrediction branch_predict(double eta, double eta_c, double Q);

struct PeriodTwoOptions {
  double tol = 1e-12;
  int max_iter = 60;
  double trivial_threshold = 1e-7;
  double raw_tol = 1e-8;
  Subspace subspace;
};

struct BranchPoint {
  double eta = 0.0;
  Vector a;  // full space
  Vector m;  // full space
  double amplitude = 0.0;  // ‖a‖
  double residual = 0.0;   // ‖∇𝒫(a) − (2/η)a‖
  double center_residual = 0.0;
  double profile = 0.0;    // 𝒫(a)
  double raw_return = 0.0; // ‖GD²(x) − x‖/(1 + ‖x‖) in the full space
  bool raw_ok = false;
  bool trivial = false;
  int iterations = 0;
};

/// Newton on the joint system for (m, a): center balance and ∇𝒫(a) = (2/η)a.
BranchPoint period_two_solve(const LossModel& model, const Vector& wbar, double eta,
                             const Vector& a0, const PeriodTwoOptions& opts = {});

/// Same, seeded with both m and a.
BranchPoint period_two_solve(const LossModel& model, const Vector& wbar, double eta,
                             const Vector& m0, const Vector& a0, const PeriodTwoOptions& opts);

enum class SweepMode { Continuation, Empirical };

struct SweepOptions {
  SweepMode mode = SweepMode::Continuation;
  PeriodTwoOptions solve;
  Index steps = 20000;          // empirical mode GD steps
  double discard = 0.8;         // fraction of the run discarded
  double kick = 1e-3;           // initial displacement along u_c
};

struct BranchSweep {
  double eta_c = 0.0;
  double Q = 0.0;
  Vector u_c;
  std::vector<BranchPoint> points;
  std::vector<std::string> modes;
  bool branch_lost = false;
  double lost_at = 0.0;
  double exponent = 0.0;  // log-log slope of amplitude vs η − η_c (NaN if < 2 points)
};

/// Continuation from branch_predict along the grid, or long GD runs measuring
/// the late-window amplitude along u_c.
BranchSweep branch_sweep(const LossModel& model, const Vector& wbar,
                         const std::vector<double>& eta_grid, const SweepOptions& opts = {});

// ---------------------------------------------------------------------------

struct CouplingHessianForms {
  double diag_form = 0.0;      // 2uᵀHu
  double antidiag_form = 0.0;  // 2uᵀ(H − (2/η)I)u
  double block_diag = 0.0;     // (u,u)ᵀ 𝐇 (u,u) from the assembled block matrix
  double block_antidiag = 0.0; // (u,−u)ᵀ 𝐇 (u,−u)
  Matrix block;                // [[H − I/η, I/η], [I/η, H − I/η]]
};

CouplingHessianForms edge_coupling_hessian(const LossModel& model, const Vector& wbar, double eta,
                                           const Vector& u);

}  // namespace edgelab
