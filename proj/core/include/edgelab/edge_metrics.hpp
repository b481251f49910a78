#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "edgelab/loss_models.hpp"
#include "edgelab/quadrature.hpp"
#include "edgelab/trajectory.hpp"

namespace edgelab {

/// Steps shorter than this are treated as degenerate.
inline constexpr double kDegenerateStep = 1e-14;

enum class CurvatureRoute {
  Exact,       // from logged gradients and losses (algebraic)
  Quadrature,  // Gauss quadrature of the curvature profile
};

/// Quadrature that is exact for `model` when it is a polynomial
/// (profile degree deg−2), adaptive otherwise.
QuadratureOptions quadrature_for(const LossModel& model);

/// q(τ) = uᵀ∇²L(w + τd)u with u = d/‖d‖.
double q_profile(const LossModel& model, const Vector& w, const Vector& d, double tau);

/// dᵀ(∫ ∇²L(w+τd) weight(τ) dτ)d by quadrature of τ ↦ dᵀ hvp(w+τd, d).
double segment_energy(const LossModel& model, const Vector& w, const Vector& d, Weight weight,
                      const QuadratureOptions& opts);

/// r̄_k = d_kᵀ(∇L(w_{k+1}) − ∇L(w_k))/‖d_k‖² from the logged gradients.
double rbar_exact(const TrajectoryLog& log, Index k);
/// r̃_k = 2(L(w_{k+1}) − L(w_k) + ‖d_k‖²/η)/‖d_k‖² from the logged losses.
double rtilde_from_loss(const TrajectoryLog& log, Index k);
double rbar_quadrature(const LossModel& model, const TrajectoryLog& log, Index k,
                       const QuadratureOptions& opts);
double rtilde_quadrature(const LossModel& model, const TrajectoryLog& log, Index k,
                         const QuadratureOptions& opts);

struct CurvatureSample {
  Index k = 0;
  double rbar = 0.0;
  double rtilde = 0.0;
  CurvatureRoute route = CurvatureRoute::Exact;
  double step_norm_sq = 0.0;
};

/// Curvatures at every step. Degenerate steps get NaN curvatures.
std::vector<CurvatureSample> curvature_samples(const LossModel& model, const TrajectoryLog& log,
                                               CurvatureRoute route,
                                               std::optional<QuadratureOptions> quad = {});

// ---------------------------------------------------------------------------

struct LocalizeOptions {
  double tol = 1e-10;  // on |q(ξ) − target|
  int cells = 64;
  int max_cells = 1024;
  bool compute_lambda = true;
  LanczosOptions lanczos;
  std::optional<QuadratureOptions> quad;  // default: quadrature_for(model)
};

struct LocalizationRecord {
  Index k = 0;
  double rtilde = 0.0, rbar = 0.0;  // targets (quadrature route)
  double xi = 0.5, zeta = 0.5;
  double q_xi = 0.0, q_zeta = 0.0;
  double lambda_xi = 0.0, lambda_zeta = 0.0;  // Lanczos estimates
  bool constant_profile = false;
};

/// A point τ ∈ (0,1) with q(τ) = target, by grid sign-change scan then Brent.
/// Returns 0.5 for a profile constant within tol.
double localize_point(const std::function<double(double)>& q, double target,
                      const LocalizeOptions& opts, bool* constant = nullptr);

/// ξ_k and ζ_k for step k, plus λ_max at both points.
LocalizationRecord localize(const LossModel& model, const TrajectoryLog& log, Index k,
                            const LocalizeOptions& opts = {});

// ---------------------------------------------------------------------------

struct WindowMass {
  double delta = 0.0;
  double sub_mass = 0.0;    // Σ‖d‖² over r̃ ≤ 2/η − δ
  double super_mass = 0.0;  // Σ‖d‖² over r̃ ≥ 2/η + δ
  double in_window_fraction = 0.0;
  std::optional<double> sub_bound;  // (2(L₀ − L_inf) + B⁺)/δ
  double super_bound = 0.0;         // B⁺/δ
};

struct EdgeBalanceReport {
  Index K = 0;
  double eta = 0.0;
  CurvatureRoute route = CurvatureRoute::Exact;
  double E_K = 0.0;
  double identity_lhs = 0.0;  // Σ‖d_k‖²(2/η − r̃_k)
  double identity_rhs = 0.0;  // 2(L₀ − L_K)
  double identity_residual = 0.0;
  double weighted_mean = 0.0;  // Σ‖d‖²r̃/E_K
  double max_rtilde = 0.0;
  std::optional<double> forcing_bound;  // 2/η − 2(L₀ − L_inf)/E_K
  bool forcing_holds = true;
  double B_minus = 0.0, B_plus = 0.0;
  double signed_residual = 0.0;  // B⁻ − B⁺ − 2(L₀ − L_K)
  std::vector<WindowMass> windows;
};

std::vector<double> default_deltas(double eta);

EdgeBalanceReport edge_balance_report(const LossModel& model, const TrajectoryLog& log,
                                      CurvatureRoute route, std::vector<double> deltas = {},
                                      std::optional<QuadratureOptions> quad = {});

/// Same report from precomputed samples (r̃ in each sample).
EdgeBalanceReport edge_balance_from_samples(const TrajectoryLog& log,
                                            const std::vector<CurvatureSample>& samples,
                                            std::optional<double> infimum,
                                            std::vector<double> deltas = {});

/// Prefix aggregates for every K = 1..steps: running weighted mean of r̃ and
/// the forcing bound check.
struct RunningBalance {
  std::vector<double> weighted_mean;
  std::vector<double> max_rtilde;
  std::vector<double> forcing_bound;  // NaN when L_inf is unknown
  bool forcing_holds_everywhere = true;
};

RunningBalance running_balance(const TrajectoryLog& log,
                               const std::vector<CurvatureSample>& samples,
                               std::optional<double> infimum);

/// First k with r̃_k ≥ 0.95·(2/η), or -1.
Index eos_onset(const std::vector<CurvatureSample>& samples, double eta, double fraction = 0.95);

// ---------------------------------------------------------------------------

struct NearPeriodicity {
  double lhs = 0.0;           // |r̄_k − 2/η|
  double rhs = 0.0;           // ‖w_{k+2} − w_k‖/(η‖d_k‖)
  double return_ratio = 0.0;  // ‖w_{k+2} − w_k‖/‖d_k‖
};

NearPeriodicity near_periodicity_bound(const TrajectoryLog& log, Index k);

struct LossChange {
  double proxy = 0.0;   // −(1/2η) d_kᵀ(w_{k+2} − w_k)
  double actual = 0.0;  // L(w_{k+1}) − L(w_k)
};

LossChange loss_change_proxy(const TrajectoryLog& log, Index k);

enum class StepClass { Descent, Ascent, Stationary };

/// Classification by r̃ against 2/η, checked for consistency with ΔL.
/// Throws InvariantViolation when the two disagree beyond the tie tolerance.
StepClass descent_classifier(double rtilde, double eta, double delta_loss,
                             double tie_tol = 1e-14);

const char* to_string(StepClass c);

// ---------------------------------------------------------------------------

struct SgdBalanceReport {
  Index K = 0;
  double lhs = 0.0;          // Σ‖s_k‖²(2/η − r̃_k)
  double loss_term = 0.0;    // 2(L₀ − L_K)
  double cross_term = 0.0;   // 2ηΣ⟨∇L(w_k), ε_k⟩  (raw sum Σ⟨∇L, ε⟩ in cross_sum)
  double noise_term = 0.0;   // 2ηΣ‖ε_k‖²
  double cross_sum = 0.0;
  double residual = 0.0;
  double max_propagator_residual = 0.0;  // forced propagator, relative
};

SgdBalanceReport sgd_balance_report(const LossModel& model, const StochasticTrajectoryLog& log,
                                    CurvatureRoute route,
                                    std::optional<QuadratureOptions> quad = {});

// ---------------------------------------------------------------------------

/// One row of the metrics CSV.
struct MetricsRow {
  Index k = 0;
  double step_norm_sq = 0.0;
  double rbar = 0.0, rtilde = 0.0;
  double xi = 0.0, zeta = 0.0;
  double lambda_max_xi = 0.0;
  double delta_L = 0.0, proxy = 0.0;
  double return_ratio = 0.0;
};

struct MetricsOptions {
  bool localize = true;
  LocalizeOptions localize_opts;
  std::optional<QuadratureOptions> quad;
};

/// rbar/rtilde from the quadrature route; xi/zeta/λ when requested.
/// Entries that do not exist at the tail of the log are NaN.
std::vector<MetricsRow> compute_metrics(const LossModel& model, const TrajectoryLog& log,
                                        const MetricsOptions& opts = {});

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows);

}  // namespace edgelab
