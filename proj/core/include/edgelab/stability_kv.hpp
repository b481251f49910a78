#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "edgelab/loss_models.hpp"
#include "edgelab/quadrature.hpp"
#include "edgelab/trajectory.hpp"

namespace edgelab {

struct RecoilCheck {
  double inner = 0.0;      // ⟨d_{k+1}, d_k⟩
  double predicted = 0.0;  // (1 − η r̄_k)‖d_k‖²
  double residual = 0.0;   // |inner − predicted| / ‖d_k‖²
  double growth_ratio = 0.0;  // ‖d_{k+1}‖ / ‖d_k‖
  double rbar = 0.0;
};

/// ⟨d_{k+1}, d_k⟩ against (1 − ηr̄_k)‖d_k‖² with r̄ from the exact route.
RecoilCheck recoil_check(const TrajectoryLog& log, Index k);

struct SupercriticalRuns {
  Index longest = 0;        // longest maximal run with r̄_k > 2/η (k+1 < K)
  Index worst_bound = 0;    // bound for the run attaining the worst slack
  bool holds = true;        // every run within ⌈log(‖d‖max/‖d‖min)/log(1+ηδ)⌉
  Index runs = 0;
};

/// Every maximal run of supercritical r̄_k is checked against the growth
/// bound, with δ the smallest excess r̄_k − 2/η measured inside the run.
SupercriticalRuns supercritical_runs(const TrajectoryLog& log);

struct OscillatoryResult {
  double x_T = 0.0;
  double bound = 0.0;  // η(|u_{T−1}| + Σ|u_{k+1} − u_k|)
  bool holds = true;
};

/// x_{k+1} = m_k x_k − η u_k from x₀ = 0 with every m_k ∈ [−1, 0].
OscillatoryResult oscillatory_bound(const std::vector<double>& m, const std::vector<double>& u,
                                    double eta);

/// max{0, ηλ_max(A) − 2, −ηλ_min(A)}.
double excursion_kappa(const SymMatrix& A, double eta);

struct StrainRecord {
  Index k = 0;
  Vector delta;  // w_k − w'_k
  Vector f;      // ∇L_S(w'_k) − ∇L_S'(w'_k); empty at the final record
  SymMatrix A;   // ∫ ∇²L_S(w'_k + τδ_k) dτ; empty at the final record
  double kappa = 0.0;
  double recurrence_residual = 0.0;  // ‖δ_{k+1} − (I−ηA_k)δ_k + ηf_k‖
  double bound_rhs = 0.0;            // η Σ_s exp(Σ_{r>s} κ_r) ‖f_s‖
};

struct StrainLog {
  double eta = 0.0;
  std::vector<StrainRecord> records;  // k = 0..K
  Index num_steps() const noexcept { return static_cast<Index>(records.size()) - 1; }
  double max_recurrence_residual() const;
  /// ‖δ_k‖ ≤ bound_rhs_k (+ tol) at every k.
  bool strain_bound_holds(double tol = 1e-12) const;
};

/// Assembles δ_k, f_k, A_k for a paired run. `model_s` is L_S (drives
/// pair.first), `model_s2` is L_S'.
StrainLog strain_run(const PairedLog& pair, const LossModel& model_s, const LossModel& model_s2,
                     std::optional<QuadratureOptions> quad = {});

struct PropagatorProduct {
  Index k = 0, s = 0;
  Matrix T;
  double op_norm = 0.0;
  double bound = 1.0;  // exp(Σ_{r=s}^{k−1} κ_r)
};

PropagatorProduct propagator_product(const StrainLog& log, Index k, Index s);

/// 𝒯[k,s] for an arbitrary sequence of symmetric A_r.
PropagatorProduct propagator_from(const std::vector<SymMatrix>& A, double eta, Index k, Index s);

/// δ_k = −η Σ_{s<k} 𝒯[k, s+1] f_s, accumulated backward.
Vector strain_via_propagator(const StrainLog& log, Index k);

/// Strain CSV: k, strain_norm, stress_norm, kappa, recurrence_residual, bound_rhs.
void write_strain_csv(std::ostream& os, const StrainLog& log);

}  // namespace edgelab
