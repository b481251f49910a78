#include "edgelab/stability_kv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "edgelab/csv_io.hpp"
#include "edgelab/edge_metrics.hpp"
#include "edgelab/errors.hpp"
#include "edgelab/parallel.hpp"

namespace edgelab {

RecoilCheck recoil_check(const TrajectoryLog& log, Index k) {
  if (k + 1 >= log.num_steps()) throw IndexError("recoil_check: needs steps k and k+1");
  const Vector& d = log.steps[static_cast<std::size_t>(k)];
  const Vector& d1 = log.steps[static_cast<std::size_t>(k + 1)];
  RecoilCheck r;
  r.rbar = rbar_exact(log, k);
  const double n2 = d.squaredNorm();
  r.inner = d1.dot(d);
  r.predicted = (1.0 - log.eta * r.rbar) * n2;
  r.residual = std::abs(r.inner - r.predicted) / n2;
  r.growth_ratio = d1.norm() / d.norm();
  return r;
}

SupercriticalRuns supercritical_runs(const TrajectoryLog& log) {
  SupercriticalRuns out;
  const Index K = log.num_steps();
  const double edge = 2.0 / log.eta;
  double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
  std::vector<double> excess(static_cast<std::size_t>(std::max<Index>(K - 1, 0)),
                             -std::numeric_limits<double>::infinity());
  for (Index k = 0; k < K; ++k) {
    const double n = log.steps[static_cast<std::size_t>(k)].norm();
    if (n < kDegenerateStep) continue;
    dmax = std::max(dmax, n);
    dmin = std::min(dmin, n);
    if (k + 1 < K) excess[static_cast<std::size_t>(k)] = rbar_exact(log, k) - edge;
  }
  if (!(dmax > 0.0)) return out;
  const double spread = std::log(dmax / dmin);
  double worst_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < excess.size();) {
    if (!(excess[i] > 0.0)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    double delta = excess[i];
    while (j < excess.size() && excess[j] > 0.0) delta = std::min(delta, excess[j++]);
    const Index len = static_cast<Index>(j - i);
    const double bound_real = spread / std::log1p(log.eta * delta);
    const Index bound = bound_real > 1e15 ? std::numeric_limits<Index>::max()
                                          : static_cast<Index>(std::ceil(bound_real - 1e-12));
    ++out.runs;
    out.longest = std::max(out.longest, len);
    const double slack = static_cast<double>(bound) - static_cast<double>(len);
    if (slack < worst_slack) {
      worst_slack = slack;
      out.worst_bound = bound;
    }
    if (len > bound) out.holds = false;
    i = j;
  }
  return out;
}

OscillatoryResult oscillatory_bound(const std::vector<double>& m, const std::vector<double>& u,
                                    double eta) {
  if (m.size() != u.size() || m.empty()) {
    throw ShapeError("oscillatory_bound: m and u must be non-empty and of equal length");
  }
  double x = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (!(m[k] >= -1.0 && m[k] <= 0.0)) {
      throw InvariantViolation("oscillatory_bound: multiplier m_" + std::to_string(k) +
                               " outside [-1, 0]");
    }
    x = m[k] * x - eta * u[k];
  }
  double var = 0.0;
  for (std::size_t k = 0; k + 1 < u.size(); ++k) var += std::abs(u[k + 1] - u[k]);
  OscillatoryResult r;
  r.x_T = std::abs(x);
  r.bound = eta * (std::abs(u.back()) + var);
  r.holds = r.x_T <= r.bound + 1e-12;
  return r;
}

double excursion_kappa(const SymMatrix& A, double eta) {
  const Eigh e = dense_eigh(A);
  const double lo = e.values(0), hi = e.values(e.values.size() - 1);
  return std::max({0.0, eta * hi - 2.0, -eta * lo});
}

double StrainLog::max_recurrence_residual() const {
  double r = 0.0;
  for (std::size_t i = 0; i + 1 < records.size(); ++i) r = std::max(r, records[i].recurrence_residual);
  return r;
}

bool StrainLog::strain_bound_holds(double tol) const {
  for (const auto& rec : records) {
    if (rec.delta.norm() > rec.bound_rhs * (1.0 + 1e-12) + tol) return false;
  }
  return true;
}

StrainLog strain_run(const PairedLog& pair, const LossModel& model_s, const LossModel& model_s2,
                     std::optional<QuadratureOptions> quad) {
  if (model_s.dim() != model_s2.dim()) throw ShapeError("strain_run: model dimensions differ");
  if (pair.first.dim() != model_s.dim()) throw ShapeError("strain_run: log/model dimension mismatch");
  if (pair.first.eta != pair.second.eta) throw InvariantViolation("strain_run: logs use different η");
  const Index K = pair.num_steps();
  const double eta = pair.first.eta;
  QuadratureOptions q = quadrature_for(model_s);
  if (q.adaptive) {
    // Each node costs a dense Hessian, so use short panels here.
    q.panel_order = 4;
    q.rel_tol = 1e-10;
  }
  if (quad) q = *quad;
  StrainLog log;
  log.eta = eta;
  log.records.resize(static_cast<std::size_t>(K + 1));

  parallel_for(K + 1, [&](std::ptrdiff_t kk) {
    const Index k = kk;
    StrainRecord& rec = log.records[static_cast<std::size_t>(k)];
    rec.k = k;
    const Vector wk = pair.first.iterate(k);
    const Vector wpk = pair.second.iterate(k);
    rec.delta = wk - wpk;
    if (k == K) return;
    rec.f = model_s.gradient(wpk) - model_s2.gradient(wpk);
    const Matrix A = integrate_weighted(
        [&](double tau) { return Matrix(model_s.hessian_dense(wpk + tau * rec.delta).matrix()); },
        Weight::Uniform, q);
    rec.A = SymMatrix(0.5 * (A + A.transpose()));
    rec.kappa = excursion_kappa(rec.A, eta);
  });

  double S = 0.0;  // Σ_s exp(Σ_{r=s+1}^{k−1} κ_r) ‖f_s‖
  for (Index k = 0; k <= K; ++k) {
    StrainRecord& rec = log.records[static_cast<std::size_t>(k)];
    rec.bound_rhs = eta * S;
    if (k == K) break;
    const StrainRecord& next = log.records[static_cast<std::size_t>(k + 1)];
    rec.recurrence_residual =
        (next.delta - (rec.delta - eta * (rec.A * rec.delta)) + eta * rec.f).norm();
    S = std::exp(rec.kappa) * S + rec.f.norm();
  }
  return log;
}

namespace {

double op_norm(const Matrix& T) {
  const Eigh e = dense_eigh(SymMatrix(T.transpose() * T));
  return std::sqrt(std::max(e.values(e.values.size() - 1), 0.0));
}

}  // namespace

PropagatorProduct propagator_from(const std::vector<SymMatrix>& A, double eta, Index k, Index s) {
  if (s < 0 || k < s || k > static_cast<Index>(A.size())) {
    throw IndexError("propagator: need 0 ≤ s ≤ k ≤ number of matrices");
  }
  const Index n = A.empty() ? 0 : A.front().dim();
  PropagatorProduct p;
  p.k = k;
  p.s = s;
  p.T = Matrix::Identity(n, n);
  double ksum = 0.0;
  for (Index r = s; r < k; ++r) {
    const Matrix& Ar = A[static_cast<std::size_t>(r)].matrix();
    p.T = (Matrix::Identity(n, n) - eta * Ar) * p.T;
    ksum += excursion_kappa(A[static_cast<std::size_t>(r)], eta);
  }
  p.op_norm = n > 0 ? op_norm(p.T) : 0.0;
  p.bound = std::exp(ksum);
  return p;
}

PropagatorProduct propagator_product(const StrainLog& log, Index k, Index s) {
  if (s < 0 || k < s || k > log.num_steps()) throw IndexError("propagator_product: index out of range");
  std::vector<SymMatrix> A;
  A.reserve(static_cast<std::size_t>(k));
  for (Index r = 0; r < k; ++r) A.push_back(log.records[static_cast<std::size_t>(r)].A);
  if (A.empty()) {
    const Index n = log.records.front().delta.size();
    PropagatorProduct p;
    p.k = k;
    p.s = s;
    p.T = Matrix::Identity(n, n);
    p.op_norm = 1.0;
    return p;
  }
  return propagator_from(A, log.eta, k, s);
}

Vector strain_via_propagator(const StrainLog& log, Index k) {
  if (k < 0 || k > log.num_steps()) throw IndexError("strain_via_propagator: index out of range");
  const Index n = log.records.front().delta.size();
  Vector acc = Vector::Zero(n);
  Matrix P = Matrix::Identity(n, n);  // 𝒯[k, s+1]
  for (Index s = k - 1; s >= 0; --s) {
    const StrainRecord& rec = log.records[static_cast<std::size_t>(s)];
    acc += P * rec.f;
    P = P * (Matrix::Identity(n, n) - log.eta * rec.A.matrix());
  }
  return -log.eta * acc;
}

void write_strain_csv(std::ostream& os, const StrainLog& log) {
  csv::Writer w(os, {"k", "strain_norm", "stress_norm", "kappa", "recurrence_residual", "bound_rhs"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : log.records) {
    const bool last = r.k == log.num_steps();
    w.row({static_cast<double>(r.k), r.delta.norm(), last ? nan : r.f.norm(), last ? nan : r.kappa,
           last ? nan : r.recurrence_residual, r.bound_rhs});
  }
}

}  // namespace edgelab
