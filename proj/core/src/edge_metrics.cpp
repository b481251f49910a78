#include "edgelab/edge_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "edgelab/csv_io.hpp"
#include "edgelab/errors.hpp"
#include "edgelab/parallel.hpp"

namespace edgelab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const Vector& step_at(const TrajectoryLog& log, Index k) {
  if (k < 0 || k >= log.num_steps()) {
    throw IndexError("step index " + std::to_string(k) + " outside 0.." +
                     std::to_string(log.num_steps() - 1));
  }
  return log.steps[static_cast<std::size_t>(k)];
}

const Vector& checked_step(const TrajectoryLog& log, Index k) {
  const Vector& d = step_at(log, k);
  if (d.norm() < kDegenerateStep) {
    throw DegenerateStepError("step " + std::to_string(k) + " has norm below 1e-14");
  }
  return d;
}

// Exact-route energies: d̄ = dᵀ(g₊ − g) and d̃ = 2(ΔL + ‖d‖²/η).
double bar_energy_exact(const TrajectoryLog& log, Index k) {
  if (log.grads.empty()) throw InvariantViolation("log has no gradients");
  const std::size_t i = static_cast<std::size_t>(k);
  return log.steps[i].dot(log.grads[i + 1] - log.grads[i]);
}

double tilde_energy_exact(const TrajectoryLog& log, Index k) {
  const std::size_t i = static_cast<std::size_t>(k);
  return 2.0 * (log.losses[i + 1] - log.losses[i] + log.steps[i].squaredNorm() / log.eta);
}

// Both weighted energies with shared nodes in adaptive mode.
std::pair<double, double> segment_energies(const LossModel& model, const Vector& w,
                                           const Vector& d, const QuadratureOptions& opts) {
  auto e = [&](double tau) { return d.dot(model.hvp(w + tau * d, d)); };
  // One set of nodes serves both weights; the triangular factor raises the
  // integrand degree by one, which quadrature_for already accounts for.
  const Eigen::Vector2d both = integrate_weighted(
      [&](double tau) {
        const double v = e(tau);
        return Eigen::Vector2d(v, 2.0 * (1.0 - tau) * v);
      },
      Weight::Uniform, opts);
  return {both(0), both(1)};
}

}  // namespace

QuadratureOptions quadrature_for(const LossModel& model) {
  QuadratureOptions q;
  const int deg = model.polynomial_degree();
  if (deg >= 0) {
    const int profile = std::max(deg - 2, 0);
    q.order = std::max(kDefaultQuadratureOrder, (profile + 2) / 2);
    q.adaptive = false;
  } else {
    q.adaptive = true;
  }
  return q;
}

double q_profile(const LossModel& model, const Vector& w, const Vector& d, double tau) {
  const double n = d.norm();
  if (n < kDegenerateStep) throw DegenerateStepError("q_profile: zero step");
  const Vector u = d / n;
  return u.dot(model.hvp(w + tau * d, u));
}

double segment_energy(const LossModel& model, const Vector& w, const Vector& d, Weight weight,
                      const QuadratureOptions& opts) {
  return integrate_weighted([&](double tau) { return d.dot(model.hvp(w + tau * d, d)); }, weight,
                            opts);
}

double rbar_exact(const TrajectoryLog& log, Index k) {
  const Vector& d = checked_step(log, k);
  return bar_energy_exact(log, k) / d.squaredNorm();
}

double rtilde_from_loss(const TrajectoryLog& log, Index k) {
  const Vector& d = checked_step(log, k);
  return tilde_energy_exact(log, k) / d.squaredNorm();
}

double rbar_quadrature(const LossModel& model, const TrajectoryLog& log, Index k,
                       const QuadratureOptions& opts) {
  const Vector& d = checked_step(log, k);
  return segment_energy(model, log.iterate(k), d, Weight::Uniform, opts) / d.squaredNorm();
}

double rtilde_quadrature(const LossModel& model, const TrajectoryLog& log, Index k,
                         const QuadratureOptions& opts) {
  const Vector& d = checked_step(log, k);
  return segment_energy(model, log.iterate(k), d, Weight::Triangular, opts) / d.squaredNorm();
}

namespace {

struct SampleEnergy {
  CurvatureSample s;
  double bar_energy = 0.0;
  double tilde_energy = 0.0;
};

SampleEnergy sample_energy(const LossModel& model, const TrajectoryLog& log, Index k,
                           CurvatureRoute route, const QuadratureOptions& q) {
  SampleEnergy out;
  out.s.k = k;
  out.s.route = route;
  const Vector& d = step_at(log, k);
  out.s.step_norm_sq = d.squaredNorm();
  if (route == CurvatureRoute::Exact) {
    out.bar_energy = bar_energy_exact(log, k);
    out.tilde_energy = tilde_energy_exact(log, k);
  } else {
    std::tie(out.bar_energy, out.tilde_energy) = segment_energies(model, log.iterate(k), d, q);
  }
  if (d.norm() >= kDegenerateStep) {
    out.s.rbar = out.bar_energy / out.s.step_norm_sq;
    out.s.rtilde = out.tilde_energy / out.s.step_norm_sq;
  } else {
    out.s.rbar = out.s.rtilde = kNaN;
  }
  return out;
}

std::vector<SampleEnergy> all_energies(const LossModel& model, const TrajectoryLog& log,
                                       CurvatureRoute route, const QuadratureOptions& q) {
  std::vector<SampleEnergy> out(static_cast<std::size_t>(log.num_steps()));
  parallel_for(log.num_steps(), [&](std::ptrdiff_t k) {
    out[static_cast<std::size_t>(k)] = sample_energy(model, log, k, route, q);
  });
  return out;
}

}  // namespace

std::vector<CurvatureSample> curvature_samples(const LossModel& model, const TrajectoryLog& log,
                                               CurvatureRoute route,
                                               std::optional<QuadratureOptions> quad) {
  const auto energies = all_energies(model, log, route, quad.value_or(quadrature_for(model)));
  std::vector<CurvatureSample> out;
  out.reserve(energies.size());
  for (const auto& e : energies) out.push_back(e.s);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// First root of q − target on a uniform grid of `cells`, refined by Brent.
std::optional<double> scan_for_root(const std::function<double(double)>& q,
                                    const std::vector<double>& vals, double target,
                                    const LocalizeOptions& opts) {
  const std::size_t cells = vals.size() - 1;
  for (std::size_t i = 0; i < cells; ++i) {
    const double a = vals[i] - target, b = vals[i + 1] - target;
    const double lo = static_cast<double>(i) / cells, hi = static_cast<double>(i + 1) / cells;
    if (a == 0.0) return lo;
    if (b == 0.0) return hi;
    if ((a < 0.0) != (b < 0.0)) {
      return brent_root([&](double t) { return q(t) - target; }, lo, hi, opts.tol * 1e-3);
    }
  }
  // A root touching the profile's extremum may not produce a sign change.
  std::size_t best = 0;
  for (std::size_t i = 1; i <= cells; ++i) {
    if (std::abs(vals[i] - target) < std::abs(vals[best] - target)) best = i;
  }
  if (std::abs(vals[best] - target) <= opts.tol) return static_cast<double>(best) / cells;
  return std::nullopt;
}

std::vector<double> grid_values(const std::function<double(double)>& q, int cells) {
  std::vector<double> vals(static_cast<std::size_t>(cells) + 1);
  for (int i = 0; i <= cells; ++i) vals[static_cast<std::size_t>(i)] = q(static_cast<double>(i) / cells);
  return vals;
}

bool is_constant(const std::vector<double>& vals, double tol) {
  const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
  return *hi - *lo <= tol;
}

// Returns the localized point for each target, sharing grid evaluations.
std::vector<double> locate_all(const std::function<double(double)>& q,
                               const std::vector<double>& targets, const LocalizeOptions& opts,
                               bool* constant) {
  int cells = std::max(opts.cells, 1);
  std::vector<double> vals = grid_values(q, cells);
  if (is_constant(vals, opts.tol)) {
    if (constant) *constant = true;
    return std::vector<double>(targets.size(), 0.5);
  }
  if (constant) *constant = false;
  std::vector<std::optional<double>> found(targets.size());
  for (;;) {
    bool all = true;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (!found[t]) found[t] = scan_for_root(q, vals, targets[t], opts);
      all = all && found[t].has_value();
    }
    if (all) break;
    if (cells * 2 > opts.max_cells) {
      throw ResolutionError("localize: no crossing of the curvature profile found with " +
                            std::to_string(cells) + " cells");
    }
    cells *= 2;
    vals = grid_values(q, cells);
  }
  std::vector<double> out;
  for (const auto& f : found) out.push_back(*f);
  return out;
}

double lanczos_at(const LossModel& model, const Vector& point, const Vector& u,
                  const LanczosOptions& base) {
  LanczosOptions lo = base;
  lo.start = u;
  lo.check_symmetry = false;
  try {
    return lambda_max_lanczos([&](const Vector& v) { return model.hvp(point, v); }, model.dim(), lo)
        .lambda_max;
  } catch (const NonConvergenceError& e) {
    // The last Ritz value is still a lower bound on λ_max above q(τ).
    return e.history().empty() ? kNaN : e.history().back();
  }
}

}  // namespace

double localize_point(const std::function<double(double)>& q, double target,
                      const LocalizeOptions& opts, bool* constant) {
  return locate_all(q, {target}, opts, constant).front();
}

LocalizationRecord localize(const LossModel& model, const TrajectoryLog& log, Index k,
                            const LocalizeOptions& opts) {
  const Vector& d = checked_step(log, k);
  const Vector w = log.iterate(k);
  const QuadratureOptions quad = opts.quad.value_or(quadrature_for(model));
  const auto [ebar, etilde] = segment_energies(model, w, d, quad);
  const double nsq = d.squaredNorm();
  const Vector u = d / d.norm();
  auto q = [&](double tau) { return u.dot(model.hvp(w + tau * d, u)); };

  LocalizationRecord rec;
  rec.k = k;
  rec.rtilde = etilde / nsq;
  rec.rbar = ebar / nsq;
  const auto pts = locate_all(q, {rec.rtilde, rec.rbar}, opts, &rec.constant_profile);
  rec.xi = pts[0];
  rec.zeta = pts[1];
  rec.q_xi = q(rec.xi);
  rec.q_zeta = q(rec.zeta);
  if (opts.compute_lambda) {
    rec.lambda_xi = lanczos_at(model, w + rec.xi * d, u, opts.lanczos);
    rec.lambda_zeta = lanczos_at(model, w + rec.zeta * d, u, opts.lanczos);
  } else {
    rec.lambda_xi = rec.lambda_zeta = kNaN;
  }
  return rec;
}

// ---------------------------------------------------------------------------

std::vector<double> default_deltas(double eta) {
  const double edge = 2.0 / eta;
  return {0.05 * edge, 0.1 * edge, 0.5 * edge};
}

namespace {

EdgeBalanceReport balance_from_energies(const TrajectoryLog& log,
                                        const std::vector<SampleEnergy>& energies,
                                        CurvatureRoute route, std::optional<double> infimum,
                                        std::vector<double> deltas) {
  EdgeBalanceReport r;
  r.K = log.num_steps();
  r.eta = log.eta;
  r.route = route;
  if (deltas.empty()) deltas = default_deltas(log.eta);
  const double edge = 2.0 / log.eta;
  double weighted = 0.0;
  r.max_rtilde = -std::numeric_limits<double>::infinity();
  for (const auto& e : energies) {
    const double n2 = e.s.step_norm_sq;
    const double dev = edge * n2 - e.tilde_energy;  // ‖d‖²(2/η − r̃)
    r.E_K += n2;
    r.identity_lhs += dev;
    weighted += e.tilde_energy;
    r.B_minus += std::max(dev, 0.0);
    r.B_plus += std::max(-dev, 0.0);
    if (std::isfinite(e.s.rtilde)) r.max_rtilde = std::max(r.max_rtilde, e.s.rtilde);
  }
  const double L0 = log.losses.front(), LK = log.losses.back();
  r.identity_rhs = 2.0 * (L0 - LK);
  r.identity_residual = r.identity_lhs - r.identity_rhs;
  r.signed_residual = r.B_minus - r.B_plus - r.identity_rhs;
  r.weighted_mean = r.E_K > 0.0 ? weighted / r.E_K : kNaN;
  if (infimum && r.E_K > 0.0) {
    r.forcing_bound = edge - 2.0 * (L0 - *infimum) / r.E_K;
    r.forcing_holds = r.max_rtilde >= *r.forcing_bound - 1e-9 * (1.0 + edge);
  }
  for (double delta : deltas) {
    WindowMass m;
    m.delta = delta;
    double inside = 0.0;
    for (const auto& e : energies) {
      if (!std::isfinite(e.s.rtilde)) continue;
      if (e.s.rtilde <= edge - delta) m.sub_mass += e.s.step_norm_sq;
      if (e.s.rtilde >= edge + delta) m.super_mass += e.s.step_norm_sq;
      if (std::abs(e.s.rtilde - edge) < delta) inside += e.s.step_norm_sq;
    }
    m.in_window_fraction = r.E_K > 0.0 ? inside / r.E_K : kNaN;
    if (infimum) m.sub_bound = (2.0 * (L0 - *infimum) + r.B_plus) / delta;
    m.super_bound = r.B_plus / delta;
    r.windows.push_back(m);
  }
  return r;
}

}  // namespace

EdgeBalanceReport edge_balance_report(const LossModel& model, const TrajectoryLog& log,
                                      CurvatureRoute route, std::vector<double> deltas,
                                      std::optional<QuadratureOptions> quad) {
  const auto energies = all_energies(model, log, route, quad.value_or(quadrature_for(model)));
  return balance_from_energies(log, energies, route, model.infimum(), std::move(deltas));
}

EdgeBalanceReport edge_balance_from_samples(const TrajectoryLog& log,
                                            const std::vector<CurvatureSample>& samples,
                                            std::optional<double> infimum,
                                            std::vector<double> deltas) {
  if (static_cast<Index>(samples.size()) != log.num_steps()) {
    throw ShapeError("edge_balance_from_samples: one sample per step required");
  }
  std::vector<SampleEnergy> energies;
  for (const auto& s : samples) {
    SampleEnergy e;
    e.s = s;
    e.tilde_energy = std::isfinite(s.rtilde) ? s.rtilde * s.step_norm_sq : 0.0;
    e.bar_energy = std::isfinite(s.rbar) ? s.rbar * s.step_norm_sq : 0.0;
    energies.push_back(e);
  }
  const CurvatureRoute route = samples.empty() ? CurvatureRoute::Exact : samples.front().route;
  return balance_from_energies(log, energies, route, infimum, std::move(deltas));
}

RunningBalance running_balance(const TrajectoryLog& log,
                               const std::vector<CurvatureSample>& samples,
                               std::optional<double> infimum) {
  RunningBalance rb;
  const double edge = 2.0 / log.eta;
  const double L0 = log.losses.front();
  double E = 0.0, weighted = 0.0;
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& s : samples) {
    if (std::isfinite(s.rtilde)) {
      E += s.step_norm_sq;
      weighted += s.rtilde * s.step_norm_sq;
      mx = std::max(mx, s.rtilde);
    }
    rb.weighted_mean.push_back(E > 0.0 ? weighted / E : kNaN);
    rb.max_rtilde.push_back(mx);
    if (infimum && E > 0.0) {
      const double bound = edge - 2.0 * (L0 - *infimum) / E;
      rb.forcing_bound.push_back(bound);
      if (mx < bound - 1e-9 * (1.0 + edge)) rb.forcing_holds_everywhere = false;
    } else {
      rb.forcing_bound.push_back(kNaN);
    }
  }
  return rb;
}

Index eos_onset(const std::vector<CurvatureSample>& samples, double eta, double fraction) {
  const double threshold = fraction * 2.0 / eta;
  for (const auto& s : samples) {
    if (std::isfinite(s.rtilde) && s.rtilde >= threshold) return s.k;
  }
  return -1;
}

// ---------------------------------------------------------------------------

NearPeriodicity near_periodicity_bound(const TrajectoryLog& log, Index k) {
  const Vector& d = checked_step(log, k);
  const Vector& d1 = step_at(log, k + 1);
  const double two_step = (d + d1).norm();
  NearPeriodicity out;
  out.lhs = std::abs(rbar_exact(log, k) - 2.0 / log.eta);
  out.rhs = two_step / (log.eta * d.norm());
  out.return_ratio = two_step / d.norm();
  return out;
}

LossChange loss_change_proxy(const TrajectoryLog& log, Index k) {
  const Vector& d = step_at(log, k);
  const Vector& d1 = step_at(log, k + 1);
  LossChange out;
  out.proxy = -d.dot(d + d1) / (2.0 * log.eta);
  out.actual = log.losses[static_cast<std::size_t>(k + 1)] - log.losses[static_cast<std::size_t>(k)];
  return out;
}

StepClass descent_classifier(double rtilde, double eta, double delta_loss, double tie_tol) {
  const double edge = 2.0 / eta;
  if (std::abs(delta_loss) <= tie_tol) return StepClass::Stationary;
  const StepClass by_loss = delta_loss < 0.0 ? StepClass::Descent : StepClass::Ascent;
  if (std::abs(rtilde - edge) <= 1e-10 * edge) return by_loss;
  const StepClass by_curv = rtilde < edge ? StepClass::Descent : StepClass::Ascent;
  if (by_curv != by_loss) {
    throw InvariantViolation("descent_classifier: r̃ = " + std::to_string(rtilde) +
                             " disagrees with the sign of ΔL = " + std::to_string(delta_loss));
  }
  return by_curv;
}

const char* to_string(StepClass c) {
  switch (c) {
    case StepClass::Descent: return "descent";
    case StepClass::Ascent: return "ascent";
    case StepClass::Stationary: return "stationary";
  }
  return "?";
}

// ---------------------------------------------------------------------------

SgdBalanceReport sgd_balance_report(const LossModel& model, const StochasticTrajectoryLog& log,
                                    CurvatureRoute route, std::optional<QuadratureOptions> quad) {
  const Index K = log.num_steps();
  if (static_cast<Index>(log.noise.size()) != K) {
    throw InvariantViolation("sgd_balance_report: noise records missing");
  }
  const QuadratureOptions q = quad.value_or(quadrature_for(model));
  const double eta = log.eta, edge = 2.0 / eta;
  std::vector<double> tilde(static_cast<std::size_t>(K));
  std::vector<double> prop(static_cast<std::size_t>(std::max<Index>(K - 1, 0)), 0.0);
  parallel_for(K, [&](std::ptrdiff_t k) {
    const std::size_t i = static_cast<std::size_t>(k);
    const Vector& s = log.steps[i];
    const Vector w = log.iterate(k);
    if (route == CurvatureRoute::Exact) {
      // L₊ − L = ⟨g, s⟩ + ½ sᵀH̃s.
      tilde[i] = 2.0 * (log.losses[i + 1] - log.losses[i] - log.grads[i].dot(s));
    } else {
      tilde[i] = segment_energy(model, w, s, Weight::Triangular, q);
    }
    if (k + 1 < K) {
      const Vector Hs = integrate_weighted(
          [&](double tau) { return model.hvp(w + tau * s, s); }, Weight::Uniform, q);
      const Vector& s1 = log.steps[i + 1];
      const Vector res = s1 - (s - eta * Hs) + eta * (log.noise[i + 1] - log.noise[i]);
      const double scale = s.norm() + s1.norm() +
                           eta * (log.noise[i].norm() + log.noise[i + 1].norm()) + 1e-300;
      prop[i] = res.norm() / scale;
    }
  });
  SgdBalanceReport r;
  r.K = K;
  double noise_sq = 0.0;
  for (Index k = 0; k < K; ++k) {
    const std::size_t i = static_cast<std::size_t>(k);
    r.lhs += edge * log.steps[i].squaredNorm() - tilde[i];
    r.cross_sum += log.grads[i].dot(log.noise[i]);
    noise_sq += log.noise[i].squaredNorm();
  }
  r.loss_term = 2.0 * (log.losses.front() - log.losses.back());
  r.cross_term = 2.0 * eta * r.cross_sum;
  r.noise_term = 2.0 * eta * noise_sq;
  r.residual = r.lhs - (r.loss_term + r.cross_term + r.noise_term);
  for (double p : prop) r.max_propagator_residual = std::max(r.max_propagator_residual, p);
  return r;
}

// ---------------------------------------------------------------------------

std::vector<MetricsRow> compute_metrics(const LossModel& model, const TrajectoryLog& log,
                                        const MetricsOptions& opts) {
  const Index K = log.num_steps();
  const QuadratureOptions q = opts.quad.value_or(quadrature_for(model));
  std::vector<MetricsRow> rows(static_cast<std::size_t>(K));
  parallel_for(K, [&](std::ptrdiff_t kk) {
    const Index k = kk;
    MetricsRow& row = rows[static_cast<std::size_t>(k)];
    row.k = k;
    const Vector& d = log.steps[static_cast<std::size_t>(k)];
    row.step_norm_sq = d.squaredNorm();
    row.delta_L = log.losses[static_cast<std::size_t>(k + 1)] - log.losses[static_cast<std::size_t>(k)];
    const bool degenerate = d.norm() < kDegenerateStep;
    row.rbar = row.rtilde = row.xi = row.zeta = row.lambda_max_xi = kNaN;
    if (!degenerate) {
      if (opts.localize) {
        LocalizeOptions lo = opts.localize_opts;
        lo.quad = q;
        const LocalizationRecord rec = localize(model, log, k, lo);
        row.rbar = rec.rbar;
        row.rtilde = rec.rtilde;
        row.xi = rec.xi;
        row.zeta = rec.zeta;
        row.lambda_max_xi = rec.lambda_xi;
      } else {
        const auto [eb, et] = segment_energies(model, log.iterate(k), d, q);
        row.rbar = eb / row.step_norm_sq;
        row.rtilde = et / row.step_norm_sq;
      }
    }
    if (k + 1 < K) {
      const LossChange lc = loss_change_proxy(log, k);
      row.proxy = lc.proxy;
      const Vector& d1 = log.steps[static_cast<std::size_t>(k + 1)];
      row.return_ratio = degenerate ? kNaN : (d + d1).norm() / d.norm();
    } else {
      row.proxy = row.return_ratio = kNaN;
    }
  });
  return rows;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  csv::Writer w(os, {"k", "step_norm_sq", "rbar", "rtilde", "xi", "zeta", "lambda_max_xi",
                     "delta_L", "proxy", "return_ratio"});
  for (const auto& r : rows) {
    w.row({static_cast<double>(r.k), r.step_norm_sq, r.rbar, r.rtilde, r.xi, r.zeta,
           r.lambda_max_xi, r.delta_L, r.proxy, r.return_ratio});
  }
}

}  // namespace edgelab
