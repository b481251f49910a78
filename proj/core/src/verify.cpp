#include "edgelab/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "edgelab/bifurcation.hpp"
#include "edgelab/edge_metrics.hpp"
#include "edgelab/errors.hpp"
#include "edgelab/parallel.hpp"
#include "edgelab/quadrature.hpp"
#include "edgelab/stability_kv.hpp"

namespace edgelab::verify {

namespace {

using Clock = std::chrono::steady_clock;
constexpr double kInf = std::numeric_limits<double>::infinity();

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

Vector randn(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> N(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = N(rng);
  return v;
}

Matrix random_orthogonal(std::mt19937_64& rng, Index n) {
  Matrix A(n, n);
  for (Index j = 0; j < n; ++j) A.col(j) = randn(rng, n);
  Eigen::HouseholderQR<Matrix> qr(A);
  Matrix Q = qr.householderQ();
  const Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j) {
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  }
  return Q;
}

SymMatrix spd_with_spectrum(std::mt19937_64& rng, const Vector& eig) {
  const Matrix Q = random_orthogonal(rng, eig.size());
  return SymMatrix(Q * eig.asDiagonal() * Q.transpose());
}

bool degenerate(const TrajectoryLog& log, Index k) {
  return std::sqrt(log.step_norm_sq(k)) < kDegenerateStep;
}

/// First K steps of a densely stored log.
TrajectoryLog prefix(const TrajectoryLog& log, Index K) {
  if (log.stride != 1) throw InvariantViolation("prefix: thinned logs are not supported");
  K = std::min(K, log.num_steps());
  TrajectoryLog p;
  p.eta = log.eta;
  p.model_name = log.model_name;
  p.seed = log.seed;
  p.losses.assign(log.losses.begin(), log.losses.begin() + K + 1);
  p.grads.assign(log.grads.begin(), log.grads.begin() + K + 1);
  p.steps.assign(log.steps.begin(), log.steps.begin() + K);
  p.stored.assign(log.stored.begin(), log.stored.begin() + K + 1);
  p.stored_index.assign(log.stored_index.begin(), log.stored_index.begin() + K + 1);
  return p;
}

/// Quadratic with eigenvalues spread in [0.2, 3.6], dim 20, η = 0.5.
struct QuadSetup {
  std::shared_ptr<const QuadraticModel> model;
  Vector w0;
  double eta = 0.5;
};

QuadSetup quad_setup(Index dim = 20, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  Vector eig(dim);
  for (Index i = 0; i < dim; ++i) {
    eig(i) = 0.2 + 3.4 * static_cast<double>(i) / static_cast<double>(std::max<Index>(dim - 1, 1));
  }
  const SymMatrix H = spd_with_spectrum(rng, eig);
  const Vector c = randn(rng, dim);
  QuadSetup s;
  s.model = std::make_shared<const QuadraticModel>(H, c);
  s.w0 = c + randn(rng, dim);
  return s;
}

/// Two-layer linear net of the pitchfork figure: p = 5, h = 3, d = 10, target
/// fitted by least squares to a rank-3 teacher with singular values (3, 2, 1).
struct LinearNetSetup {
  std::shared_ptr<const TwoLayerLinearModel> model;
  LinearNetGeometry geom;
  Dataset data;
};

LinearNetSetup linear_net_setup() {
  DatasetOptions o;
  o.teacher_singular_values = {3.0, 2.0, 1.0};
  LinearNetSetup s;
  s.data = make_synthetic_dataset(3, 200, 10, 5, o);
  const Matrix M = least_squares_target(s.data, 3);
  s.model = make_two_layer_linear(M, 3);
  s.geom = balanced_minimizer(M, 3);
  return s;
}

std::vector<double> log_grid(double center, double lo, double hi, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) {
    g.push_back(center + lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
  }
  return g;
}

BundledRun make_run(const std::string& name) {
  if (name == "quadratic") {
    const QuadSetup q = quad_setup();
    return {name, q.model, run_gd(*q.model, q.w0, q.eta, 100), true};
  }
  if (name == "quartic") {
    ModelPtr m = make_scalar_poly(1.0, 0.0, -1.0);
    return {name, m, run_gd(*m, Vector::Constant(1, 0.3), 2.5, 2000), true};
  }
  if (name == "linear_net") {
    const LinearNetSetup s = linear_net_setup();
    const double eta_c = 1.0 / s.geom.sigma(0);
    std::mt19937_64 rng(5);
    const Vector w0 = s.geom.wbar + 0.05 * s.geom.sharp_direction() + 1e-3 * randn(rng, s.model->dim());
    return {name, s.model, run_gd(*s.model, w0, 1.02 * eta_c, 2000), true};
  }
  if (name == "mlp") {
    const MlpSetup s = mlp_setup();
    return {name, s.model, run_gd(*s.model, s.w0, s.eta, 4000), false};
  }
  throw InvariantViolation("no bundled run named " + name);
}

const std::vector<std::string> kRunNames = {"quadratic", "quartic", "linear_net", "mlp"};

/// Runs are built on first use so that each criterion pays only for its own.
const BundledRun& run_named(const std::string& name) {
  static std::map<std::string, BundledRun> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, make_run(name)).first;
  return it->second;
}

std::vector<std::reference_wrapper<const BundledRun>> cached_runs() {
  std::vector<std::reference_wrapper<const BundledRun>> out;
  for (const auto& n : kRunNames) out.emplace_back(run_named(n));
  return out;
}

/// Floating-point floor of |r̄_k − 2/η| against the two-step return: the
/// stored segment differs from −ηg_k by a rounding of w_k.
double periodicity_floor(const TrajectoryLog& log, Index k) {
  const double eps = std::numeric_limits<double>::epsilon();
  const double wsum = log.iterate(k).norm() + log.iterate(k + 1).norm() + log.iterate(k + 2).norm();
  return 4.0 * eps * wsum / (log.eta * std::sqrt(log.step_norm_sq(k)));
}

/// Edge-balance residual threshold: absolute scale for polynomial models,
/// relative to 2(L₀ − L_K) otherwise.
struct BalanceMeasure {
  double measured = 0.0;
  double threshold = 0.0;
};

BalanceMeasure balance_measure(const BundledRun& run, const TrajectoryLog& log) {
  // MLP segments are short and smooth: a fixed 8-node rule is far inside the
  // 1e-5 tolerance at a third of the adaptive cost.
  std::optional<QuadratureOptions> quad;
  if (!run.polynomial) {
    quad = QuadratureOptions{};
    quad->order = 8;
  }
  const EdgeBalanceReport rep = edge_balance_report(*run.model, log, CurvatureRoute::Quadrature, {}, quad);
  if (run.polynomial) {
    return {std::abs(rep.identity_residual) / std::max(1.0, std::abs(log.losses.front())), 1e-8};
  }
  return {std::abs(rep.identity_residual) / std::abs(rep.identity_rhs), 1e-5};
}

CheckResult fail_from(CheckResult r, const std::string& why) {
  r.pass = false;
  r.detail = why;
  return r;
}

}  // namespace

bool Criterion::pass() const {
  if (checks.empty()) return false;
  if (budget_seconds > 0.0 && seconds > budget_seconds) return false;
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

CheckResult timed_check(std::string id, std::string identity, double threshold,
                        const std::function<void(CheckResult&)>& body) {
  CheckResult r;
  r.id = std::move(id);
  r.identity = std::move(identity);
  r.threshold = threshold;
  const auto t0 = Clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r = fail_from(r, std::string("exception: ") + e.what());
  }
  r.seconds = seconds_since(t0);
  return r;
}

MlpSetup mlp_setup() {
  DatasetOptions o;
  o.target_scale = 0.3;
  Dataset data = make_synthetic_dataset(7, 200, 10, 5, o);
  MlpSetup s;
  s.model = make_mlp({10, 12, 12, 5}, Activation::Tanh, std::move(data));
  s.w0 = s.model->init_params(11, 0.5);
  LanczosOptions lo;
  lo.seed = 11;
  s.lambda0 = lambda_max_lanczos([&](const Vector& v) { return s.model->hvp(s.w0, v); },
                                 s.model->dim(), lo)
                  .lambda_max;
  s.eta = 0.9 * 2.0 / s.lambda0;
  return s;
}

std::vector<BundledRun> bundled_runs() {
  std::vector<BundledRun> out;
  for (const auto& n : kRunNames) out.push_back(run_named(n));
  return out;
}

// ---------------------------------------------------------------------------
// Criteria

namespace {

Criterion criterion_quadratic_exactness() {
  Criterion c{1, "quadratic exactness", {}, 0.0, 1.0};
  const BundledRun& run = run_named("quadratic");
  const auto& model = static_cast<const QuadraticModel&>(*run.model);
  const TrajectoryLog& log = run.log;
  const Matrix& H = model.hessian().matrix();
  const QuadratureOptions q = quadrature_for(model);

  c.checks.push_back(timed_check("quad.curvatures", "rbar = rtilde = u'Hu by both routes", 1e-10,
                                 [&](CheckResult& r) {
    double worst = 0.0;
    for (Index k = 0; k < log.num_steps(); ++k) {
      const Vector& d = log.steps[static_cast<std::size_t>(k)];
      const double ref = d.dot(H * d) / d.squaredNorm();
      for (double v : {rbar_exact(log, k), rtilde_from_loss(log, k), rbar_quadrature(model, log, k, q),
                       rtilde_quadrature(model, log, k, q)}) {
        worst = std::max(worst, std::abs(v - ref));
      }
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
  }));

  c.checks.push_back(timed_check("quad.propagator", "d_{k+1} = (I - eta H) d_k", 1e-10,
                                 [&](CheckResult& r) {
    double worst = 0.0;
    for (Index k = 0; k + 1 < log.num_steps(); ++k) {
      const Vector& d = log.steps[static_cast<std::size_t>(k)];
      const Vector pred = d - log.eta * (H * d);
      worst = std::max(worst, (log.steps[static_cast<std::size_t>(k + 1)] - pred).cwiseAbs().maxCoeff());
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
  }));

  c.checks.push_back(timed_check("quad.telescoping",
                                 "sum |d_k|^2 (2/eta - rtilde_k) = 2 (L_0 - L_K), quadrature route",
                                 1e-10, [&](CheckResult& r) {
    const EdgeBalanceReport rep = edge_balance_report(model, log, CurvatureRoute::Quadrature);
    r.measured = std::abs(rep.identity_residual);
    r.pass = r.measured <= r.threshold;
  }));
  return c;
}

Criterion criterion_edge_balance() {
  Criterion c{2, "independent edge balance", {}, 0.0, 30.0};
  for (const char* name : {"linear_net", "quartic", "mlp"}) {
    const BundledRun& run = run_named(name);
    const Index K = 2000;
    const std::string identity =
        std::string("sum |d_k|^2 (2/eta - rtilde_k) = 2 (L_0 - L_K), quadrature route, ") +
        (run.polynomial ? "abs / max(1, |L_0|)" : "relative");
    c.checks.push_back(timed_check(std::string("balance.") + name, identity, 0.0, [&](CheckResult& r) {
      const TrajectoryLog log = prefix(run.log, K);
      if (log.num_steps() < K) throw InvariantViolation("run shorter than K = 2000");
      const BalanceMeasure b = balance_measure(run, log);
      r.measured = b.measured;
      r.threshold = b.threshold;
      r.pass = b.measured <= b.threshold;
    }));
  }
  return c;
}

Criterion criterion_saturation() {
  Criterion c{3, "edge-of-stability saturation (MLP)", {}, 0.0, 180.0};
  const BundledRun& run = run_named("mlp");
  const MlpSetup s = mlp_setup();
  c.checks.push_back(timed_check("eos.initial_sharpness", "eta * lambda_max(w_0) / 2 < 1", 1.0,
                                 [&](CheckResult& r) {
    r.measured = s.eta * s.lambda0 / 2.0;
    r.pass = r.measured < 1.0;
  }));
  std::vector<CurvatureSample> samples;
  RunningBalance rb;
  c.checks.push_back(timed_check("eos.weighted_mean",
                                 "running weighted mean of rtilde within 5% of 2/eta on the last quarter",
                                 0.05, [&](CheckResult& r) {
    if (run.log.diverged || run.log.num_steps() < 4000) throw InvariantViolation("MLP run diverged");
    samples = curvature_samples(*run.model, run.log, CurvatureRoute::Exact);
    rb = running_balance(run.log, samples, run.model->infimum());
    const double edge = 2.0 / run.log.eta;
    const std::size_t n = rb.weighted_mean.size();
    double worst = 0.0;
    for (std::size_t i = 3 * n / 4; i < n; ++i) {
      worst = std::max(worst, std::abs(rb.weighted_mean[i] - edge) / edge);
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
    r.detail = "final weighted mean " + fmt(rb.weighted_mean.back()) + ", 2/eta " + fmt(edge);
  }));
  c.checks.push_back(timed_check("eos.forcing", "max_k rtilde_k >= 2/eta - 2 (L_0 - L_inf)/E_K at every K",
                                 0.0, [&](CheckResult& r) {
    if (rb.weighted_mean.empty()) throw InvariantViolation("running balance unavailable");
    double worst = -kInf;
    for (std::size_t i = 0; i < rb.max_rtilde.size(); ++i) {
      worst = std::max(worst, rb.forcing_bound[i] - rb.max_rtilde[i]);
    }
    r.measured = worst;
    r.pass = rb.forcing_holds_everywhere && worst <= 0.0;
  }));
  return c;
}

Criterion criterion_localization() {
  Criterion c{4, "mean-value localization", {}, 0.0, 0.0};
  for (const BundledRun& run : cached_runs()) {
    // The MLP run is localized over its first 1000 steps, which span the onset.
    const Index K = run.polynomial ? run.log.num_steps() : std::min<Index>(1000, run.log.num_steps());
    const double tol = run.polynomial ? 1e-8 : 1e-6;
    c.checks.push_back(timed_check("localize." + run.name,
                                   "|q(xi) - rtilde| and |q(zeta) - rbar| within tol at >= 95% of steps; "
                                   "lambda_max >= curvature - 1e-8 at every localized step",
                                   0.95, [&](CheckResult& r) {
      std::vector<int> status(static_cast<std::size_t>(K), 0);  // 0 skip, 1 ok, 2 miss, 3 λ fail
      std::vector<double> err(static_cast<std::size_t>(K), 0.0);
      LocalizeOptions lo;
      lo.tol = 1e-10;
      parallel_for(K, [&](std::ptrdiff_t kk) {
        const Index k = kk;
        if (degenerate(run.log, k)) return;
        try {
          const LocalizationRecord rec = localize(*run.model, run.log, k, lo);
          const double e = std::max(std::abs(rec.q_xi - rec.rtilde), std::abs(rec.q_zeta - rec.rbar));
          err[static_cast<std::size_t>(k)] = e;
          if (e > tol) {
            status[static_cast<std::size_t>(k)] = 2;
          } else if (rec.lambda_xi < rec.rtilde - 1e-8 || rec.lambda_zeta < rec.rbar - 1e-8) {
            status[static_cast<std::size_t>(k)] = 3;
          } else {
            status[static_cast<std::size_t>(k)] = 1;
          }
        } catch (const ResolutionError&) {
          status[static_cast<std::size_t>(k)] = 2;
        }
      });
      const auto count = [&](int s) { return std::count(status.begin(), status.end(), s); };
      const double eligible = static_cast<double>(K - count(0));
      const double ok = static_cast<double>(count(1));
      r.measured = eligible > 0.0 ? ok / eligible : 0.0;
      r.pass = eligible > 0.0 && r.measured >= r.threshold && count(3) == 0;
      r.detail = "steps " + std::to_string(static_cast<long long>(eligible)) + ", localized " +
                 std::to_string(static_cast<long long>(ok)) + ", lambda failures " +
                 std::to_string(count(3)) + ", worst |q - target| " +
                 fmt(*std::max_element(err.begin(), err.end()));
    }));
  }
  return c;
}

Criterion criterion_scalar_pitchfork() {
  Criterion c{5, "scalar pitchfork", {}, 0.0, 5.0};
  ModelPtr m = make_scalar_poly(1.0, 0.0, -1.0);
  const Vector wbar = Vector::Zero(1);
  const std::vector<double> grid = log_grid(2.0, 1e-4, 0.2, 12);
  BranchSweep sw;
  c.checks.push_back(timed_check("pitchfork.amplitude", "continuation |a| = sqrt(1 - 2/eta), relative", 1e-8,
                                 [&](CheckResult& r) {
    sw = branch_sweep(*m, wbar, grid);
    if (sw.branch_lost || sw.points.size() != grid.size()) throw InvariantViolation("branch lost");
    double worst = 0.0;
    for (const auto& p : sw.points) {
      const double exact = std::sqrt(1.0 - 2.0 / p.eta);
      worst = std::max(worst, std::abs(p.amplitude - exact) / exact);
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
    r.detail = "eta_c " + fmt(sw.eta_c) + ", Q " + fmt(sw.Q);
  }));
  c.checks.push_back(timed_check("pitchfork.exponent", "log-log slope of |a| vs eta - eta_c on (2, 2.2]",
                                 0.02, [&](CheckResult& r) {
    if (sw.points.empty()) throw InvariantViolation("no branch");
    r.measured = std::abs(sw.exponent - 0.5);
    r.pass = r.measured <= r.threshold;
    r.detail = "exponent " + fmt(sw.exponent);
  }));
  return c;
}

Criterion criterion_linear_net() {
  Criterion c{6, "linear-net normal form", {}, 0.0, 120.0};
  Matrix M = Matrix::Zero(3, 4);
  M(0, 0) = 2.0;
  M(1, 1) = 1.0;
  const Index r = 2;
  const auto model = make_two_layer_linear(M, r);
  const LinearNetGeometry g = balanced_minimizer(M, r);

  c.checks.push_back(timed_check("linnet.spectrum",
                                 "transverse spectrum = {s_i + s_j} U {s_i} x (p + d - 2r)", 1e-8,
                                 [&](CheckResult& res) {
    const Matrix& B = g.normal_basis;
    const Matrix H = model->hessian_dense(g.wbar).matrix();
    const Eigh e = dense_eigh(SymMatrix(B.transpose() * H * B));
    std::vector<double> expect;
    for (Index i = 0; i < r; ++i) {
      for (Index j = 0; j < r; ++j) expect.push_back(g.sigma(i) + g.sigma(j));
    }
    for (Index i = 0; i < r; ++i) {
      for (Index t = 0; t < g.p + g.d - 2 * r; ++t) expect.push_back(g.sigma(i));
    }
    std::sort(expect.begin(), expect.end());
    if (static_cast<Index>(expect.size()) != e.values.size()) throw ShapeError("normal dimension mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < expect.size(); ++i) {
      worst = std::max(worst, std::abs(e.values(static_cast<Index>(i)) - expect[i]));
    }
    // The numeric kernel split must agree with the analytic normal space.
    const Index numeric = numeric_normal_basis(*model, g.wbar).cols();
    res.measured = worst;
    res.pass = worst <= res.threshold && numeric == g.normal_dim();
    res.detail = "normal dim " + std::to_string(g.normal_dim()) + ", numeric " + std::to_string(numeric);
  }));

  c.checks.push_back(timed_check("linnet.quartic", "Q on the normal space at u_c = -4", 1e-4,
                                 [&](CheckResult& res) {
    QuarticOptions qo;
    qo.subspace = g.normal_basis;
    const QuarticJet jet = quartic_Q(*model, g.wbar, g.sharp_direction(), qo);
    res.measured = std::abs(jet.Q + 4.0);
    res.pass = res.measured <= res.threshold;
    res.detail = "Q " + fmt(jet.Q);
  }));

  c.checks.push_back(timed_check("linnet.eta_c", "eta_c = 1/sigma_1", 1e-10, [&](CheckResult& res) {
    const CriticalEta ce = critical_eta(*model, g.wbar, g.normal_basis);
    res.measured = std::abs(ce.eta_c - 1.0 / g.sigma(0));
    res.pass = res.measured <= res.threshold && ce.simple;
  }));

  c.checks.push_back(timed_check("linnet.width_invariance",
                                 "L_h(wbar_h + Z_h xi) = L_r(wbar_r + xi), h in {r, r+1, r+3}, relative",
                                 1e-13, [&](CheckResult& res) {
    std::mt19937_64 rng(17);
    double worst = 0.0;
    for (Index h : {r, r + 1, r + 3}) {
      const auto mh = make_two_layer_linear(M, h);
      const LinearNetGeometry gh = balanced_minimizer(M, h);
      for (int t = 0; t < 100; ++t) {
        const Vector xi = g.normal_basis * (0.3 * randn(rng, g.normal_dim()));
        const double lr = model->value(g.wbar + xi);
        const double lh = mh->value(gh.wbar + width_pad(g, xi, h));
        worst = std::max(worst, std::abs(lh - lr) / std::max(std::abs(lr), 1e-300));
      }
    }
    res.measured = worst;
    res.pass = worst <= res.threshold;
  }));

  c.checks.push_back(timed_check("linnet.empirical_exponent",
                                 "empirical pitchfork exponent on p=5, h=3, d=10, rank 3, n=200", 0.05,
                                 [&](CheckResult& res) {
    const LinearNetSetup s = linear_net_setup();
    const double eta_c = 1.0 / s.geom.sigma(0);
    SweepOptions so;
    so.mode = SweepMode::Empirical;
    const BranchSweep sw =
        branch_sweep(*s.model, s.geom.wbar, log_grid(eta_c, 1e-3 * eta_c, 5e-2 * eta_c, 8), so);
    res.measured = std::abs(sw.exponent - 0.5);
    res.pass = res.measured <= res.threshold;
    res.detail = "exponent " + fmt(sw.exponent) + ", eta_c " + fmt(sw.eta_c) + ", Q " + fmt(sw.Q);
  }));
  return c;
}

Criterion criterion_near_periodicity() {
  Criterion c{7, "near-periodicity", {}, 0.0, 0.0};
  for (const BundledRun& run : cached_runs()) {
    c.checks.push_back(timed_check("periodicity." + run.name,
                                   "|rbar_k - 2/eta| <= |w_{k+2} - w_k| / (eta |d_k|) + 1e-10", 1e-10,
                                   [&](CheckResult& r) {
      double worst = -kInf;
      for (Index k = 0; k + 1 < run.log.num_steps(); ++k) {
        if (degenerate(run.log, k)) continue;
        const NearPeriodicity np = near_periodicity_bound(run.log, k);
        worst = std::max(worst, np.lhs - np.rhs - periodicity_floor(run.log, k));
      }
      r.measured = worst;
      r.pass = worst <= r.threshold;
    }));
  }
  c.checks.push_back(timed_check("periodicity.return_ratio",
                                 "median two-step return ratio after the onset, MLP run", 0.3,
                                 [&](CheckResult& r) {
    const BundledRun& run = run_named("mlp");
    const auto samples = curvature_samples(*run.model, run.log, CurvatureRoute::Exact);
    const Index tc = eos_onset(samples, run.log.eta);
    if (tc < 0) throw InvariantViolation("no edge-of-stability onset");
    std::vector<double> ratios;
    for (Index k = tc; k + 1 < run.log.num_steps(); ++k) {
      if (!degenerate(run.log, k)) ratios.push_back(near_periodicity_bound(run.log, k).return_ratio);
    }
    std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
    r.measured = ratios[ratios.size() / 2];
    r.pass = r.measured < r.threshold;
    r.detail = "onset t_c = " + std::to_string(tc);
  }));
  return c;
}

Criterion criterion_mechanisms() {
  Criterion c{8, "stability mechanisms", {}, 0.0, 10.0};
  c.checks.push_back(timed_check("recoil.identity", "<d_{k+1}, d_k> = (1 - eta rbar_k) |d_k|^2, relative", 1e-10,
                                 [&](CheckResult& r) {
    double worst = 0.0;
    for (const BundledRun& run : cached_runs()) {
      for (Index k = 0; k + 1 < run.log.num_steps(); ++k) {
        if (degenerate(run.log, k)) continue;
        worst = std::max(worst, recoil_check(run.log, k).residual);
      }
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
  }));
  c.checks.push_back(timed_check("recoil.runs", "supercritical runs bounded by the geometric growth length",
                                 0.0, [&](CheckResult& r) {
    bool ok = true;
    std::string detail;
    for (const BundledRun& run : cached_runs()) {
      if (run.log.diverged) continue;
      const SupercriticalRuns s = supercritical_runs(run.log);
      ok = ok && s.holds;
      detail += run.name + ": longest " + std::to_string(s.longest) + " ";
    }
    r.measured = ok ? 0.0 : 1.0;
    r.pass = ok;
    r.detail = detail;
  }));
  c.checks.push_back(timed_check("oscillation.bound", "|x_T| <= eta (|u_{T-1}| + sum |u_{k+1} - u_k|), 1000 cases",
                                 1e-12, [&](CheckResult& r) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::uniform_int_distribution<int> T(1, 200);
    double worst = -kInf;
    for (int t = 0; t < 1000; ++t) {
      const int n = T(rng);
      const double eta = 0.01 + U(rng);
      std::vector<double> m(static_cast<std::size_t>(n)), u(static_cast<std::size_t>(n));
      const Vector z = randn(rng, n);
      for (int k = 0; k < n; ++k) {
        m[static_cast<std::size_t>(k)] = t % 4 == 0 ? -1.0 : -U(rng);
        u[static_cast<std::size_t>(k)] = z(k);
      }
      const OscillatoryResult o = oscillatory_bound(m, u, eta);
      worst = std::max(worst, o.x_T - o.bound);
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
  }));
  c.checks.push_back(timed_check("propagator.bound", "|T[k,s]|_op <= exp(sum kappa_r), 500 sequences", 1e-10,
                                 [&](CheckResult& r) {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::uniform_int_distribution<int> D(1, 10), L(1, 12);
    double worst = -kInf;
    for (int t = 0; t < 500; ++t) {
      const Index n = D(rng);
      const int len = L(rng);
      const double eta = 0.1 + U(rng);
      std::vector<SymMatrix> A;
      for (int j = 0; j < len; ++j) {
        Vector eig(n);
        for (Index i = 0; i < n; ++i) eig(i) = (-0.5 + (2.0 / eta + 1.0) * U(rng));
        A.push_back(spd_with_spectrum(rng, eig));
      }
      const PropagatorProduct p = propagator_from(A, eta, len, 0);
      worst = std::max(worst, p.op_norm - p.bound);
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
  }));
  return c;
}

Criterion criterion_kelvin_voigt() {
  Criterion c{9, "two-trajectory strain", {}, 0.0, 30.0};

  // Quadratic pair with a common H and centers a, b.
  std::mt19937_64 rng(31);
  const Index n = 5;
  Vector eig(n);
  eig << 0.3, 0.9, 1.5, 2.4, 3.3;
  const SymMatrix H = spd_with_spectrum(rng, eig);
  const Vector a = randn(rng, n), b = randn(rng, n);
  const QuadraticModel qa(H, a), qb(H, b);
  const double eta = 0.5;
  const Index Kq = 30;
  const PairedLog qpair = run_pair_gd(qa, qb, randn(rng, n), eta, Kq);
  StrainLog qlog;

  c.checks.push_back(timed_check("strain.quadratic_closed_form",
                                 "delta_k = -V diag(1 - (1 - eta lambda)^k) V' (b - a)", 1e-10,
                                 [&](CheckResult& r) {
    qlog = strain_run(qpair, qa, qb);
    const Eigh e = dense_eigh(H);
    double worst = 0.0;
    for (Index k = 0; k <= Kq; ++k) {
      Vector fac(n);
      for (Index i = 0; i < n; ++i) fac(i) = 1.0 - std::pow(1.0 - eta * e.values(i), static_cast<double>(k));
      const Vector closed = -(e.vectors * fac.asDiagonal() * e.vectors.transpose() * (b - a));
      const Vector& d = qlog.records[static_cast<std::size_t>(k)].delta;
      worst = std::max(worst, (d - closed).norm() / (1.0 + d.norm()));
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
  }));

  // Linear-net pair: least-squares targets of a dataset and its leave-one-out copy.
  const LinearNetSetup s = linear_net_setup();
  const auto ln_s2 = make_two_layer_linear(least_squares_target(drop_sample(s.data, 0), 3), 3);
  std::mt19937_64 rng2(37);
  const PairedLog lpair = run_pair_gd(*s.model, *ln_s2, 0.3 * randn(rng2, s.model->dim()), 0.1, 50);
  StrainLog llog;

  c.checks.push_back(timed_check("strain.recurrence_polynomial",
                                 "|delta_{k+1} - (I - eta A_k) delta_k + eta f_k|, quadratic and linear-net pairs",
                                 1e-10, [&](CheckResult& r) {
    llog = strain_run(lpair, *s.model, *ln_s2);
    r.measured = std::max(qlog.max_recurrence_residual(), llog.max_recurrence_residual());
    r.pass = r.measured <= r.threshold && qlog.strain_bound_holds() && llog.strain_bound_holds();
    r.detail = std::string("strain bound ") +
               (qlog.strain_bound_holds() && llog.strain_bound_holds() ? "holds" : "violated");
  }));

  c.checks.push_back(timed_check("strain.propagator_formula",
                                 "delta_k = -eta sum_s T[k,s+1] f_s, relative to 1 + |delta_k|", 1e-10,
                                 [&](CheckResult& r) {
    double worst = 0.0;
    for (const StrainLog* L : {&qlog, &llog}) {
      for (Index k = 0; k <= L->num_steps(); ++k) {
        const Vector& d = L->records[static_cast<std::size_t>(k)].delta;
        worst = std::max(worst, (strain_via_propagator(*L, k) - d).norm() / (1.0 + d.norm()));
      }
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
  }));

  c.checks.push_back(timed_check("strain.recurrence_mlp", "recurrence residual, MLP leave-one-out pair", 1e-6,
                                 [&](CheckResult& r) {
    const MlpSetup m = mlp_setup();
    const auto m2 = make_mlp(m.model->widths(), m.model->activation(), drop_sample(m.model->data(), 0));
    const PairedLog pair = run_pair_gd(*m.model, *m2, m.w0, m.eta, 10);
    const StrainLog L = strain_run(pair, *m.model, *m2);
    r.measured = L.max_recurrence_residual();
    r.pass = r.measured <= r.threshold && L.strain_bound_holds();
    r.detail = "final strain " + fmt(L.records.back().delta.norm()) + ", bound " + fmt(L.records.back().bound_rhs);
  }));
  return c;
}

Criterion criterion_stochastic() {
  Criterion c{10, "stochastic balance", {}, 0.0, 180.0};
  c.checks.push_back(timed_check("sgd.quadratic_identity",
                                 "sum |s_k|^2 (2/eta - rtilde_k) = 2 (L_0 - L_K) + 2 eta sum <g, eps> + 2 eta sum |eps|^2",
                                 1e-9, [&](CheckResult& r) {
    const QuadSetup q = quad_setup(5, 41);
    double worst = 0.0, worst_prop = 0.0;
    std::uint64_t seed = 100;
    for (double sigma : {0.0, 0.01, 0.1, 1.0}) {
      for (int rep = 0; rep < 25; ++rep) {
        GaussianNoise noise(sigma, seed++);
        const StochasticTrajectoryLog log = run_sgd(*q.model, q.w0, q.eta, 100, noise);
        const SgdBalanceReport b = sgd_balance_report(*q.model, log, CurvatureRoute::Quadrature);
        worst = std::max(worst, b.residual);
        worst_prop = std::max(worst_prop, b.max_propagator_residual);
      }
    }
    r.measured = worst;
    r.pass = worst <= r.threshold && worst_prop <= 1e-10;
    r.detail = "forced propagator residual " + fmt(worst_prop);
  }));
  c.checks.push_back(timed_check("sgd.martingale", "mean of sum_{k<20} <grad L, eps_k> over 1000 seeds within 3 SE of 0",
                                 3.0, [&](CheckResult& r) {
    const MlpSetup m = mlp_setup();
    const int seeds = 1000;
    std::vector<double> cross(seeds);
    parallel_for(seeds, [&](std::ptrdiff_t i) {
      MiniBatchNoise noise(20, 1000 + static_cast<std::uint64_t>(i));
      const StochasticTrajectoryLog log = run_sgd(*m.model, m.w0, m.eta, 20, noise);
      double sum = 0.0;
      for (Index k = 0; k < log.num_steps(); ++k) {
        sum += log.grads[static_cast<std::size_t>(k)].dot(log.noise[static_cast<std::size_t>(k)]);
      }
      cross[static_cast<std::size_t>(i)] = sum;
    });
    const double mean = std::accumulate(cross.begin(), cross.end(), 0.0) / seeds;
    double var = 0.0;
    for (double x : cross) var += (x - mean) * (x - mean);
    var /= (seeds - 1);
    const double se = std::sqrt(var / seeds);
    r.measured = std::abs(mean) / se;
    r.pass = r.measured <= r.threshold;
    r.detail = "mean " + fmt(mean) + ", standard error " + fmt(se);
  }));
  return c;
}

}  // namespace

Criterion run_criterion(int n) {
  const auto t0 = Clock::now();
  Criterion c;
  switch (n) {
    case 1: c = criterion_quadratic_exactness(); break;
    case 2: c = criterion_edge_balance(); break;
    case 3: c = criterion_saturation(); break;
    case 4: c = criterion_localization(); break;
    case 5: c = criterion_scalar_pitchfork(); break;
    case 6: c = criterion_linear_net(); break;
    case 7: c = criterion_near_periodicity(); break;
    case 8: c = criterion_mechanisms(); break;
    case 9: c = criterion_kelvin_voigt(); break;
    case 10: c = criterion_stochastic(); break;
    default: throw IndexError("run_criterion: no criterion " + std::to_string(n));
  }
  c.seconds = seconds_since(t0);
  return c;
}

// ---------------------------------------------------------------------------

std::vector<CheckResult> quick_checks() {
  std::vector<CheckResult> out = criterion_quadratic_exactness().checks;
  const QuadSetup q = quad_setup(8, 3);
  out.push_back(timed_check("quick.gd_update", "d_k = -eta grad L(w_k) on the quadratic run", 1e-13,
                            [&](CheckResult& r) {
    const TrajectoryLog log = run_gd(*q.model, q.w0, q.eta, 200);
    for (const auto& c : check_trajectory(log, q.model.get())) {
      if (!c.pass) throw InvariantViolation(c.id + " failed: " + c.detail);
    }
    r.measured = 0.0;
    r.pass = true;
  }));
  out.push_back(timed_check("quick.sgd_identity", "exact stochastic balance on a quadratic", 1e-9,
                            [&](CheckResult& r) {
    GaussianNoise noise(0.1, 9);
    const StochasticTrajectoryLog log = run_sgd(*q.model, q.w0, q.eta, 200, noise);
    r.measured = sgd_balance_report(*q.model, log, CurvatureRoute::Quadrature).residual;
    r.pass = r.measured <= r.threshold;
  }));
  out.push_back(timed_check("quick.strain", "strain recurrence on a quadratic pair", 1e-10, [&](CheckResult& r) {
    std::mt19937_64 rng(4);
    const QuadraticModel other(q.model->hessian(), q.model->center() + randn(rng, q.model->dim()));
    const PairedLog pair = run_pair_gd(*q.model, other, q.w0, q.eta, 40);
    const StrainLog L = strain_run(pair, *q.model, other);
    r.measured = L.max_recurrence_residual();
    r.pass = r.measured <= r.threshold && L.strain_bound_holds();
  }));
  return out;
}

std::vector<CheckResult> property_checks() {
  std::vector<CheckResult> out;
  std::vector<std::pair<std::string, ModelPtr>> models;
  models.emplace_back("quadratic", quad_setup(6, 2).model);
  models.emplace_back("scalar_poly", make_scalar_poly(1.0, 1.0, 0.5));
  models.emplace_back("linear_net", linear_net_setup().model);
  models.emplace_back("mlp_tanh", mlp_setup().model);
  {
    Dataset d = make_synthetic_dataset(2, 50, 4, 2);
    models.emplace_back("mlp_gelu", make_mlp({4, 6, 2}, Activation::Gelu, std::move(d)));
  }

  for (const auto& [name, model] : models) {
    out.push_back(timed_check("model.gradient_fd." + name, "gradient matches central FD at 10 points", 1e-5,
                              [&](CheckResult& r) {
      std::mt19937_64 rng(51);
      double worst = 0.0;
      for (int t = 0; t < 10; ++t) worst = std::max(worst, gradient_check(*model, 0.5 * randn(rng, model->dim())));
      r.measured = worst;
      r.pass = worst <= r.threshold;
    }));
    out.push_back(timed_check("model.hvp." + name, "u'H v = v'H u and dense H v = hvp, relative", 1e-8,
                              [&](CheckResult& r) {
      std::mt19937_64 rng(53);
      double worst = 0.0;
      for (int t = 0; t < 5; ++t) {
        const Vector w = 0.5 * randn(rng, model->dim());
        const Vector u = randn(rng, model->dim()), v = randn(rng, model->dim());
        const Vector Hv = model->hvp(w, v), Hu = model->hvp(w, u);
        const double scale = std::max(1.0, Hv.norm() * u.norm());
        worst = std::max(worst, std::abs(u.dot(Hv) - v.dot(Hu)) / scale);
        const Vector dense = model->hessian_dense(w) * v;
        worst = std::max(worst, (dense - Hv).norm() / std::max(1.0, Hv.norm()));
      }
      r.measured = worst;
      r.pass = worst <= r.threshold;
    }));
  }

  out.push_back(timed_check("numerics.eigh", "|A - V L V'|_max <= 1e-10 |A|_max on 500 random matrices", 1e-10,
                            [&](CheckResult& r) {
    std::mt19937_64 rng(61);
    std::uniform_int_distribution<int> D(1, 50);
    double worst = 0.0;
    for (int t = 0; t < 500; ++t) {
      const Index n = D(rng);
      Matrix A(n, n);
      for (Index j = 0; j < n; ++j) A.col(j) = randn(rng, n);
      A = (0.5 * (A + A.transpose())).eval();
      const Eigh e = dense_eigh(SymMatrix(A));
      const Matrix rec = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
      worst = std::max(worst, (A - rec).cwiseAbs().maxCoeff() / A.cwiseAbs().maxCoeff());
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
  }));

  out.push_back(timed_check("numerics.lanczos", "Lanczos lambda_max equals dense max on 200 random matrices", 1e-8,
                            [&](CheckResult& r) {
    std::mt19937_64 rng(67);
    std::uniform_int_distribution<int> D(2, 30);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
      const Index n = D(rng);
      Matrix A(n, n);
      for (Index j = 0; j < n; ++j) A.col(j) = randn(rng, n);
      A = (0.5 * (A + A.transpose())).eval();
      const double ref = dense_eigh(SymMatrix(A)).values(n - 1);
      LanczosOptions lo;
      lo.seed = static_cast<std::uint64_t>(t);
      const double est = lambda_max_lanczos([&](const Vector& v) { return Vector(A * v); }, n, lo).lambda_max;
      worst = std::max(worst, std::abs(est - ref) / std::max(1.0, std::abs(ref)));
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
  }));

  out.push_back(timed_check("numerics.gauss", "Gauss rules integrate tau^k, k <= 2n-1, exactly (relative)", 1e-13,
                            [&](CheckResult& r) {
    double worst = 0.0;
    for (int n = 1; n <= 12; ++n) {
      const QuadratureRule u = gauss_uniform(n), t = gauss_triangular(n);
      for (int k = 0; k <= 2 * n - 1; ++k) {
        const auto f = [k](double x) { return std::pow(x, k); };
        const double exact_u = 1.0 / (k + 1);
        const double exact_t = 2.0 / ((k + 1.0) * (k + 2.0));
        worst = std::max(worst, std::abs(integrate(f, u) - exact_u) / exact_u);
        worst = std::max(worst, std::abs(integrate(f, t) - exact_t) / exact_t);
      }
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
  }));

  out.push_back(timed_check("edge.route_agreement", "loss and quadrature routes agree per step (MLP relative)", 1e-6,
                            [&](CheckResult& r) {
    double worst = 0.0;
    for (const BundledRun& run : cached_runs()) {
      const TrajectoryLog log = prefix(run.log, 200);
      const auto ex = curvature_samples(*run.model, log, CurvatureRoute::Exact);
      const auto qu = curvature_samples(*run.model, log, CurvatureRoute::Quadrature);
      for (std::size_t k = 0; k < ex.size(); ++k) {
        if (!std::isfinite(ex[k].rtilde)) continue;
        const double scale = run.polynomial ? 1e-4 : std::max(1.0, std::abs(qu[k].rtilde));
        worst = std::max(worst, std::abs(ex[k].rtilde - qu[k].rtilde) / scale);
        worst = std::max(worst, std::abs(ex[k].rbar - qu[k].rbar) / scale);
      }
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
  }));

  out.push_back(timed_check("edge.windows", "window masses within their bounds for delta in {0.05, 0.1, 0.5} 2/eta",
                            0.0, [&](CheckResult& r) {
    double worst = -kInf;
    for (const BundledRun& run : cached_runs()) {
      const EdgeBalanceReport rep = edge_balance_report(*run.model, run.log, CurvatureRoute::Exact);
      for (const auto& w : rep.windows) {
        worst = std::max(worst, w.super_mass - w.super_bound * (1.0 + 1e-10));
        if (w.sub_bound) worst = std::max(worst, w.sub_mass - *w.sub_bound * (1.0 + 1e-10));
      }
      worst = std::max(worst, std::abs(rep.signed_residual) / std::max(1.0, std::abs(run.log.losses.front())) - 1e-10);
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
  }));

  out.push_back(timed_check("bifurcation.symmetries",
                            "center-map evenness, swap symmetry, Q(tu) = t^4 Q(u), Hessian of the profile at 0",
                            1e-6, [&](CheckResult& r) {
    const ModelPtr m = make_scalar_poly(1.0, 1.0, 0.5);
    const Vector wbar = Vector::Zero(1);
    double worst = 0.0;
    // Evenness of the center map.
    const Vector a = Vector::Constant(1, 0.05);
    const CenterSolve cs = center_solve(*m, wbar, a);
    worst = std::max(worst, cs.evenness_defect);
    // Homogeneity of Q.
    const double Q1 = quartic_Q(*m, wbar, Vector::Constant(1, 1.0)).Q;
    for (double t : {0.5, 2.0}) {
      const double Qt = quartic_Q(*m, wbar, Vector::Constant(1, t)).Q;
      worst = std::max(worst, std::abs(Qt - std::pow(t, 4) * Q1) / std::abs(std::pow(t, 4) * Q1));
    }
    // Swap symmetry of a period-two orbit on the quartic well.
    const ModelPtr q = make_scalar_poly(1.0, 0.0, -1.0);
    const BranchPoint p = period_two_solve(*q, wbar, 2.5, Vector::Constant(1, 0.4));
    const BranchPoint n = period_two_solve(*q, wbar, 2.5, Vector::Constant(1, -0.4));
    worst = std::max(worst, (p.m - n.m).norm() + (p.a + n.a).norm());
    // Hessian of the edge profile at a = 0.
    const Matrix Hp = edge_profile_hessian_fd(*m, wbar, 1e-4);
    worst = std::max(worst, std::abs(Hp(0, 0) - 1.0));
    r.measured = worst;
    r.pass = worst <= r.threshold;
  }));

  out.push_back(timed_check("bifurcation.linear_net_agreement",
                            "empirical and continuation amplitudes agree to 5% for eta <= 1.1 eta_c", 0.05,
                            [&](CheckResult& r) {
    Matrix M = Matrix::Zero(3, 4);
    M(0, 0) = 2.0;
    M(1, 1) = 1.0;
    const auto model = make_two_layer_linear(M, 2);
    const LinearNetGeometry g = balanced_minimizer(M, 2);
    std::vector<double> grid;
    for (double f : {1.01, 1.03, 1.05, 1.1}) grid.push_back(f * 0.5);
    SweepOptions cont;
    cont.solve.subspace = g.normal_basis;
    SweepOptions emp = cont;
    emp.mode = SweepMode::Empirical;
    const BranchSweep a = branch_sweep(*model, g.wbar, grid, cont);
    const BranchSweep b = branch_sweep(*model, g.wbar, grid, emp);
    if (a.points.size() != grid.size() || b.points.size() != grid.size()) throw InvariantViolation("branch lost");
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      worst = std::max(worst, std::abs(a.points[i].amplitude - b.points[i].amplitude) / a.points[i].amplitude);
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
  }));
  return out;
}

// ---------------------------------------------------------------------------

std::vector<CheckResult> check_trajectory(const TrajectoryLog& log, const LossModel* model) {
  std::vector<CheckResult> out;
  out.push_back(timed_check("log.shape", "record counts are mutually consistent", 0.0, [&](CheckResult& r) {
    log.validate_shape();
    r.pass = true;
  }));
  if (!out.back().pass) return out;

  out.push_back(timed_check("log.iterate_step", "w_{k+1} = w_k + d_k", 1e-12, [&](CheckResult& r) {
    double worst = 0.0;
    Index worst_k = -1;
    for (std::size_t j = 0; j + 1 < log.stored.size(); ++j) {
      Vector w = log.stored[j];
      for (Index k = log.stored_index[j]; k < log.stored_index[j + 1]; ++k) w += log.steps[static_cast<std::size_t>(k)];
      const double e = (w - log.stored[j + 1]).norm() / (1.0 + log.stored[j + 1].norm());
      if (e > worst) {
        worst = e;
        worst_k = log.stored_index[j + 1];
      }
    }
    r.measured = worst;
    r.pass = worst <= r.threshold;
    if (!r.pass) r.detail = "first large mismatch at iterate " + std::to_string(worst_k);
  }));

  if (model) {
    out.push_back(timed_check("log.loss_replay", "logged loss = L(w_k)", 1e-12, [&](CheckResult& r) {
      double worst = 0.0;
      Index at = -1;
      for (Index k = 0; k <= log.num_steps(); ++k) {
        const double L = model->value(log.iterate(k));
        const double e = std::abs(L - log.losses[static_cast<std::size_t>(k)]) / (1.0 + std::abs(L));
        if (!(e <= worst)) {
          worst = e;
          at = k;
        }
      }
      r.measured = worst;
      r.pass = worst <= r.threshold;
      if (!r.pass) r.detail = "worst at k = " + std::to_string(at);
    }));
  }

  const bool have_grads = static_cast<Index>(log.grads.size()) == log.num_steps() + 1;
  if (model && have_grads) {
    out.push_back(timed_check("log.gradient_replay", "logged gradient = grad L(w_k), relative", 1e-10,
                              [&](CheckResult& r) {
      double worst = 0.0;
      Index at = -1;
      for (Index k = 0; k <= log.num_steps(); ++k) {
        const Vector g = model->gradient(log.iterate(k));
        const double e = (g - log.grads[static_cast<std::size_t>(k)]).norm() / (1e-12 + g.norm());
        if (!(e <= worst)) {
          worst = e;
          at = k;
        }
      }
      r.measured = worst;
      r.pass = worst <= r.threshold;
      if (!r.pass) r.detail = "worst at k = " + std::to_string(at);
    }));
  }

  if (have_grads) {
    out.push_back(timed_check("log.gd_update", "d_k = -eta grad L(w_k)", 1e-13, [&](CheckResult& r) {
      double worst = 0.0;
      Index at = -1;
      for (Index k = 0; k < log.num_steps(); ++k) {
        const Vector& g = log.grads[static_cast<std::size_t>(k)];
        const Vector& d = log.steps[static_cast<std::size_t>(k)];
        // Rounding of w_k − ηg_k and the subtraction that recovers d_k.
        const Vector pred = -log.eta * g;
        const double ulp = 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + log.iterate(k).norm());
        const double e = std::max(0.0, (d - pred).norm() - ulp) / std::max(pred.norm(), 1e-300);
        if (!(e <= worst)) {
          worst = e;
          at = k;
        }
      }
      r.measured = worst;
      r.pass = worst <= r.threshold;
      if (!r.pass) r.detail = "worst at k = " + std::to_string(at);
    }));
  }

  if (model && log.num_steps() >= 1) {
    out.push_back(timed_check("log.edge_balance",
                              "sum |d_k|^2 (2/eta - rtilde_k) = 2 (L_0 - L_K), quadrature route", 0.0,
                              [&](CheckResult& r) {
      const EdgeBalanceReport rep = edge_balance_report(*model, log, CurvatureRoute::Quadrature);
      const bool poly = model->polynomial_degree() >= 0;
      r.threshold = poly ? 1e-8 : 1e-5;
      const double scale = poly ? std::max(1.0, std::abs(log.losses.front()))
                                : std::max(std::abs(rep.identity_rhs), 1e-300);
      r.measured = std::abs(rep.identity_residual) / scale;
      r.pass = r.measured <= r.threshold;
    }));
  }

  if (have_grads && log.num_steps() >= 2) {
    out.push_back(timed_check("log.near_periodicity", "|rbar_k - 2/eta| <= |w_{k+2} - w_k| / (eta |d_k|)", 1e-10,
                              [&](CheckResult& r) {
      double worst = -kInf;
      for (Index k = 0; k + 1 < log.num_steps(); ++k) {
        if (degenerate(log, k)) continue;
        const NearPeriodicity np = near_periodicity_bound(log, k);
        worst = std::max(worst, np.lhs - np.rhs - periodicity_floor(log, k));
      }
      r.measured = std::isfinite(worst) ? worst : 0.0;
      r.pass = r.measured <= r.threshold;
    }));
  }
  return out;
}

}  // namespace edgelab::verify
