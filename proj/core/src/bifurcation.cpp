#include "edgelab/bifurcation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "edgelab/errors.hpp"
#include "edgelab/parallel.hpp"
#include "edgelab/trajectory.hpp"

namespace edgelab {

EdgeCoupling::EdgeCoupling(const LossModel& model, double eta) : model_(model), eta_(eta) {
  if (!(eta > 0.0)) throw InvariantViolation("EdgeCoupling: η must be positive");
}

double EdgeCoupling::value(const Vector& x, const Vector& y) const {
  return model_.value(x) + model_.value(y) - (x - y).squaredNorm() / (2.0 * eta_);
}

double EdgeCoupling::reduced(const Vector& m, const Vector& a) const {
  return 0.5 * (model_.value(m + a) + model_.value(m - a)) - a.squaredNorm() / eta_;
}

Vector EdgeCoupling::grad_x(const Vector& x, const Vector& y) const {
  return model_.gradient(x) - (x - y) / eta_;
}

Vector EdgeCoupling::grad_y(const Vector& x, const Vector& y) const {
  return model_.gradient(y) + (x - y) / eta_;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// The space the reduced problems are posed on: either the full parameter
// space, or the affine slice w̄ + span(B). Coordinates are w − w̄ resp. Bᵀ(w − w̄).
class Working {
 public:
  Working(const LossModel& model, const Vector& wbar, const Subspace& sub)
      : full_(model), wbar_(wbar) {
    if (wbar.size() != model.dim()) throw ShapeError("base point has the wrong dimension");
    if (sub) {
      // Non-owning handle: the slice never outlives this object.
      ModelPtr base(std::shared_ptr<const LossModel>{}, &model);
      slice_ = std::make_unique<AffineSliceModel>(base, wbar, *sub);
    }
  }

  const LossModel& model() const { return slice_ ? *slice_ : full_; }
  const LossModel& full() const { return full_; }
  Index dim() const { return model().dim(); }

  Vector point(const Vector& x) const {  // working coords → full point
    return slice_ ? slice_->embed(x) : Vector(wbar_ + x);
  }
  Vector direction(const Vector& x) const {
    return slice_ ? Vector(slice_->basis() * x) : x;
  }
  Vector coords_dir(const Vector& v) const {  // full direction → working coords
    if (!slice_) return v;
    const Vector c = slice_->basis().transpose() * v;
    const double off = (v - slice_->basis() * c).norm();
    if (off > 1e-10 * (1.0 + v.norm())) {
      throw InvariantViolation("direction leaves the working subspace (residual " +
                               std::to_string(off) + ")");
    }
    return c;
  }
  Vector project(const Vector& v) const {
    return slice_ ? Vector(slice_->basis().transpose() * v) : v;
  }
  // Working-space coordinates of w̄ shifted to the origin: gradients and
  // Hessians are evaluated at point(x) through the slice model.
  Vector grad(const Vector& x) const {
    return slice_ ? slice_->gradient(x) : full_.gradient(wbar_ + x);
  }
  Matrix hess(const Vector& x) const {
    return slice_ ? slice_->hessian_dense(x).matrix() : full_.hessian_dense(wbar_ + x).matrix();
  }
  double value(const Vector& x) const {
    return slice_ ? slice_->value(x) : full_.value(wbar_ + x);
  }

 private:
  const LossModel& full_;
  Vector wbar_;
  std::unique_ptr<AffineSliceModel> slice_;
};

Vector sign_fixed(Vector v) {
  Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0.0) v = -v;
  return v;
}

}  // namespace

Matrix numeric_normal_basis(const LossModel& model, const Vector& w, double rel) {
  const Eigh e = dense_eigh(model.hessian_dense(w));
  const double top = e.values.cwiseAbs().maxCoeff();
  std::vector<Index> keep;
  for (Index i = 0; i < e.values.size(); ++i) {
    if (std::abs(e.values(i)) > rel * top) keep.push_back(i);
  }
  Matrix B(w.size(), static_cast<Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) B.col(static_cast<Index>(j)) = e.vectors.col(keep[j]);
  return B;
}

CriticalPoint find_critical_point(const LossModel& model, const Vector& w0,
                                  const CriticalPointOptions& opts) {
  CriticalPoint cp;
  cp.w = w0;
  for (int it = 0; it <= opts.max_iter; ++it) {
    const Vector g = model.gradient(cp.w);
    cp.grad_norm = g.norm();
    cp.history.push_back(cp.grad_norm);
    cp.iterations = it;
    if (!std::isfinite(cp.grad_norm)) break;
    const Eigh e = dense_eigh(model.hessian_dense(cp.w));
    const double top = std::max(e.values.cwiseAbs().maxCoeff(), 1e-300);
    Index null = 0;
    Vector step = Vector::Zero(cp.w.size());
    for (Index i = 0; i < e.values.size(); ++i) {
      if (std::abs(e.values(i)) <= opts.kernel_rel * top) {
        ++null;
        continue;
      }
      step -= (e.vectors.col(i).dot(g) / e.values(i)) * e.vectors.col(i);
    }
    cp.kernel_dim = null;
    if (cp.grad_norm <= opts.tol) return cp;
    if (it == opts.max_iter) break;
    cp.w += step;
  }
  throw NonConvergenceError("find_critical_point: Newton did not reach ‖∇L‖ ≤ " +
                                std::to_string(opts.tol),
                            cp.history);
}

// ---------------------------------------------------------------------------

namespace {

Vector solve_center_working(const Working& W, const Vector& a, const Vector& m0,
                            const CenterOptions& opts, double* residual) {
  NewtonOptions no;
  no.tol = opts.tol;
  no.max_iter = opts.max_iter;
  const NewtonResult r = newton_solve(
      [&](const Vector& m) { return Vector(0.5 * (W.grad(m + a) + W.grad(m - a))); },
      [&](const Vector& m) { return Matrix(0.5 * (W.hess(m + a) + W.hess(m - a))); }, m0, no);
  if (residual) *residual = 2.0 * r.residual;
  return r.x;
}

}  // namespace

CenterSolve center_solve(const LossModel& model, const Vector& wbar, const Vector& a,
                         const CenterOptions& opts) {
  const Working W(model, wbar, opts.subspace);
  Vector as = W.coords_dir(a);
  CenterSolve out;
  out.wbar = wbar;
  for (int attempt = 0;; ++attempt) {
    try {
      double res = 0.0;
      const Vector ms = solve_center_working(W, as, Vector::Zero(W.dim()), opts, &res);
      out.a = W.direction(as);
      out.m = W.point(ms);
      out.residual = res;
      out.halvings = attempt;
      if (opts.check_evenness) {
        const Vector mneg = solve_center_working(W, -as, ms, opts, nullptr);
        out.evenness_defect = (mneg - ms).norm();
      }
      return out;
    } catch (const NonConvergenceError&) {
      if (attempt >= opts.max_halvings) throw;
    } catch (const SingularityError& e) {
      if (attempt >= opts.max_halvings) {
        throw SingularityError(std::string("center_solve: ") + e.what());
      }
    }
    as *= 0.5;
  }
}

EdgeProfile edge_profile(const LossModel& model, const CenterSolve& s) {
  EdgeProfile p;
  p.value = 0.5 * (model.value(s.m + s.a) + model.value(s.m - s.a));
  p.gradient = 0.5 * (model.gradient(s.m + s.a) - model.gradient(s.m - s.a));
  return p;
}

Vector edge_profile_fd_gradient(const LossModel& model, const Vector& wbar, const Vector& a,
                                double h, const CenterOptions& opts) {
  const Working W(model, wbar, opts.subspace);
  const Vector as = W.coords_dir(a);
  CenterOptions co = opts;
  co.check_evenness = false;
  co.max_halvings = 0;
  auto P = [&](const Vector& x) {
    const CenterSolve s = center_solve(model, wbar, W.direction(x), co);
    return 0.5 * (model.value(s.m + s.a) + model.value(s.m - s.a));
  };
  Vector g(W.dim());
  for (Index i = 0; i < W.dim(); ++i) {
    Vector e = Vector::Zero(W.dim());
    e(i) = h;
    g(i) = (P(as + e) - P(as - e)) / (2.0 * h);
  }
  return W.direction(g);
}

Matrix edge_profile_hessian_fd(const LossModel& model, const Vector& wbar, double h,
                               const CenterOptions& opts) {
  const Working W(model, wbar, opts.subspace);
  CenterOptions co = opts;
  co.check_evenness = false;
  co.max_halvings = 0;
  auto gradP = [&](const Vector& x) {
    const CenterSolve s = center_solve(model, wbar, W.direction(x), co);
    return W.project(edge_profile(model, s).gradient);
  };
  const Index n = W.dim();
  Matrix Hp(n, n);
  for (Index i = 0; i < n; ++i) {
    Vector e = Vector::Zero(n);
    e(i) = h;
    Hp.col(i) = (gradP(e) - gradP(-e)) / (2.0 * h);
  }
  return 0.5 * (Hp + Hp.transpose());
}

// ---------------------------------------------------------------------------

CriticalEta critical_eta(const LossModel& model, const Vector& wbar, const Subspace& subspace) {
  const Working W(model, wbar, subspace);
  const Eigh e = dense_eigh(SymMatrix(W.hess(Vector::Zero(W.dim()))));
  CriticalEta out;
  out.spectrum = e.values;
  out.lambda_max = e.values(e.values.size() - 1);
  if (!(out.lambda_max > 0.0)) {
    throw InvariantViolation("critical_eta: λ_max ≤ 0, no stability threshold");
  }
  out.eta_c = 2.0 / out.lambda_max;
  std::vector<Index> top;
  for (Index i = 0; i < e.values.size(); ++i) {
    if (e.values(i) >= out.lambda_max - 1e-8 * out.lambda_max) top.push_back(i);
  }
  out.E_c.resize(model.dim(), static_cast<Index>(top.size()));
  for (std::size_t j = 0; j < top.size(); ++j) {
    out.E_c.col(static_cast<Index>(j)) = W.direction(e.vectors.col(top[j]));
  }
  if (top.size() == 1) out.E_c.col(0) = sign_fixed(out.E_c.col(0));
  out.simple = top.size() == 1;
  return out;
}

namespace {

// 𝒬 along the working-space vector a, with displacement step h.
double quartic_at(const Working& W, const Eigen::LDLT<Matrix>& H, const Vector& a, double h,
                  double* fourth, Vector* third) {
  const double s = h / a.norm();
  const Vector zero = Vector::Zero(W.dim());
  // ∇³L[a,a,·]: second difference of the gradient in the parameter s.
  const Vector c = (W.grad(s * a) - 2.0 * W.grad(zero) + W.grad(-s * a)) / (s * s);
  // ∇⁴L[a,a,a,a]: five-point fourth difference of the value.
  const double f2 = W.value(2 * s * a), f1 = W.value(s * a), f0 = W.value(zero),
               fm1 = W.value(-s * a), fm2 = W.value(-2 * s * a);
  const double f4 = (f2 - 4.0 * f1 + 6.0 * f0 - 4.0 * fm1 + fm2) / (s * s * s * s);
  if (fourth) *fourth = f4;
  if (third) *third = c;
  return f4 / 6.0 - 0.5 * c.dot(H.solve(c));
}

}  // namespace

QuarticJet quartic_Q(const LossModel& model, const Vector& wbar, const Vector& a,
                     const QuarticOptions& opts) {
  const Working W(model, wbar, opts.subspace);
  const Vector as = W.coords_dir(a);
  if (!(as.norm() > 0.0)) throw InvariantViolation("quartic_Q: direction must be nonzero");
  const Matrix H = W.hess(Vector::Zero(W.dim()));
  const Eigh e = dense_eigh(SymMatrix(H));
  const double top = e.values.cwiseAbs().maxCoeff();
  if (e.values.cwiseAbs().minCoeff() <= 1e-8 * top) {
    throw SingularityError(
        "quartic_Q: Hessian is singular on the working space; pass the normal-space basis "
        "as the subspace");
  }
  const Eigen::LDLT<Matrix> ldlt(H);
  const double h = opts.step.value_or(default_fd_step(4, wbar.norm()));
  QuarticJet q;
  q.direction = a;
  q.Q_coarse = quartic_at(W, ldlt, as, h, nullptr, nullptr);
  q.Q_fine = quartic_at(W, ldlt, as, 0.5 * h, &q.fourth, &q.third);
  q.Q = (4.0 * q.Q_fine - q.Q_coarse) / 3.0;
  q.consistency = std::abs(q.Q_coarse - q.Q_fine) / std::max(std::abs(q.Q), 1e-300);
  q.consistent = q.consistency <= opts.rel_consistency;
  q.eta_c = 2.0 / e.values(e.values.size() - 1);
  return q;
}

BranchPrediction branch_predict(double eta, double eta_c, double Q) {
  if (Q == 0.0) {
    throw DegenerateBranchError("branch_predict: 𝒬(u) = 0, leading-order branch undetermined");
  }
  BranchPrediction p;
  p.alpha_sq = (2.0 / eta - 2.0 / eta_c) / Q;
  p.exists = p.alpha_sq > 0.0;
  return p;
}

// ---------------------------------------------------------------------------

BranchPoint period_two_solve(const LossModel& model, const Vector& wbar, double eta,
                             const Vector& a0, const PeriodTwoOptions& opts) {
  CenterOptions co;
  co.subspace = opts.subspace;
  co.check_evenness = false;
  co.max_halvings = 0;
  Vector m0 = wbar;
  try {
    m0 = center_solve(model, wbar, a0, co).m;
  } catch (const Error&) {
    // Fall back to the base point; the joint Newton solve corrects m.
  }
  return period_two_solve(model, wbar, eta, m0, a0, opts);
}

BranchPoint period_two_solve(const LossModel& model, const Vector& wbar, double eta,
                             const Vector& m0, const Vector& a0, const PeriodTwoOptions& opts) {
  if (!(eta > 0.0)) throw InvariantViolation("period_two_solve: η must be positive");
  const Working W(model, wbar, opts.subspace);
  const Index n = W.dim();
  const double k2 = 2.0 / eta;
  Vector x0(2 * n);
  x0.head(n) = W.coords_dir(m0 - wbar);
  x0.tail(n) = W.coords_dir(a0);

  auto F = [&](const Vector& x) {
    const Vector m = x.head(n), a = x.tail(n);
    const Vector gp = W.grad(m + a), gm = W.grad(m - a);
    Vector out(2 * n);
    out.head(n) = 0.5 * (gp + gm);
    out.tail(n) = 0.5 * (gp - gm) - k2 * a;
    return out;
  };
  auto J = [&](const Vector& x) {
    const Vector m = x.head(n), a = x.tail(n);
    const Matrix Hp = W.hess(m + a), Hm = W.hess(m - a);
    Matrix out(2 * n, 2 * n);
    const Matrix S = 0.5 * (Hp + Hm), D = 0.5 * (Hp - Hm);
    out.topLeftCorner(n, n) = S;
    out.topRightCorner(n, n) = D;
    out.bottomLeftCorner(n, n) = D;
    out.bottomRightCorner(n, n) = S - k2 * Matrix::Identity(n, n);
    return out;
  };
  NewtonOptions no;
  no.tol = opts.tol;
  no.max_iter = opts.max_iter;
  no.polish = 3;
  const NewtonResult r = newton_solve(F, J, x0, no);

  const Vector ms = r.x.head(n), as = r.x.tail(n);
  const Vector Fx = F(r.x);
  BranchPoint bp;
  bp.eta = eta;
  bp.iterations = r.iterations;
  bp.a = W.direction(as);
  bp.m = W.point(ms);
  bp.amplitude = as.norm();
  bp.residual = Fx.tail(n).norm();
  bp.center_residual = 2.0 * Fx.head(n).norm();
  bp.profile = 0.5 * (W.value(ms + as) + W.value(ms - as));
  bp.trivial = bp.amplitude < opts.trivial_threshold;
  if (!bp.trivial) {
    // At a resolved nonzero root the next Newton correction is negligible
    // next to ‖a‖. At η = η_c the root a = 0 is degenerate and Newton only
    // creeps toward it, leaving a correction comparable to ‖a‖ itself.
    const Vector step = J(r.x).fullPivLu().solve(Fx);
    const double da = step.tail(n).norm();
    bp.trivial = !std::isfinite(da) || da > 0.1 * bp.amplitude;
  }

  // Raw two-step return of plain GD in the full parameter space.
  const LossModel& full = W.full();
  const Vector x = bp.m - bp.a;
  const Vector y = x - eta * full.gradient(x);
  const Vector x2 = y - eta * full.gradient(y);
  bp.raw_return = (x2 - x).norm() / (1.0 + x.norm());
  bp.raw_ok = bp.raw_return <= opts.raw_tol;
  return bp;
}

// ---------------------------------------------------------------------------

namespace {

bool acceptable(const BranchPoint& bp, const PeriodTwoOptions& o) {
  return !bp.trivial && bp.raw_ok && bp.residual <= 1e3 * o.tol;
}

std::optional<BranchPoint> try_solve(const LossModel& model, const Vector& wbar, double eta,
                                     const Vector& m0, const Vector& a0,
                                     const PeriodTwoOptions& o) {
  try {
    BranchPoint bp = period_two_solve(model, wbar, eta, m0, a0, o);
    if (acceptable(bp, o)) return bp;
  } catch (const Error&) {
  }
  return std::nullopt;
}

double fit_exponent(const std::vector<BranchPoint>& pts, double eta_c) {
  std::vector<double> x, y;
  for (const auto& p : pts) {
    const double dx = std::abs(p.eta - eta_c);
    if (!p.trivial && std::isfinite(p.amplitude) && p.amplitude > 0.0 && dx > 0.0) {
      x.push_back(dx);
      y.push_back(p.amplitude);
    }
  }
  return x.size() >= 2 ? fit_loglog_slope(x, y) : kNaN;
}

}  // namespace

BranchSweep branch_sweep(const LossModel& model, const Vector& wbar,
                         const std::vector<double>& eta_grid, const SweepOptions& opts) {
  BranchSweep out;
  PeriodTwoOptions so = opts.solve;
  if (!so.subspace && model.dim() <= kDenseDimLimit) {
    // A Hessian kernel at w̄ (Morse–Bott minimum) makes the reduction singular
    // in the full space, so fall back to the numerical normal space.
    Matrix B = numeric_normal_basis(model, wbar);
    if (B.cols() < model.dim()) so.subspace = std::move(B);
  }
  const CriticalEta ce = critical_eta(model, wbar, so.subspace);
  if (!ce.simple) {
    throw DegenerateBranchError("branch_sweep: top eigenvalue has multiplicity " +
                                std::to_string(ce.E_c.cols()) + "; only simple λ_max is supported");
  }
  out.eta_c = ce.eta_c;
  out.u_c = ce.E_c.col(0);
  QuarticOptions qo;
  qo.subspace = so.subspace;
  out.Q = quartic_Q(model, wbar, out.u_c, qo).Q;

  if (opts.mode == SweepMode::Empirical) {
    std::vector<BranchPoint> pts(eta_grid.size());
    parallel_for(static_cast<std::ptrdiff_t>(eta_grid.size()), [&](std::ptrdiff_t i) {
      const double eta = eta_grid[static_cast<std::size_t>(i)];
      BranchPoint& bp = pts[static_cast<std::size_t>(i)];
      bp.eta = eta;
      const TrajectoryLog log = run_gd(model, wbar + opts.kick * out.u_c, eta, opts.steps);
      if (log.diverged) {
        bp.amplitude = kNaN;
        bp.residual = kNaN;
        return;
      }
      const Index K = log.num_steps();
      const Index k0 = static_cast<Index>(std::floor(opts.discard * static_cast<double>(K)));
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (Index k = k0; k <= K; ++k) {
        const double p = out.u_c.dot(log.iterate(k) - wbar);
        lo = std::min(lo, p);
        hi = std::max(hi, p);
      }
      bp.amplitude = 0.5 * (hi - lo);
      bp.a = bp.amplitude * out.u_c;
      bp.m = wbar + 0.5 * (hi + lo) * out.u_c;
      bp.residual = kNaN;
      bp.profile = 0.5 * (model.value(bp.m + bp.a) + model.value(bp.m - bp.a));
      const Vector wK = log.iterate(K);
      bp.raw_return = (wK - log.iterate(K - 2)).norm() / (1.0 + wK.norm());
      bp.raw_ok = true;
      bp.trivial = bp.amplitude < so.trivial_threshold;
    });
    for (auto& p : pts) {
      out.points.push_back(std::move(p));
      out.modes.emplace_back("empirical");
    }
    out.exponent = fit_exponent(out.points, out.eta_c);
    return out;
  }

  std::optional<BranchPoint> prev;
  for (double eta : eta_grid) {
    std::optional<BranchPoint> got;
    if (!prev) {
      const BranchPrediction pred = branch_predict(eta, out.eta_c, out.Q);
      if (!pred.exists) continue;  // wrong side of η_c: no nontrivial branch here
      const Vector a0 = std::sqrt(pred.alpha_sq) * out.u_c;
      try {
        BranchPoint bp = period_two_solve(model, wbar, eta, a0, so);
        if (acceptable(bp, so)) got = bp;
      } catch (const Error&) {
      }
    } else {
      // Predictor: rescale the previous amplitude by the leading-order law,
      // and reject a corrector that lands on a different orbit.
      const auto step = [&](const BranchPoint& from, double to) -> std::optional<BranchPoint> {
        const BranchPrediction p0 = branch_predict(from.eta, out.eta_c, out.Q);
        const BranchPrediction p1 = branch_predict(to, out.eta_c, out.Q);
        const double scale = p0.exists && p1.exists ? std::sqrt(p1.alpha_sq / p0.alpha_sq) : 1.0;
        const Vector a0 = scale * from.a;
        auto bp = try_solve(model, wbar, to, from.m, a0, so);
        if (bp && std::abs(bp->amplitude - a0.norm()) > 0.5 * a0.norm()) bp.reset();
        return bp;
      };
      got = step(*prev, eta);
      if (!got) {
        // One bisection of the η step before declaring the branch lost.
        if (auto half = step(*prev, 0.5 * (prev->eta + eta))) got = step(*half, eta);
      }
    }
    if (!got) {
      out.branch_lost = true;
      out.lost_at = eta;
      break;
    }
    out.points.push_back(*got);
    out.modes.emplace_back("continuation");
    prev = got;
  }
  out.exponent = fit_exponent(out.points, out.eta_c);
  return out;
}

CouplingHessianForms edge_coupling_hessian(const LossModel& model, const Vector& wbar, double eta,
                                           const Vector& u) {
  if (std::abs(u.norm() - 1.0) > 1e-10) throw InvariantViolation("edge_coupling_hessian: u must be unit");
  const Matrix H = model.hessian_dense(wbar).matrix();
  const Index n = H.rows();
  CouplingHessianForms f;
  f.diag_form = 2.0 * u.dot(H * u);
  f.antidiag_form = 2.0 * (u.dot(H * u) - (2.0 / eta) * u.squaredNorm());
  const Matrix I = Matrix::Identity(n, n);
  f.block.resize(2 * n, 2 * n);
  f.block.topLeftCorner(n, n) = H - I / eta;
  f.block.topRightCorner(n, n) = I / eta;
  f.block.bottomLeftCorner(n, n) = I / eta;
  f.block.bottomRightCorner(n, n) = H - I / eta;
  Vector uu(2 * n), um(2 * n);
  uu << u, u;
  um << u, -u;
  f.block_diag = uu.dot(f.block * uu);
  f.block_antidiag = um.dot(f.block * um);
  return f;
}

}  // namespace edgelab
