#include "edgelab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "edgelab/errors.hpp"

namespace edgelab {

void require_finite(const Vector& v, std::string_view what) {
  if (!v.allFinite()) {
    throw EvaluationError(std::string(what) + ": non-finite entry");
  }
}

SymMatrix::SymMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) {
    throw ShapeError("SymMatrix: matrix is not square");
  }
  if (!m_.allFinite()) {
    throw EvaluationError("SymMatrix: non-finite entry");
  }
  if (m_.size() > 0) {
    const double scale = m_.cwiseAbs().maxCoeff();
    const double asym = (m_ - m_.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale) {
      throw InvariantViolation("SymMatrix: asymmetry " + std::to_string(asym) +
                               " exceeds 1e-12 of max entry");
    }
    m_ = 0.5 * (m_ + m_.transpose()).eval();
  }
}

SymMatrix SymMatrix::identity(Index n) { return SymMatrix(Matrix::Identity(n, n)); }

SymMatrix SymMatrix::diagonal(const Vector& diag) {
  return SymMatrix(Matrix(diag.asDiagonal()));
}

// ---------------------------------------------------------------------------

double brent_root(const std::function<double(double)>& f, double lo, double hi,
                  double tol) {
  if (!(lo < hi)) {
    throw BracketError("brent_root: need lo < hi");
  }
  double a = lo;
  double b = hi;
  double fa = f(a);
  double fb = f(b);
  if (!std::isfinite(fa) || !std::isfinite(fb)) {
    throw EvaluationError("brent_root: non-finite value at bracket end");
  }
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if (fa * fb > 0.0) {
    throw BracketError("brent_root: no sign change on [" + std::to_string(lo) +
                       ", " + std::to_string(hi) + "]");
  }
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double c = a;
  double fc = fa;
  double d = b - a;
  double e = d;
  for (int iter = 0; iter < 200; ++iter) {
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    const double tol1 = 2.0 * eps * std::abs(b) + 0.5 * tol;
    const double xm = 0.5 * (c - b);
    if (std::abs(xm) <= tol1 || fb == 0.0 || std::abs(fb) <= tol) {
      return b;
    }
    if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
      double p, q, r;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        q = fa / fc;
        r = fb / fc;
        p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
        q = (q - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::abs(p);
      const double min1 = 3.0 * xm * q - std::abs(tol1 * q);
      const double min2 = std::abs(e * q);
      if (2.0 * p < std::min(min1, min2)) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    b += std::abs(d) > tol1 ? d : (xm > 0.0 ? tol1 : -tol1);
    fb = f(b);
    if (!std::isfinite(fb)) {
      throw EvaluationError("brent_root: non-finite value at x=" + std::to_string(b));
    }
  }
  return b;
}

NewtonResult newton_solve(const VectorField& F, const JacobianField& J,
                          Vector x0, const NewtonOptions& opts) {
  NewtonResult out;
  out.x = std::move(x0);
  Vector r = F(out.x);
  out.residual = r.norm();
  out.history.push_back(out.residual);
  for (int it = 0; it < opts.max_iter; ++it) {
    if (!std::isfinite(out.residual)) {
      throw NonConvergenceError("newton_solve: non-finite residual", out.history);
    }
    if (out.residual <= opts.tol) {
      out.iterations = it;
      for (int p = 0; p < opts.polish; ++p) {
        const Vector dx = J(out.x).partialPivLu().solve(r);
        if (!dx.allFinite() || dx.norm() <= 1e-16 * out.x.norm()) break;
        Vector x1 = out.x - dx;
        Vector r1 = F(x1);
        const double res1 = r1.norm();
        if (!(res1 <= out.residual)) break;
        out.x = std::move(x1);
        r = std::move(r1);
        out.residual = res1;
      }
      return out;
    }
    const Matrix Jx = J(out.x);
    Eigen::PartialPivLU<Matrix> lu(Jx);
    const double rcond = lu.rcond();
    if (!(rcond * opts.max_condition > 1.0)) {
      throw SingularityError("newton_solve: Jacobian condition estimate " +
                             std::to_string(1.0 / rcond) + " exceeds limit");
    }
    out.x -= lu.solve(r);
    r = F(out.x);
    out.residual = r.norm();
    out.history.push_back(out.residual);
  }
  if (out.residual <= opts.tol) {
    out.iterations = opts.max_iter;
    return out;
  }
  throw NonConvergenceError("newton_solve: max_iter exceeded, residual " +
                                std::to_string(out.residual),
                            out.history);
}

// ---------------------------------------------------------------------------

Eigh dense_eigh(const SymMatrix& A) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(A.matrix());
  if (es.info() != Eigen::Success) {
    throw NonConvergenceError("dense_eigh: eigensolver failed", {});
  }
  return {es.eigenvalues(), es.eigenvectors()};
}

std::pair<double, double> gershgorin_bounds(const SymMatrix& A) {
  const Matrix& m = A.matrix();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Index i = 0; i < m.rows(); ++i) {
    const double radius = m.row(i).cwiseAbs().sum() - std::abs(m(i, i));
    lo = std::min(lo, m(i, i) - radius);
    hi = std::max(hi, m(i, i) + radius);
  }
  return {lo, hi};
}

LanczosResult lambda_max_lanczos(const LinearOperator& hvp, Index dim,
                                 const LanczosOptions& opts) {
  if (dim <= 0) {
    throw ShapeError("lambda_max_lanczos: dimension must be positive");
  }
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_unit = [&] {
    Vector v(dim);
    for (Index i = 0; i < dim; ++i) v(i) = normal(rng);
    return Vector(v / v.norm());
  };

  if (opts.check_symmetry && dim > 1) {
    const Vector u = random_unit();
    const Vector v = random_unit();
    const Vector Au = hvp(u);
    const Vector Av = hvp(v);
    const double scale = Au.norm() + Av.norm();
    if (std::abs(u.dot(Av) - v.dot(Au)) > 1e-8 * std::max(scale, 1e-300)) {
      throw InvariantViolation("lambda_max_lanczos: operator is not symmetric");
    }
  }

  Vector q = random_unit();
  if (opts.start && opts.start->size() == dim && opts.start->norm() > 0.0) {
    q = *opts.start / opts.start->norm();
  }

  const int m = static_cast<int>(std::min<Index>(opts.max_iter, dim));
  Matrix Q(dim, m);
  std::vector<double> alpha;
  std::vector<double> beta;
  LanczosResult out;
  double scale = 0.0;

  for (int j = 0; j < m; ++j) {
    Q.col(j) = q;
    Vector v = hvp(q);
    const double a = q.dot(v);
    alpha.push_back(a);
    // Full reorthogonalization, applied twice.
    for (int pass = 0; pass < 2; ++pass) {
      v -= Q.leftCols(j + 1) * (Q.leftCols(j + 1).transpose() * v);
    }
    const double b = v.norm();

    const int n = j + 1;
    Matrix T = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) T(i, i) = alpha[i];
    for (int i = 0; i + 1 < n; ++i) T(i, i + 1) = T(i + 1, i) = beta[i];
    Eigen::SelfAdjointEigenSolver<Matrix> es(T);
    const double theta = es.eigenvalues()(n - 1);
    const Vector s = es.eigenvectors().col(n - 1);
    scale = std::max({scale, std::abs(es.eigenvalues()(0)), std::abs(theta)});
    out.ritz_history.push_back(theta);
    out.lambda_max = theta;
    out.residual = b * std::abs(s(n - 1));
    out.iterations = n;

    if (n == dim ||
        (b > 1e-14 * std::max(scale, 1e-300) &&
         out.residual <= opts.tol * std::max(scale, 1e-300))) {
      out.eigenvector = Q.leftCols(n) * s;
      return out;
    }
    if (b <= 1e-14 * std::max(scale, 1e-300)) {
      // Invariant subspace: restart in its orthogonal complement so the
      // remaining spectrum is still explored.
      Vector r = random_unit();
      for (int pass = 0; pass < 2; ++pass) {
        r -= Q.leftCols(n) * (Q.leftCols(n).transpose() * r);
      }
      beta.push_back(0.0);
      q = r / r.norm();
    } else {
      beta.push_back(b);
      q = v / b;
    }
  }
  throw NonConvergenceError("lambda_max_lanczos: no convergence in " +
                                std::to_string(m) + " iterations",
                            out.ritz_history);
}

// ---------------------------------------------------------------------------

double default_fd_step(int order, double wnorm) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  return std::pow(eps, 1.0 / (order + 2)) * (1.0 + wnorm);
}

FdEstimate fd_directional_estimate(const ScalarField& f, const Vector& w,
                                   const Vector& u, int order,
                                   std::optional<double> step) {
  if (order < 1 || order > 4) {
    throw InvariantViolation("fd_directional: order must be in {1,2,3,4}");
  }
  if (std::abs(u.norm() - 1.0) > 1e-10) {
    throw InvariantViolation("fd_directional: direction must have unit norm");
  }
  const double h = step.value_or(default_fd_step(order, w.norm()));
  if (!(h > 0.0)) {
    throw InvariantViolation("fd_directional: step must be positive");
  }
  auto at = [&](double t) { return f(w + t * u); };

  std::vector<double> vals;
  FdEstimate out;
  out.step = h;
  switch (order) {
    case 1: {
      const double fp = at(h), fm = at(-h);
      vals = {fp, fm};
      out.value = (fp - fm) / (2.0 * h);
      break;
    }
    case 2: {
      const double fp = at(h), f0 = at(0.0), fm = at(-h);
      vals = {fp, f0, fm};
      out.value = (fp - 2.0 * f0 + fm) / (h * h);
      break;
    }
    case 3: {
      const double f2 = at(2 * h), f1 = at(h), fm1 = at(-h), fm2 = at(-2 * h);
      vals = {f2, f1, fm1, fm2};
      out.value = (f2 - 2.0 * f1 + 2.0 * fm1 - fm2) / (2.0 * h * h * h);
      break;
    }
    default: {
      const double f2 = at(2 * h), f1 = at(h), f0 = at(0.0), fm1 = at(-h),
                   fm2 = at(-2 * h);
      vals = {f2, f1, f0, fm1, fm2};
      out.value = (f2 - 4.0 * f1 + 6.0 * f0 - 4.0 * fm1 + fm2) / (h * h * h * h);
      break;
    }
  }
  double lo = vals.front(), hi = vals.front(), mag = 0.0;
  for (double v : vals) {
    if (!std::isfinite(v)) {
      throw EvaluationError("fd_directional: non-finite function value");
    }
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    mag = std::max(mag, std::abs(v));
  }
  out.cancellation_warning =
      (hi - lo) < 1e3 * std::numeric_limits<double>::epsilon() * mag;
  return out;
}

Vector fd_second_directional(const VectorField& G, const Vector& w,
                             const Vector& u, double step) {
  return (G(w + step * u) - 2.0 * G(w) + G(w - step * u)) / (step * step);
}

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ShapeError("fit_loglog_slope: need at least two matching points");
  }
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) {
      throw InvariantViolation("fit_loglog_slope: values must be positive");
    }
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace edgelab
