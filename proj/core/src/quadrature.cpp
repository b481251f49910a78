#include "edgelab/quadrature.hpp"

#include <algorithm>
#include <numeric>

namespace edgelab {

QuadratureRule gauss_jacobi_unit(int order, double alpha, double beta) {
  if (order < 1) {
    throw ShapeError("quadrature order must be positive");
  }
  // Monic Jacobi recurrence on [-1,1] for (1-x)^alpha (1+x)^beta.
  const int n = order;
  Vector diag(n);
  Vector sub(std::max(n - 1, 0));
  const double ab = alpha + beta;
  for (int k = 0; k < n; ++k) {
    const double s = 2.0 * k + ab;
    if (k == 0) {
      diag(k) = (beta - alpha) / (ab + 2.0);
    } else {
      diag(k) = (beta * beta - alpha * alpha) / (s * (s + 2.0));
    }
  }
  for (int k = 1; k < n; ++k) {
    const double s = 2.0 * k + ab;
    double b = 4.0 * k * (k + alpha) * (k + beta) * (k + ab) /
               (s * s * (s + 1.0) * (s - 1.0));
    if (k == 1 && std::abs(ab + 1.0) < 1e-300) {
      b = 4.0 * (1.0 + alpha) * (1.0 + beta) / ((ab + 2.0) * (ab + 2.0) * (ab + 3.0));
    }
    sub(k - 1) = std::sqrt(b);
  }
  Matrix J = Matrix::Zero(n, n);
  J.diagonal() = diag;
  for (int k = 0; k + 1 < n; ++k) {
    J(k, k + 1) = sub(k);
    J(k + 1, k) = sub(k);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(J);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = 0.5 * (1.0 + es.eigenvalues()(i));
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[i] = v0 * v0;
  }
  const double total = std::accumulate(rule.weights.begin(), rule.weights.end(), 0.0);
  for (double& w : rule.weights) {
    w /= total;
  }
  return rule;
}

QuadratureRule gauss_uniform(int order) {
  QuadratureRule r = gauss_jacobi_unit(order, 0.0, 0.0);
  r.weight = Weight::Uniform;
  return r;
}

QuadratureRule gauss_triangular(int order) {
  QuadratureRule r = gauss_jacobi_unit(order, 1.0, 0.0);
  r.weight = Weight::Triangular;
  return r;
}

double integrate_uniform(const std::function<double(double)>& f,
                         const QuadratureRule& rule) {
  if (rule.weight != Weight::Uniform) {
    throw InvariantViolation("integrate_uniform needs a uniform-weight rule");
  }
  return integrate(f, rule);
}

double integrate_triangular(const std::function<double(double)>& f,
                            const QuadratureRule& rule) {
  if (rule.weight != Weight::Triangular) {
    throw InvariantViolation("integrate_triangular needs a triangular-weight rule");
  }
  return integrate(f, rule);
}

}  // namespace edgelab
