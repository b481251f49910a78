#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "edgelab/errors.hpp"
#include "edgelab/numerics.hpp"

namespace edgelab {

/// Weight function on [0,1] that a rule integrates against.
enum class Weight {
  Uniform,     // w(τ) = 1
  Triangular,  // w(τ) = 2(1 − τ); total mass 1
};

/// Gauss rule on [0,1] for a fixed weight. Weights sum to 1; an order-n rule
/// integrates polynomials of degree ≤ 2n − 1 exactly against its weight.
struct QuadratureRule {
  Weight weight = Weight::Uniform;
  std::vector<double> nodes;
  std::vector<double> weights;

  int order() const noexcept { return static_cast<int>(nodes.size()); }
};

/// Gauss–Jacobi rule on [0,1] via Golub–Welsch for weight (1−τ)^α τ^β,
/// normalized to unit mass.
QuadratureRule gauss_jacobi_unit(int order, double alpha, double beta);

/// Gauss–Legendre mapped to [0,1].
QuadratureRule gauss_uniform(int order);

/// Gauss–Jacobi for 2(1−τ) on [0,1].
QuadratureRule gauss_triangular(int order);

inline constexpr int kDefaultQuadratureOrder = 4;

inline QuadratureRule default_rule(Weight w) {
  return w == Weight::Uniform ? gauss_uniform(kDefaultQuadratureOrder)
                              : gauss_triangular(kDefaultQuadratureOrder);
}

namespace detail {

inline bool all_finite(double x) { return std::isfinite(x); }
template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& x) {
  return x.allFinite();
}

template <typename T>
double magnitude(const T& x) {
  if constexpr (std::is_arithmetic_v<T>) {
    return std::abs(x);
  } else {
    return x.cwiseAbs().maxCoeff();
  }
}

template <typename T>
T zero_like(const T& x) {
  if constexpr (std::is_arithmetic_v<T>) {
    return T{0};
  } else {
    return T::Zero(x.rows(), x.cols());
  }
}

}  // namespace detail

/// Σ wᵢ f(τᵢ). T may be double, Vector or Matrix.
template <typename F>
auto integrate(const F& f, const QuadratureRule& rule) {
  using T = std::decay_t<decltype(f(0.0))>;
  T acc{};
  for (int i = 0; i < rule.order(); ++i) {
    const T v = f(rule.nodes[i]);
    if (!detail::all_finite(v)) {
      throw EvaluationError("non-finite integrand at node tau=" +
                            std::to_string(rule.nodes[i]));
    }
    if (i == 0) {
      acc = detail::zero_like(v);
    }
    acc += rule.weights[i] * v;
  }
  return acc;
}

double integrate_uniform(const std::function<double(double)>& f,
                         const QuadratureRule& rule);
double integrate_triangular(const std::function<double(double)>& f,
                            const QuadratureRule& rule);

/// Either a fixed Gauss rule or adaptive composite refinement.
struct QuadratureOptions {
  int order = kDefaultQuadratureOrder;
  bool adaptive = false;
  double rel_tol = 1e-12;
  double abs_tol = 1e-300;
  int max_panels = 256;
  int panel_order = 8;
};

/// Integral of f against `weight` on [0,1]. In adaptive mode the number of
/// equal Gauss–Legendre panels doubles until successive estimates agree to
/// rel_tol (the weight is folded into the integrand there).
template <typename F>
auto integrate_weighted(const F& f, Weight weight,
                        const QuadratureOptions& opts) {
  using T = std::decay_t<decltype(f(0.0))>;
  if (!opts.adaptive) {
    return integrate(f, weight == Weight::Uniform ? gauss_uniform(opts.order)
                                                  : gauss_triangular(opts.order));
  }
  const QuadratureRule base = gauss_uniform(opts.panel_order);
  auto composite = [&](int panels) {
    T acc{};
    bool first = true;
    const double width = 1.0 / panels;
    for (int p = 0; p < panels; ++p) {
      for (int i = 0; i < base.order(); ++i) {
        const double tau = (p + base.nodes[i]) * width;
        const double wt = weight == Weight::Uniform ? 1.0 : 2.0 * (1.0 - tau);
        T v = f(tau);
        if (!detail::all_finite(v)) {
          throw EvaluationError("non-finite integrand at tau=" +
                                std::to_string(tau));
        }
        if (first) {
          acc = detail::zero_like(v);
          first = false;
        }
        acc += (base.weights[i] * width * wt) * v;
      }
    }
    return acc;
  };
  int panels = 1;
  T prev = composite(panels);
  while (panels < opts.max_panels) {
    panels *= 2;
    T next = composite(panels);
    const double diff = detail::magnitude(T(next - prev));
    if (diff <= opts.rel_tol * detail::magnitude(next) || diff <= opts.abs_tol) {
      return next;
    }
    prev = std::move(next);
  }
  return prev;
}

}  // namespace edgelab
