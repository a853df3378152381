#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <utility>

#include "bilevel/errors.hpp"
#include "bilevel/vec.hpp"

namespace bilevel {

/// Gradient (and optional value) evaluator of a convex C^1 function.
/// Evaluation must be pure: repeated calls at the same point return the
/// same output.
struct SmoothOracle {
  int dim = 0;
  std::function<void(const Vec& x, Vec& grad)> grad;
  std::function<double(const Vec& x)> value;  // may be empty

  bool has_value() const { return static_cast<bool>(value); }
  bool is_zero = false;  // structure flag: the zero function
};

/// Proximal-map evaluator of a proper closed convex function.
struct ProxOracle {
  int dim = 0;
  std::function<void(double t, const Vec& u, Vec& out)> prox;
  std::function<double(const Vec& x)> value;  // extended-real; may be empty

  bool has_value() const { return static_cast<bool>(value); }

  // Structure flags consumed by composite-prox strategies and by the
  // applicability filters of the baseline methods.
  bool is_zero = false;                 // g == 0
  bool is_indicator = false;            // value in {0, +inf}; prox = projection
  std::optional<double> quad_coeff;     // set when g = (c/2)||.||^2
};

// ---------------------------------------------------------------------------
// Closed-form proximal maps.

/// Soft thresholding: prox of t*||.||_1.
inline void prox_l1(double t, const Vec& u, Vec& out) {
  out.resize(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = std::abs(u[i]) - t;
    out[i] = a > 0.0 ? (u[i] > 0.0 ? a : -a) : 0.0;
  }
}

inline Vec prox_l1(double t, const Vec& u) {
  Vec out;
  prox_l1(t, u, out);
  return out;
}

/// Prox of t*(1/2)||.||^2, i.e. scaling by 1/(1+t). (t = 0 is the identity.)
inline void prox_sqnorm(double t, const Vec& u, Vec& out) {
  out.resize(u.size());
  const double s = 1.0 / (1.0 + t);
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = s * u[i];
}

inline Vec prox_sqnorm(double t, const Vec& u) {
  Vec out;
  prox_sqnorm(t, u, out);
  return out;
}

/// Projection onto the nonnegative orthant (independent of t).
inline void prox_indicator_nonneg(double /*t*/, const Vec& u, Vec& out) {
  out.resize(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = std::max(u[i], 0.0);
}

inline Vec prox_indicator_nonneg(double t, const Vec& u) {
  Vec out;
  prox_indicator_nonneg(t, u, out);
  return out;
}

// ---------------------------------------------------------------------------
// Oracle factories for the functions used by the experiment problems.

inline SmoothOracle zero_smooth(int dim) {
  SmoothOracle f;
  f.dim = dim;
  f.is_zero = true;
  f.grad = [](const Vec& x, Vec& g) { g.assign(x.size(), 0.0); };
  f.value = [](const Vec&) { return 0.0; };
  return f;
}

inline ProxOracle zero_prox(int dim) {
  ProxOracle g;
  g.dim = dim;
  g.is_zero = true;
  g.is_indicator = true;  // indicator of the whole space
  g.prox = [](double, const Vec& u, Vec& out) { out = u; };
  g.value = [](const Vec&) { return 0.0; };
  return g;
}

inline ProxOracle l1_prox(int dim) {
  ProxOracle g;
  g.dim = dim;
  g.prox = [](double t, const Vec& u, Vec& out) { prox_l1(t, u, out); };
  g.value = [](const Vec& x) { return norm1(x); };
  return g;
}

/// g = (c/2)||.||^2 with prox u / (1 + t c).
inline ProxOracle sqnorm_prox(int dim, double c = 1.0) {
  ProxOracle g;
  g.dim = dim;
  g.quad_coeff = c;
  g.prox = [c](double t, const Vec& u, Vec& out) {
    out.resize(u.size());
    const double s = 1.0 / (1.0 + t * c);
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = s * u[i];
  };
  g.value = [c](const Vec& x) { return 0.5 * c * dot(x, x); };
  return g;
}

inline ProxOracle nonneg_prox(int dim) {
  ProxOracle g;
  g.dim = dim;
  g.is_indicator = true;
  g.prox = [](double t, const Vec& u, Vec& out) {
    prox_indicator_nonneg(t, u, out);
  };
  g.value = [](const Vec& x) {
    for (double v : x)
      if (v < 0.0) return std::numeric_limits<double>::infinity();
    return 0.0;
  };
  return g;
}

// ---------------------------------------------------------------------------
// Composite prox of the penalized nonsmooth term  g_k = sigma*g1 + g2.
//
// Prox-friendliness is not preserved by sums, so the caller must declare
// which structure makes the composite prox available. Evaluating with the
// wrong declaration silently corrupts a solver run; the strategy therefore
// validates its structure flags and throws StrategyMismatch.

struct CompositeProxStrategy {
  enum class Kind { g1_zero, g2_zero, g1_quadratic_scaling, custom };

  Kind kind = Kind::g1_zero;
  double c = 1.0;  // g1 = (c/2)||.||^2 for g1_quadratic_scaling
  std::function<void(double t, double sigma, const Vec& u, Vec& out)> custom;

  static CompositeProxStrategy G1Zero() { return {Kind::g1_zero, 1.0, {}}; }
  static CompositeProxStrategy G2Zero() { return {Kind::g2_zero, 1.0, {}}; }
  static CompositeProxStrategy G1QuadraticScaling(double c) {
    return {Kind::g1_quadratic_scaling, c, {}};
  }
  static CompositeProxStrategy Custom(
      std::function<void(double, double, const Vec&, Vec&)> fn) {
    return {Kind::custom, 1.0, std::move(fn)};
  }
};

/// Exact prox of t*(sigma*g1 + g2) at u under the declared structure.
inline void composite_prox(const CompositeProxStrategy& strategy,
                           const ProxOracle& g1, const ProxOracle& g2,
                           double t, double sigma, const Vec& u, Vec& out) {
  using Kind = CompositeProxStrategy::Kind;
  switch (strategy.kind) {
    case Kind::g1_zero:
      if (!g1.is_zero) throw StrategyMismatch("G1Zero requires g1 == 0");
      g2.prox(t, u, out);
      return;
    case Kind::g2_zero:
      if (!g2.is_zero) throw StrategyMismatch("G2Zero requires g2 == 0");
      if (sigma == 0.0) {
        out = u;  // prox of the zero function
      } else {
        g1.prox(t * sigma, u, out);
      }
      return;
    case Kind::g1_quadratic_scaling: {
      if (!g1.quad_coeff || *g1.quad_coeff != strategy.c)
        throw StrategyMismatch(
            "G1QuadraticScaling requires g1 = (c/2)||.||^2 with matching c");
      // prox_{t(sigma*(c/2)||.||^2 + g2)}(u) = prox_{t/(1+t sigma c) g2}(u/(1+t sigma c)).
      // At sigma = 0 the scale is exactly 1 and this falls through to the raw
      // g2 prox.
      const double s = 1.0 + t * sigma * strategy.c;
      if (s == 1.0) {
        g2.prox(t, u, out);
        return;
      }
      Vec scaled(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) scaled[i] = u[i] / s;
      g2.prox(t / s, scaled, out);
      return;
    }
    case Kind::custom:
      if (!strategy.custom) throw StrategyMismatch("Custom strategy is empty");
      strategy.custom(t, sigma, u, out);
      return;
  }
}

inline Vec composite_prox(const CompositeProxStrategy& strategy,
                          const ProxOracle& g1, const ProxOracle& g2, double t,
                          double sigma, const Vec& u) {
  Vec out;
  composite_prox(strategy, g1, g2, t, sigma, u, out);
  return out;
}

}  // namespace bilevel
