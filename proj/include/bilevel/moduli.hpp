#pragma once

#include <algorithm>
#include <cmath>

#include "bilevel/errors.hpp"
#include "bilevel/vec.hpp"

namespace bilevel {

/// Local curvature estimates of f_sigma = sigma*f1 + f2 between two iterates:
///   l  : Lipschitz estimate  <d grad, d x> / ||d x||^2
///   c  : inverse cocoercivity ||d grad||^2 / <d grad, d x>
///   l1, l2 : the Lipschitz estimates of f1 and f2 alone.
/// For convex smooth f one has 0 <= l <= c, and l = sigma*l1 + l2.
struct LocalModuli {
  double l = 0.0;
  double c = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
};

namespace detail {
constexpr double kEpsStepRel = 1e-14;   // coincident-iterate guard
constexpr double kEpsInnerRel = 1e-16;  // degenerate inner-product guard
}  // namespace detail

/// Moduli between x_prev and x_cur from the cached per-function gradients;
/// the sigma-combination is formed inside. Costs no oracle calls.
///
/// Guards: when the iterates coincide (relative to 1e-14) all moduli are
/// zero, which is the smooth-f limit and keeps stepsizes growing; tiny or
/// negative inner products (possible in floating point despite convexity)
/// zero out l and c so downstream square roots stay valid.
inline LocalModuli local_moduli(const Vec& x_prev, const Vec& x_cur,
                                const Vec& g1_prev, const Vec& g2_prev,
                                const Vec& g1_cur, const Vec& g2_cur,
                                double sigma, bool strict = false) {
  LocalModuli m;
  const std::size_t n = x_cur.size();

  double dx2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x_prev[i] - x_cur[i];
    dx2 += d * d;
  }
  const double dx_norm = std::sqrt(dx2);
  if (dx_norm <= detail::kEpsStepRel * (1.0 + norm2(x_cur))) {
    if (strict) throw DegenerateStep("coincident iterates in local_moduli");
    return m;
  }

  double inner = 0.0, inner1 = 0.0, inner2 = 0.0, gg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x_prev[i] - x_cur[i];
    const double d1 = g1_prev[i] - g1_cur[i];
    const double d2 = g2_prev[i] - g2_cur[i];
    const double dg = sigma * d1 + d2;
    inner += dg * d;
    inner1 += d1 * d;
    inner2 += d2 * d;
    gg += dg * dg;
  }

  m.l1 = std::max(inner1, 0.0) / dx2;
  m.l2 = std::max(inner2, 0.0) / dx2;
  if (inner <= detail::kEpsInnerRel * std::sqrt(gg) * dx_norm) {
    m.l = 0.0;
    m.c = 0.0;
  } else {
    m.l = inner / dx2;
    m.c = gg / inner;
  }
  return m;
}

}  // namespace bilevel
