#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "bilevel/matrix.hpp"
#include "bilevel/problem.hpp"
#include "bilevel/vec.hpp"

namespace testutil {

using bilevel::Vec;

inline Eigen::VectorXd to_eigen(const Vec& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<Eigen::Index>(v.size()));
}

inline Vec from_eigen(const Eigen::VectorXd& v) {
  return Vec(v.data(), v.data() + v.size());
}

inline Eigen::MatrixXd to_eigen(const bilevel::DenseMatrix& m) {
  Eigen::MatrixXd out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) out(i, j) = m.at(i, j);
  return out;
}

/// Central finite-difference gradient of a scalar function.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                       double h_rel = 1e-5) {
  Vec g(x.size());
  Vec xp = x, xm = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = h_rel * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

/// Brute-force minimizer of a separable-free scalar objective over one
/// coordinate by nested grid refinement. Used to cross-check proximal maps:
/// minimize phi(w) over w in [lo, hi].
inline double grid_min_1d(const std::function<double(double)>& phi, double lo,
                          double hi, int levels = 18, int pts = 96) {
  double best_w = lo, best_v = phi(lo);
  for (int lvl = 0; lvl < levels; ++lvl) {
    const double step = (hi - lo) / pts;
    for (int i = 0; i <= pts; ++i) {
      const double w = lo + i * step;
      const double v = phi(w);
      if (v < best_v) {
        best_v = v;
        best_w = w;
      }
    }
    lo = best_w - step;
    hi = best_w + step;
  }
  return best_w;
}

/// Independent adaPGM implementation (test-side oracle): adaptive proximal
/// gradient with the two-term stepsize rule, fixed penalty folded into the
/// objective. Mirrors the published method, coded separately from the
/// solver under test.
struct AdaPgmRef {
  // minimizes f + g where grad_f and prox_g are supplied
  std::function<void(const Vec&, Vec&)> grad_f;
  std::function<void(double, const Vec&, Vec&)> prox_g;

  std::vector<Vec> run(const Vec& x_m1, double alpha0, double alpha_max,
                       int iters) const {
    std::vector<Vec> traj;
    Vec g_prev(x_m1.size()), g_cur(x_m1.size());
    grad_f(x_m1, g_prev);
    Vec x_prev = x_m1, x_cur;
    Vec y(x_m1.size());
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] = x_m1[i] - alpha0 * g_prev[i];
    prox_g(alpha0, y, x_cur);
    grad_f(x_cur, g_cur);
    traj.push_back(x_cur);

    double a_prev = alpha0, a_cur = alpha0;
    for (int k = 0; k < iters; ++k) {
      double dx2 = 0.0, inner = 0.0, gg = 0.0;
      for (std::size_t i = 0; i < x_cur.size(); ++i) {
        const double dx = x_prev[i] - x_cur[i];
        const double dg = g_prev[i] - g_cur[i];
        dx2 += dx * dx;
        inner += dg * dx;
        gg += dg * dg;
      }
      double l = 0.0, c = 0.0;
      if (std::sqrt(dx2) > 1e-14 * (1.0 + bilevel::norm2(x_cur)) &&
          inner > 1e-16 * std::sqrt(gg) * std::sqrt(dx2)) {
        l = inner / dx2;
        c = gg / inner;
      }
      const double rho = a_cur / a_prev;
      const double t1 = std::sqrt(1.0 + rho) * a_cur;
      double t2 = std::numeric_limits<double>::infinity();
      const double excess = std::max(a_cur * c - 1.0, 0.0);
      if (a_cur * l * excess > 0.0)
        t2 = a_cur / (2.0 * std::sqrt(a_cur * l * excess));
      const double a_next = std::min(std::min(t1, t2), alpha_max);

      for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = x_cur[i] - a_next * g_cur[i];
      Vec x_next;
      prox_g(a_next, y, x_next);
      x_prev = x_cur;
      x_cur = x_next;
      g_prev = g_cur;
      grad_f(x_cur, g_cur);
      a_prev = a_cur;
      a_cur = a_next;
      traj.push_back(x_cur);
    }
    return traj;
  }
};

}  // namespace testutil
