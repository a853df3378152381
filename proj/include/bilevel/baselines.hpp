#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bilevel/errors.hpp"
#include "bilevel/problem.hpp"
#include "bilevel/vec.hpp"

namespace bilevel {

// ---------------------------------------------------------------------------
// Solodov's explicit descent method. Requires g1 == 0 and g2 an indicator
// (projection oracle). Projected gradient with Armijo backtracking restarted
// from alpha_max every iteration:
//   x+ = proj_D(x - alpha grad f_{k+1}(x)),  alpha = alpha_max * eta^m,
// with m smallest such that
//   f_{k+1}(x+) <= f_{k+1}(x) + nu <grad f_{k+1}(x), x+ - x>.
// Each trial costs one projection and one f_{k+1} value evaluation (value
// evaluations are tracked in their own counter; they never enter the
// gradient-evaluation axis).

struct SedmConfig {
  double alpha_max = 1.0;
  double eta = 0.5;
  double nu = 0.98;
  int max_backtracks = 60;
};

struct SedmState {
  std::int64_t k = 0;
  Vec x_prev, x_cur;
  double alpha_cur = 0.0;
  double sigma_cur = 1.0;
  double f1_val = 0.0, f2_val = 0.0;  // values at x_cur
  std::int64_t backtracks_total = 0;
};

inline SedmState sedm_init(const BilevelProblem& p, const Vec& x_start,
                           double sigma0) {
  if (!p.g1.is_zero)
    throw StrategyMismatch("SEDM requires g1 == 0");
  if (!(p.g2.is_indicator || p.g2.is_zero))
    throw StrategyMismatch("SEDM requires g2 to be an indicator");
  SedmState st;
  st.x_prev = x_start;
  st.x_cur = x_start;
  st.sigma_cur = sigma0;
  p.counters->f_value.fetch_add(1, std::memory_order_relaxed);
  st.f1_val = p.f1.value(x_start);
  st.f2_val = p.f2.value(x_start);
  return st;
}

/// Returns the number of backtracks m_k.
inline int sedm_step(const BilevelProblem& p, SedmState& st, double sigma_next,
                     const SedmConfig& cfg) {
  PenalizedGrad g = eval_penalized_grad(p, sigma_next, st.x_cur);
  const double fk_cur = sigma_next * st.f1_val + st.f2_val;

  const std::size_t n = st.x_cur.size();
  Vec y(n), cand;
  double alpha = cfg.alpha_max;
  for (int m = 0; m <= cfg.max_backtracks; ++m, alpha *= cfg.eta) {
    for (std::size_t i = 0; i < n; ++i) y[i] = st.x_cur[i] - alpha * g.fk[i];
    p.prox_g2_counted(alpha, y, cand);
    p.counters->f_value.fetch_add(1, std::memory_order_relaxed);
    const double f1_cand = p.f1.value(cand);
    const double f2_cand = p.f2.value(cand);
    const double fk_cand = sigma_next * f1_cand + f2_cand;
    double inner = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      inner += g.fk[i] * (cand[i] - st.x_cur[i]);
    if (fk_cand <= fk_cur + cfg.nu * inner) {
      st.x_prev.swap(st.x_cur);
      st.x_cur.swap(cand);
      st.alpha_cur = alpha;
      st.sigma_cur = sigma_next;
      st.f1_val = f1_cand;
      st.f2_val = f2_cand;
      st.backtracks_total += m;
      ++st.k;
      return m;
    }
  }
  throw BacktrackLimit("sedm linesearch exceeded " +
                       std::to_string(cfg.max_backtracks) + " trials");
}

// ---------------------------------------------------------------------------
// Bilevel gradient sequential averaging. Requires g1 == 0 and a strongly
// convex Lipschitz-smooth f1 with known moduli. Decoupled upper gradient
// step and lower prox-gradient step, averaged with weight sigma_{k+1}:
//   x1 = x - a1 grad f1(x)
//   x2 = prox_{a2 g2}(x - a2 grad f2(x))
//   x+ = sigma x1 + (1 - sigma) x2.

struct BigsamConfig {
  double L_f1 = 1.0;
  double mu_f1 = 1.0;
  double L_f2 = 1.0;
  double alpha1 = 0.0;  // defaults to the bound 2/(L_f1 + mu_f1)
  double alpha2 = 0.0;  // defaults to the bound 1/L_f2

  double a1() const { return alpha1 > 0.0 ? alpha1 : 2.0 / (L_f1 + mu_f1); }
  double a2() const { return alpha2 > 0.0 ? alpha2 : 1.0 / L_f2; }
};

struct BigsamState {
  std::int64_t k = 0;
  Vec x_prev, x_cur;
  double sigma_cur = 1.0;
};

inline BigsamState bigsam_init(const BilevelProblem& p, const Vec& x_start,
                               double sigma0) {
  if (!p.g1.is_zero)
    throw StrategyMismatch("BiGSAM requires g1 == 0");
  if (sigma0 > 1.0)
    throw Error("BiGSAM requires sigma in (0, 1]");
  BigsamState st;
  st.x_prev = x_start;
  st.x_cur = x_start;
  st.sigma_cur = sigma0;
  return st;
}

inline void bigsam_step(const BilevelProblem& p, BigsamState& st,
                        double sigma_next, const BigsamConfig& cfg) {
  const std::size_t n = st.x_cur.size();
  Vec g1(n), g2(n);
  p.grad_f1_counted(st.x_cur, g1);
  p.grad_f2_counted(st.x_cur, g2);

  const double a1 = cfg.a1(), a2 = cfg.a2();
  Vec x1(n), y(n), x2;
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = st.x_cur[i] - a1 * g1[i];
    y[i] = st.x_cur[i] - a2 * g2[i];
  }
  p.prox_g2_counted(a2, y, x2);

  Vec next(n);
  for (std::size_t i = 0; i < n; ++i)
    next[i] = sigma_next * x1[i] + (1.0 - sigma_next) * x2[i];

  st.x_prev.swap(st.x_cur);
  st.x_cur.swap(next);
  st.sigma_cur = sigma_next;
  ++st.k;
}

// ---------------------------------------------------------------------------
// Iterative regularization via dual diagonal descent, specialized to the
// linear inverse instance with l2 upper level:
//   x+ = x - gamma*(A'(Ax - b) + sigma x),
// where A'(Ax - b) is grad f2. The iterate stays in range(A') when started
// there (x0 = A'z, zero z by default). gamma is applied to both terms; the
// penalty uses the current sigma before the schedule advances.

struct I3dConfig {
  double gamma = 0.0;  // defaults to 1/(L_f2 + sigma0)

  double step(double L_f2, double sigma0) const {
    return gamma > 0.0 ? gamma : 1.0 / (L_f2 + sigma0);
  }
};

struct I3dState {
  std::int64_t k = 0;
  Vec x_prev, x_cur;
  double sigma_cur = 1.0;
  double gamma = 1.0;
};

inline I3dState i3d_init(const Vec& x_start_in_rangeAt, double sigma0,
                         double gamma) {
  I3dState st;
  st.x_prev = x_start_in_rangeAt;
  st.x_cur = x_start_in_rangeAt;
  st.sigma_cur = sigma0;
  st.gamma = gamma;
  return st;
}

inline void i3d_step(const BilevelProblem& p, I3dState& st, double sigma) {
  const std::size_t n = st.x_cur.size();
  Vec g(n);
  p.grad_f2_counted(st.x_cur, g);
  Vec next(n);
  for (std::size_t i = 0; i < n; ++i)
    next[i] = st.x_cur[i] - st.gamma * (g[i] + sigma * st.x_cur[i]);
  st.x_prev.swap(st.x_cur);
  st.x_cur.swap(next);
  st.sigma_cur = sigma;
  ++st.k;
}

// ---------------------------------------------------------------------------
// Plain fixed-step proximal gradient on f_sigma + g_sigma with constant
// sigma and alpha. Used as the equivalence oracle for the reduction tests
// and exposed as the pgm-ref solver.

inline std::vector<Vec> reference_pgm(const BilevelProblem& p,
                                      const Vec& x_start, double sigma,
                                      double alpha, std::int64_t iters) {
  std::vector<Vec> traj;
  traj.reserve(static_cast<std::size_t>(iters) + 1);
  traj.push_back(x_start);
  Vec x = x_start;
  const std::size_t n = x.size();
  Vec y(n), next;
  PenalizedGrad g;
  for (std::int64_t k = 0; k < iters; ++k) {
    eval_penalized_grad(p, sigma, x, g);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - alpha * g.fk[i];
    p.prox_penalized(alpha, sigma, y, next);
    x.swap(next);
    traj.push_back(x);
  }
  return traj;
}

}  // namespace bilevel
