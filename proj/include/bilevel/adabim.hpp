#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include "bilevel/errors.hpp"
#include "bilevel/moduli.hpp"
#include "bilevel/problem.hpp"
#include "bilevel/schedule.hpp"
#include "bilevel/vec.hpp"

namespace bilevel {

struct AdaBimOptions {
  double nu = 0.98;  // linesearch level, in (0,1)
  double eta = 0.5;  // backtrack factor, in (0,1)
  // Initial stepsizes; when absent, 1/l_hat from a finite-difference probe
  // of grad f_0 near the starting point (any positive default is admissible,
  // the probe just avoids a pathological first step). alpha0 >= alpha_m1 > 0.
  std::optional<double> alpha0;
  std::optional<double> alpha_m1;
  // alpha_max = alpha_max_factor / l_0 with l_0 the modulus between x^{-1}
  // and x^0 (fallback 1e12 when l_0 = 0), unless overridden.
  double alpha_max_factor = 1e6;
  std::optional<double> alpha_max;
  int max_backtracks = 60;
  bool linesearch = true;  // test mode: accept the initializer unconditionally
};

/// Initializer for the next stepsize: the minimum of the penalty-ratio
/// branch, the curvature branch (infinite when alpha*c <= 1), and alpha_max.
/// The curvature branch radicand 1 - 4(1 - s_cur/s_prev)*alpha*l2 stays
/// >= 1 - nu along admissible runs; a negative radicand means a precondition
/// was broken upstream.
inline double stepsize_init(double sigma_prev, double sigma_cur,
                            double sigma_next, double alpha_prev,
                            double alpha_cur, const LocalModuli& m,
                            double alpha_max, double nu) {
  const double rho = (sigma_cur * alpha_cur) / (sigma_prev * alpha_prev);
  const double shift = sigma_cur / sigma_next;

  const double branch1 =
      std::sqrt((sigma_cur / sigma_prev) * (1.0 + rho)) * shift * alpha_cur;

  const double radicand =
      1.0 - 4.0 * (1.0 - sigma_cur / sigma_prev) * alpha_cur * m.l2;
  if (radicand < 0.0)
    throw RadicandViolation("stepsize radicand " + std::to_string(radicand));

  double branch2 = std::numeric_limits<double>::infinity();
  const double excess = std::max(alpha_cur * m.c - 1.0, 0.0);
  const double denom_sq = alpha_cur * m.l * excess;
  if (denom_sq > 0.0)
    branch2 = std::sqrt(radicand) / (2.0 * std::sqrt(denom_sq)) * shift *
              alpha_cur;

  (void)nu;  // the radicand >= 1 - nu bound is re-checked by tests
  return std::min(std::min(branch1, branch2), alpha_max);
}

/// Full per-iteration memory of the adaptive method: iterate pair, stepsize
/// pair, penalty pair, the gradients cached at both iterates, and the local
/// moduli between them (estimated with sigma_cur).
struct AdaBimState {
  std::int64_t k = 0;
  Vec x_prev, x_cur;
  double alpha_prev = 1.0, alpha_cur = 1.0;
  double sigma_prev = 1.0, sigma_cur = 1.0;
  Vec grad_f1_prev, grad_f2_prev;
  Vec grad_f1_cur, grad_f2_cur;
  LocalModuli moduli;  // between x_prev and x_cur at sigma_cur
  double alpha_max = 1e12;
  double last_radicand = 1.0;
  std::int64_t backtracks_total = 0;
};

/// One proximal-gradient step x^0 = prox_{a0 g_0}(x^{-1} - a0 grad f_0(x^{-1}))
/// with sigma_{-1} = sigma_0, caching the gradients at both points and fixing
/// alpha_max from the first modulus estimate.
inline AdaBimState adabim_init(const BilevelProblem& p, const Vec& x_start,
                               double sigma0, const AdaBimOptions& opts) {
  AdaBimState st;
  st.x_prev = x_start;
  st.sigma_prev = sigma0;
  st.sigma_cur = sigma0;

  PenalizedGrad g_start = eval_penalized_grad(p, sigma0, x_start);

  double alpha0;
  if (opts.alpha0) {
    alpha0 = *opts.alpha0;
  } else {
    // Probe the modulus of grad f_0 along a fixed unit direction.
    const double delta = 1e-4 * (1.0 + norm2(x_start));
    const double e = 1.0 / std::sqrt(static_cast<double>(x_start.size()));
    Vec probe = x_start;
    for (double& v : probe) v += delta * e;
    PenalizedGrad g_probe = eval_penalized_grad(p, sigma0, probe);
    double diff2 = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
      const double d = g_probe.fk[i] - g_start.fk[i];
      diff2 += d * d;
    }
    const double l_hat = std::sqrt(diff2) / delta;
    alpha0 = l_hat > 0.0 ? 1.0 / l_hat : 1.0;
  }
  const double alpha_m1 = opts.alpha_m1 ? *opts.alpha_m1 : alpha0;
  if (!(alpha0 >= alpha_m1 && alpha_m1 > 0.0))
    throw Error("adabim requires alpha0 >= alpha_m1 > 0");
  st.alpha_prev = alpha_m1;
  st.alpha_cur = alpha0;

  Vec y(x_start.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = x_start[i] - alpha0 * g_start.fk[i];
  p.prox_penalized(alpha0, sigma0, y, st.x_cur);

  PenalizedGrad g0 = eval_penalized_grad(p, sigma0, st.x_cur);
  st.grad_f1_prev = std::move(g_start.f1);
  st.grad_f2_prev = std::move(g_start.f2);
  st.grad_f1_cur = std::move(g0.f1);
  st.grad_f2_cur = std::move(g0.f2);

  st.moduli = local_moduli(st.x_prev, st.x_cur, st.grad_f1_prev,
                           st.grad_f2_prev, st.grad_f1_cur, st.grad_f2_cur,
                           sigma0);
  if (opts.alpha_max) {
    st.alpha_max = *opts.alpha_max;
  } else {
    st.alpha_max =
        st.moduli.l > 0.0 ? opts.alpha_max_factor / st.moduli.l : 1e12;
  }
  return st;
}

/// One iteration: pick the next penalty from the box, initialize the
/// stepsize, then backtrack geometrically until alpha*l_next <= nu where
/// l_next is estimated between x^k and the candidate. Every candidate costs
/// exactly one grad f2 evaluation and one prox evaluation; the accepted
/// candidate's gradients become the cache for the next iteration, rejected
/// ones are discarded. Returns the number of backtracks (rejected trials).
inline int adabim_step(const BilevelProblem& p, AdaBimState& st,
                       double sigma_next, const AdaBimOptions& opts) {
  if (!(sigma_next <= st.sigma_cur && sigma_next >= 0.75 * st.sigma_cur))
    throw Error("sigma_next outside [3/4 sigma_k, sigma_k]");

  st.last_radicand =
      1.0 - 4.0 * (1.0 - st.sigma_cur / st.sigma_prev) * st.alpha_cur *
                st.moduli.l2;
  const double alpha_bar =
      stepsize_init(st.sigma_prev, st.sigma_cur, sigma_next, st.alpha_prev,
                    st.alpha_cur, st.moduli, st.alpha_max, opts.nu);

  // grad f_{k+1}(x^k) from the cached per-function gradients.
  const std::size_t n = st.x_cur.size();
  Vec gk(n);
  for (std::size_t i = 0; i < n; ++i)
    gk[i] = sigma_next * st.grad_f1_cur[i] + st.grad_f2_cur[i];

  Vec y(n), cand;
  PenalizedGrad g_cand;
  double alpha = alpha_bar;
  for (int i = 0; i <= opts.max_backtracks; ++i, alpha *= opts.eta) {
    for (std::size_t j = 0; j < n; ++j) y[j] = st.x_cur[j] - alpha * gk[j];
    p.prox_penalized(alpha, sigma_next, y, cand);
    eval_penalized_grad(p, sigma_next, cand, g_cand);
    LocalModuli m_next =
        local_moduli(st.x_cur, cand, st.grad_f1_cur, st.grad_f2_cur,
                     g_cand.f1, g_cand.f2, sigma_next);
    if (!opts.linesearch || alpha * m_next.l <= opts.nu) {
      st.x_prev.swap(st.x_cur);
      st.x_cur.swap(cand);
      st.grad_f1_prev.swap(st.grad_f1_cur);
      st.grad_f2_prev.swap(st.grad_f2_cur);
      st.grad_f1_cur.swap(g_cand.f1);
      st.grad_f2_cur.swap(g_cand.f2);
      st.alpha_prev = st.alpha_cur;
      st.alpha_cur = alpha;
      st.sigma_prev = st.sigma_cur;
      st.sigma_cur = sigma_next;
      st.moduli = m_next;
      st.backtracks_total += i;
      ++st.k;
      return i;
    }
  }
  throw BacktrackLimit("adabim linesearch exceeded " +
                       std::to_string(opts.max_backtracks) + " trials");
}

}  // namespace bilevel
