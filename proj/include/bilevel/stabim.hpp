#pragma once

#include <cstdint>

#include "bilevel/errors.hpp"
#include "bilevel/problem.hpp"
#include "bilevel/vec.hpp"

namespace bilevel {

/// Static variant under known global Lipschitz moduli. The moduli are
/// user-supplied; an underestimate is the user's error and is only caught by
/// the post-hoc moduli check in test mode.
struct StaBimConfig {
  double L_f1 = 0.0;  // may be zero when f1 == 0
  double L_f2 = 1.0;
  double nu = 0.98;
};

struct StaBimState {
  std::int64_t k = 0;
  Vec x_prev, x_cur;
  double alpha_cur = 0.0;
  double sigma_cur = 1.0;
  Vec grad_f1_cur, grad_f2_cur;  // at x_cur
};

inline StaBimState stabim_init(const BilevelProblem& p, const Vec& x_start,
                               double sigma0) {
  StaBimState st;
  st.x_prev = x_start;
  st.x_cur = x_start;
  st.sigma_cur = sigma0;
  PenalizedGrad g = eval_penalized_grad(p, sigma0, x_start);
  st.grad_f1_cur = std::move(g.f1);
  st.grad_f2_cur = std::move(g.f2);
  return st;
}

/// One step: alpha_{k+1} = nu / (sigma_{k+1} L_f1 + L_f2), then a proximal
/// gradient step on f_{k+1} + g_{k+1}. With sigma nonincreasing the
/// stepsizes are nondecreasing.
inline void stabim_step(const BilevelProblem& p, StaBimState& st,
                        double sigma_next, const StaBimConfig& cfg) {
  if (!(sigma_next <= st.sigma_cur && sigma_next >= 0.75 * st.sigma_cur))
    throw Error("sigma_next outside [3/4 sigma_k, sigma_k]");

  const double alpha = cfg.nu / (sigma_next * cfg.L_f1 + cfg.L_f2);
  const std::size_t n = st.x_cur.size();
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i)
    y[i] = st.x_cur[i] -
           alpha * (sigma_next * st.grad_f1_cur[i] + st.grad_f2_cur[i]);
  Vec next;
  p.prox_penalized(alpha, sigma_next, y, next);

  st.x_prev.swap(st.x_cur);
  st.x_cur.swap(next);
  st.alpha_cur = alpha;
  st.sigma_cur = sigma_next;
  PenalizedGrad g = eval_penalized_grad(p, sigma_next, st.x_cur);
  st.grad_f1_cur = std::move(g.f1);
  st.grad_f2_cur = std::move(g.f2);
  ++st.k;
}

}  // namespace bilevel
