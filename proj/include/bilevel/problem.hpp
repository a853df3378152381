#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>

#include "bilevel/errors.hpp"
#include "bilevel/oracles.hpp"
#include "bilevel/vec.hpp"

namespace bilevel {

/// Oracle-call counters. The grad_f2 counter is the single source of truth
/// for the "total gradient evaluations" axis of all reports; grad_f1, prox
/// and value calls are tracked separately. Atomic so that oracles can be
/// shared across threads without extra synchronization.
struct Counters {
  std::atomic<std::int64_t> grad_f1{0};
  std::atomic<std::int64_t> grad_f2{0};
  std::atomic<std::int64_t> prox{0};
  std::atomic<std::int64_t> f_value{0};

  void reset() {
    grad_f1 = 0;
    grad_f2 = 0;
    prox = 0;
    f_value = 0;
  }
};

/// Optimal values used by tests and trace metrics, each set only when known
/// (analytically or from a long reference run).
///   cost1_star: optimal upper cost over the lower-level solution set
///   cost2_star: optimal lower cost
///   cost1_inf : infimum of the upper cost over dom g2
struct KnownOptima {
  std::optional<double> cost1_star;
  std::optional<double> cost2_star;
  std::optional<double> cost1_inf;
};

/// The problem quadruple (f1, g1, f2, g2) with a declared strategy for the
/// prox of sigma*g1 + g2. Shareable read-only across solver runs; the
/// counters are the only mutable state.
struct BilevelProblem {
  SmoothOracle f1, f2;
  ProxOracle g1, g2;
  CompositeProxStrategy composite;
  KnownOptima known;

  std::shared_ptr<Counters> counters = std::make_shared<Counters>();

  int dim() const { return f2.dim; }

  /// Copy sharing the oracle data but with zeroed, independent counters.
  BilevelProblem with_fresh_counters() const {
    BilevelProblem p = *this;
    p.counters = std::make_shared<Counters>();
    return p;
  }

  // -- counted oracle calls (solver work) -----------------------------------

  void grad_f1_counted(const Vec& x, Vec& g) const {
    f1.grad(x, g);
    counters->grad_f1.fetch_add(1, std::memory_order_relaxed);
  }

  void grad_f2_counted(const Vec& x, Vec& g) const {
    f2.grad(x, g);
    counters->grad_f2.fetch_add(1, std::memory_order_relaxed);
  }

  void prox_penalized(double t, double sigma, const Vec& u, Vec& out) const {
    composite_prox(composite, g1, g2, t, sigma, u, out);
    counters->prox.fetch_add(1, std::memory_order_relaxed);
  }

  void prox_g2_counted(double t, const Vec& u, Vec& out) const {
    g2.prox(t, u, out);
    counters->prox.fetch_add(1, std::memory_order_relaxed);
  }

  /// One evaluation of f_sigma = sigma*f1 + f2 (counts as a single value
  /// evaluation; used by the Armijo linesearch of SEDM).
  double value_fk_counted(double sigma, const Vec& x) const {
    counters->f_value.fetch_add(1, std::memory_order_relaxed);
    return sigma * f1.value(x) + f2.value(x);
  }

  // -- uncounted evaluations (trace metrics, tests) --------------------------

  double cost1(const Vec& x) const { return f1.value(x) + g1.value(x); }
  double cost2(const Vec& x) const { return f2.value(x) + g2.value(x); }
};

struct PenalizedGrad {
  Vec f1, f2, fk;  // grad f1(x), grad f2(x), sigma*grad f1(x) + grad f2(x)
};

/// Evaluates both constituent gradients and the sigma-combination
/// grad f_sigma = sigma*grad f1 + grad f2. Exactly one counted grad f2
/// evaluation (plus one grad f1).
inline void eval_penalized_grad(const BilevelProblem& p, double sigma,
                                const Vec& x, PenalizedGrad& out) {
  p.grad_f1_counted(x, out.f1);
  p.grad_f2_counted(x, out.f2);
  out.fk.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out.fk[i] = sigma * out.f1[i] + out.f2[i];
  if (!all_finite(out.f1) || !all_finite(out.f2) || !all_finite(out.fk))
    throw NonFiniteGradient("gradient oracle produced NaN/Inf");
}

inline PenalizedGrad eval_penalized_grad(const BilevelProblem& p, double sigma,
                                         const Vec& x) {
  PenalizedGrad out;
  eval_penalized_grad(p, sigma, x, out);
  return out;
}

}  // namespace bilevel
