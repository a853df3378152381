#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "bilevel/datasets.hpp"
#include "bilevel/errors.hpp"
#include "bilevel/matrix.hpp"
#include "bilevel/problem.hpp"
#include "bilevel/vec.hpp"

namespace bilevel {

// ---------------------------------------------------------------------------
// Synthetic linear inverse instances with a planted sparse vector, after the
// classical construction for sparse least-squares benchmarks: a random
// matrix is rescaled so that a planted residual acts as a dual certificate
// (|<A_j, y>| = 1 on the support, < 1 off it), making the planted vector the
// known solution of the unit-weight l1-regularized problem, and b = A x + y.

struct LinearInverseInstance {
  DenseMatrix A;
  Vec b;
  Vec x_gen;  // planted vector with nstar nonzeros
  std::uint64_t seed = 0;
  double L_f2 = 0.0;  // ||A||^2 estimate
};

inline LinearInverseInstance gen_linear_inverse(int m, int n, int nstar,
                                                std::uint64_t seed) {
  if (nstar > std::min(m, n) || m <= 0 || n <= 0 || nstar < 0)
    throw DimensionError("gen_linear_inverse requires 0 <= nstar <= min(m,n)");
  Rng rng(seed);

  LinearInverseInstance inst;
  inst.seed = seed;
  inst.A = DenseMatrix(m, n);
  for (double& v : inst.A.a) v = rng.uniform(-1.0, 1.0);

  Vec y(m);
  for (double& v : y) v = rng.uniform(-1.0, 1.0);

  Vec d(n);
  inst.A.apply_t(y, d);

  // Support = the nstar columns with the largest |<B_j, y>| (stable order).
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return std::abs(d[i]) > std::abs(d[j]);
  });

  std::vector<bool> on_support(n, false);
  for (int r = 0; r < nstar; ++r) on_support[order[r]] = true;

  for (int j = 0; j < n; ++j) {
    const double dj = std::abs(d[j]);
    double scale;
    if (on_support[j]) {
      scale = dj > 0.0 ? 1.0 / dj : 1.0;
    } else {
      scale = dj > 1e-12 ? rng.uniform() / dj : 1.0;
    }
    for (int i = 0; i < m; ++i) inst.A.at(i, j) *= scale;
  }

  inst.x_gen.assign(n, 0.0);
  for (int j = 0; j < n; ++j) {
    if (!on_support[j]) continue;
    const double mag = 0.1 + 0.9 * rng.uniform();
    inst.x_gen[j] = d[j] >= 0.0 ? mag : -mag;
  }

  inst.A.apply(inst.x_gen, inst.b);
  for (int i = 0; i < m; ++i) inst.b[i] += y[i];

  inst.L_f2 = sqnorm_estimate(inst.A, n);
  return inst;
}

// ---------------------------------------------------------------------------
// First-kind Fredholm test problems discretized by midpoint quadrature on a
// uniform grid, with the right-hand side built from the discretized exact
// solution so the lower level is consistent. The kernels and solutions are
// the classical phillips / foxgood / baart definitions.

struct IntegralEquationInstance {
  DenseMatrix A;  // n x n
  Vec b;
  Vec x_exact;
  std::string kind;
  std::uint64_t seed = 0;
  double L_f2 = 0.0;     // ||A||^2
  double L_q1 = 0.0;     // lambda_max(L'L) = ||L||^2
};

inline IntegralEquationInstance gen_integral_equation(const std::string& kind,
                                                      int n,
                                                      std::uint64_t seed = 0) {
  if (n < 8) throw DimensionError("integral equation needs n >= 8");
  IntegralEquationInstance inst;
  inst.kind = kind;
  inst.seed = seed;
  inst.A = DenseMatrix(n, n);
  inst.x_exact.assign(n, 0.0);

  if (kind == "phillips") {
    // K(s,t) = phi(s-t), phi(u) = 1 + cos(pi u / 3) on |u| < 3, else 0,
    // on [-6, 6]; solution x(t) = phi(t).
    const double h = 12.0 / n;
    auto phi = [](double u) {
      u = std::abs(u);
      return u < 3.0 ? 1.0 + std::cos(M_PI * u / 3.0) : 0.0;
    };
    Vec grid(n);
    for (int i = 0; i < n; ++i) grid[i] = -6.0 + (i + 0.5) * h;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        inst.A.at(i, j) = h * phi(std::abs(grid[i] - grid[j]));
    for (int j = 0; j < n; ++j) inst.x_exact[j] = phi(grid[j]);
  } else if (kind == "foxgood") {
    // K(s,t) = sqrt(s^2 + t^2) on [0, 1]^2; solution x(t) = t.
    const double h = 1.0 / n;
    Vec grid(n);
    for (int i = 0; i < n; ++i) grid[i] = (i + 0.5) * h;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        inst.A.at(i, j) = h * std::sqrt(grid[i] * grid[i] + grid[j] * grid[j]);
    for (int j = 0; j < n; ++j) inst.x_exact[j] = grid[j];
  } else if (kind == "baart") {
    // K(s,t) = exp(s cos t), s in [0, pi/2], t in [0, pi]; x(t) = sin t.
    const double hs = (M_PI / 2.0) / n, ht = M_PI / n;
    for (int i = 0; i < n; ++i) {
      const double s = (i + 0.5) * hs;
      for (int j = 0; j < n; ++j) {
        const double t = (j + 0.5) * ht;
        inst.A.at(i, j) = ht * std::exp(s * std::cos(t));
      }
    }
    for (int j = 0; j < n; ++j) inst.x_exact[j] = std::sin((j + 0.5) * ht);
  } else {
    throw UnsupportedKind("unknown integral equation kind '" + kind + "'");
  }

  inst.A.apply(inst.x_exact, inst.b);
  inst.L_f2 = sqnorm_estimate(inst.A, n);

  struct LOp {
    int n;
    void apply(const Vec& x, Vec& y) const { apply_discrete_gradient(x, y); }
    void apply_t(const Vec& y, Vec& x) const {
      apply_discrete_gradient_t(y, x);
    }
  } lop{n};
  inst.L_q1 = sqnorm_estimate(lop, n);
  return inst;
}

// ---------------------------------------------------------------------------
// Lower-level optimality measure. When g1 is zero or quadratic, the prox
// optimality condition of the step yields an explicit element of
// d cost2(x_cur) from quantities already computed:
//   (x_prev - x_cur)/alpha - sigma c x_cur + grad f2(x_cur) - grad f_sigma(x_prev).
// Otherwise the measure falls back to the cost2 gap against the best known
// value (or raw cost2 when none is known).

struct StepSnapshot {
  const Vec* x_prev = nullptr;
  const Vec* x_cur = nullptr;
  double alpha = 0.0;  // 0 disables the subgradient extraction
  double sigma = 0.0;  // penalty used in the step
  const Vec* grad_f2_cur = nullptr;   // optional cache
  const Vec* grad_fk_prev = nullptr;  // optional cache (sigma-combined)
};

inline double lower_residual(const BilevelProblem& p, const StepSnapshot& s) {
  const bool extractable = p.g1.is_zero || p.g1.quad_coeff.has_value();
  if (extractable && s.alpha > 0.0 && s.x_prev && s.x_cur) {
    const double c = p.g1.is_zero ? 0.0 : *p.g1.quad_coeff;
    const std::size_t n = s.x_cur->size();
    Vec g2c, gkp;
    if (!s.grad_f2_cur) p.f2.grad(*s.x_cur, g2c);
    const Vec& grad_f2_cur = s.grad_f2_cur ? *s.grad_f2_cur : g2c;
    if (!s.grad_fk_prev) {
      Vec g1p, g2p;
      p.f1.grad(*s.x_prev, g1p);
      p.f2.grad(*s.x_prev, g2p);
      gkp.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        gkp[i] = s.sigma * g1p[i] + g2p[i];
    }
    const Vec& grad_fk_prev = s.grad_fk_prev ? *s.grad_fk_prev : gkp;
    double r2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = ((*s.x_prev)[i] - (*s.x_cur)[i]) / s.alpha -
                       s.sigma * c * (*s.x_cur)[i] + grad_f2_cur[i] -
                       grad_fk_prev[i];
      r2 += r * r;
    }
    return std::sqrt(r2);
  }
  if (!s.x_cur) return std::numeric_limits<double>::quiet_NaN();
  const double v = p.cost2(*s.x_cur);
  if (p.known.cost2_star) return v - *p.known.cost2_star;
  return v;
}

// ---------------------------------------------------------------------------
// Experiment problem bundles. Each experiment is exposed in up to two
// formulations: the prox form carries the upper cost in g1 (usable by the
// proposed methods, including nonsmooth uppers), the smooth form carries it
// in f1 with g1 == 0 (required by SEDM / BiGSAM / iterative-3D, only
// available for the quadratic upper).

struct ProblemSpec {
  enum class Kind { line, logistic, lininverse, inteq };
  enum class Upper { sqnorm, l1 };

  Kind kind = Kind::line;
  Upper upper = Upper::sqnorm;
  bool upper_in_f1 = false;  // use the smooth formulation as the primary one

  // line: lower level (1/2)(a'x - rhs)^2
  Vec line_a = {1.0, 1.0};
  double line_rhs = 2.0;

  // logistic: LIBSVM file, or synthetic when path is empty
  std::string data_path;
  bool add_bias = false;

  int m = 20, n = 50, nstar = 5;
  std::uint64_t seed = 42;

  std::string inteq_kind = "phillips";

  std::optional<double> cost1_ref;  // reference optima (override analytic)
  std::optional<double> cost2_ref;

  Vec x0;  // empty -> zeros
};

struct ProblemBundle {
  BilevelProblem prox_form;
  std::optional<BilevelProblem> smooth_form;
  double L_f2 = 0.0;
  double L_f1_prox = 0.0;  // Lipschitz modulus of f1 in the prox form
  double L_f1_smooth = 0.0, mu_f1_smooth = 0.0;
  bool sedm_ok = false, bigsam_ok = false, i3d_ok = false;
  Vec x0;
  std::string name;
};

namespace detail {

/// f1 = (1/2)||x||^2 with identity gradient.
inline SmoothOracle identity_quadratic(int dim) {
  SmoothOracle f;
  f.dim = dim;
  f.grad = [](const Vec& x, Vec& g) { g = x; };
  f.value = [](const Vec& x) { return 0.5 * dot(x, x); };
  return f;
}

/// f2 = (1/2)||Ax - b||^2 over a shared dense matrix.
inline SmoothOracle least_squares_oracle(std::shared_ptr<DenseMatrix> A,
                                         std::shared_ptr<Vec> b) {
  SmoothOracle f;
  f.dim = A->cols;
  f.grad = [A, b](const Vec& x, Vec& g) {
    Vec r;
    A->apply(x, r);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= (*b)[i];
    A->apply_t(r, g);
  };
  f.value = [A, b](const Vec& x) {
    Vec r;
    A->apply(x, r);
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double d = r[i] - (*b)[i];
      s += d * d;
    }
    return 0.5 * s;
  };
  return f;
}

inline void attach_upper(BilevelProblem& p, ProblemSpec::Upper upper,
                         bool in_f1, const ProxOracle& g2, int dim) {
  p.g2 = g2;
  if (upper == ProblemSpec::Upper::sqnorm && in_f1) {
    p.f1 = identity_quadratic(dim);
    p.g1 = zero_prox(dim);
    p.composite = CompositeProxStrategy::G1Zero();
  } else if (upper == ProblemSpec::Upper::sqnorm) {
    p.f1 = zero_smooth(dim);
    p.g1 = sqnorm_prox(dim, 1.0);
    p.composite = CompositeProxStrategy::G1QuadraticScaling(1.0);
  } else {
    p.f1 = zero_smooth(dim);
    p.g1 = l1_prox(dim);
    if (!g2.is_zero)
      throw StrategyMismatch("l1 upper needs g2 == 0 for a closed-form prox");
    p.composite = CompositeProxStrategy::G2Zero();
  }
}

}  // namespace detail

inline ProblemBundle build_problem(const ProblemSpec& spec) {
  ProblemBundle bundle;

  SmoothOracle f2;
  ProxOracle g2;
  std::optional<double> cost2_star;
  int dim = 0;

  switch (spec.kind) {
    case ProblemSpec::Kind::line: {
      dim = static_cast<int>(spec.line_a.size());
      auto a = std::make_shared<Vec>(spec.line_a);
      const double rhs = spec.line_rhs;
      f2.dim = dim;
      f2.grad = [a, rhs](const Vec& x, Vec& g) {
        const double s = dot(*a, x) - rhs;
        g.resize(a->size());
        for (std::size_t i = 0; i < a->size(); ++i) g[i] = s * (*a)[i];
      };
      f2.value = [a, rhs](const Vec& x) {
        const double s = dot(*a, x) - rhs;
        return 0.5 * s * s;
      };
      g2 = zero_prox(dim);
      bundle.L_f2 = dot(*a, *a);
      cost2_star = 0.0;
      bundle.name = "line";
      break;
    }
    case ProblemSpec::Kind::logistic: {
      SparseDataset data;
      if (!spec.data_path.empty()) {
        std::ifstream in(spec.data_path);
        if (!in) throw DataError("cannot open data file " + spec.data_path);
        data = parse_libsvm(in, spec.add_bias);
      } else {
        data = gen_logistic_synth(spec.m, spec.n, spec.seed);
      }
      LogisticBuild lb = build_logistic(data);
      f2 = std::move(lb.f2);
      dim = f2.dim;
      g2 = zero_prox(dim);
      bundle.L_f2 = lb.L_f2;
      bundle.name = "logistic";
      break;
    }
    case ProblemSpec::Kind::lininverse: {
      LinearInverseInstance inst =
          gen_linear_inverse(spec.m, spec.n, spec.nstar, spec.seed);
      dim = spec.n;
      auto A = std::make_shared<DenseMatrix>(std::move(inst.A));
      auto b = std::make_shared<Vec>(std::move(inst.b));
      f2 = detail::least_squares_oracle(A, b);
      g2 = zero_prox(dim);
      bundle.L_f2 = inst.L_f2;
      if (spec.m <= spec.n) cost2_star = 0.0;  // consistent system
      bundle.i3d_ok = spec.upper == ProblemSpec::Upper::sqnorm;
      bundle.name = "lininverse";
      break;
    }
    case ProblemSpec::Kind::inteq: {
      IntegralEquationInstance inst =
          gen_integral_equation(spec.inteq_kind, spec.n, spec.seed);
      dim = spec.n;
      auto A = std::make_shared<DenseMatrix>(std::move(inst.A));
      auto b = std::make_shared<Vec>(std::move(inst.b));
      f2 = detail::least_squares_oracle(A, b);
      g2 = nonneg_prox(dim);
      bundle.L_f2 = inst.L_f2;
      cost2_star = 0.0;  // b = A x_exact with x_exact >= 0
      bundle.name = "inteq_" + spec.inteq_kind;

      // Upper level (1/2)||x||_Q^2 with Q = L'L + I: the L'L part goes in
      // f1, the identity in the prox-friendly g1.
      BilevelProblem p;
      p.f2 = f2;
      p.f1.dim = dim;
      p.f1.grad = [](const Vec& x, Vec& g) { apply_q1(x, g); };
      p.f1.value = [](const Vec& x) {
        Vec q;
        apply_q1(x, q);
        return 0.5 * dot(x, q);
      };
      p.g1 = sqnorm_prox(dim, 1.0);
      p.g2 = g2;
      p.composite = CompositeProxStrategy::G1QuadraticScaling(1.0);
      p.known.cost2_star = spec.cost2_ref ? spec.cost2_ref : cost2_star;
      p.known.cost1_inf = 0.0;
      p.known.cost1_star = spec.cost1_ref;
      bundle.prox_form = std::move(p);
      bundle.L_f1_prox = inst.L_q1;

      BilevelProblem ps;
      ps.f2 = f2;
      ps.f1.dim = dim;
      ps.f1.grad = [](const Vec& x, Vec& g) {
        apply_q1(x, g);
        for (std::size_t i = 0; i < x.size(); ++i) g[i] += x[i];
      };
      ps.f1.value = [](const Vec& x) {
        Vec q;
        apply_q1(x, q);
        return 0.5 * dot(x, q) + 0.5 * dot(x, x);
      };
      ps.g1 = zero_prox(dim);
      ps.g2 = g2;
      ps.composite = CompositeProxStrategy::G1Zero();
      ps.known = bundle.prox_form.known;
      bundle.smooth_form = std::move(ps);
      bundle.L_f1_smooth = inst.L_q1 + 1.0;
      bundle.mu_f1_smooth = 1.0;  // Q >= I
      bundle.sedm_ok = true;
      bundle.bigsam_ok = true;

      bundle.x0.assign(dim, 0.0);
      if (!spec.x0.empty()) bundle.x0 = spec.x0;
      return bundle;
    }
  }

  // Generic assembly for the quadratic / l1 uppers over an unconstrained
  // lower level.
  BilevelProblem p;
  p.f2 = f2;
  detail::attach_upper(p, spec.upper, spec.upper_in_f1, g2, dim);
  p.known.cost2_star = spec.cost2_ref ? spec.cost2_ref : cost2_star;
  p.known.cost1_inf = 0.0;  // both uppers vanish at the origin
  p.known.cost1_star = spec.cost1_ref;
  if (spec.kind == ProblemSpec::Kind::line) {
    // Analytic optima on the line a'x = rhs.
    const double a2 = dot(spec.line_a, spec.line_a);
    if (spec.upper == ProblemSpec::Upper::sqnorm) {
      p.known.cost1_star = 0.5 * spec.line_rhs * spec.line_rhs / a2;
    } else {
      p.known.cost1_star =
          std::abs(spec.line_rhs) / norm_inf(spec.line_a);
    }
  }
  bundle.L_f1_prox = (spec.upper == ProblemSpec::Upper::sqnorm &&
                      spec.upper_in_f1)
                         ? 1.0
                         : 0.0;

  if (spec.upper == ProblemSpec::Upper::sqnorm) {
    BilevelProblem ps;
    ps.f2 = f2;
    detail::attach_upper(ps, spec.upper, /*in_f1=*/true, g2, dim);
    ps.known = p.known;
    bundle.smooth_form = std::move(ps);
    bundle.L_f1_smooth = 1.0;
    bundle.mu_f1_smooth = 1.0;
    bundle.sedm_ok = true;  // g1 == 0 and g2 an indicator (whole space)
    bundle.bigsam_ok = true;
    if (spec.kind == ProblemSpec::Kind::line) bundle.i3d_ok = true;
  }

  bundle.prox_form = std::move(p);
  bundle.x0.assign(dim, 0.0);
  if (!spec.x0.empty()) bundle.x0 = spec.x0;
  return bundle;
}

}  // namespace bilevel
