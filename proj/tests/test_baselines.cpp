#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "bilevel/baselines.hpp"
#include "bilevel/datasets.hpp"
#include "bilevel/problems.hpp"
#include "bilevel/schedule.hpp"
#include "test_util.hpp"

using namespace bilevel;

namespace {

// f2 = (1/2)||x||^2 with f1 == 0 over the whole space.
BilevelProblem sq_problem(int dim) {
  BilevelProblem p;
  p.f1 = zero_smooth(dim);
  p.f2.dim = dim;
  p.f2.grad = [](const Vec& x, Vec& g) { g = x; };
  p.f2.value = [](const Vec& x) { return 0.5 * dot(x, x); };
  p.g1 = zero_prox(dim);
  p.g2 = zero_prox(dim);
  p.composite = CompositeProxStrategy::G1Zero();
  return p;
}

}  // namespace

TEST_CASE("sedm: exact quadratic accepts the full step") {
  // On (1/2)||x||^2 the Armijo test at stepsize alpha reads
  // alpha <= 2(1 - nu)/L, so the full step 1/L is accepted for nu <= 1/2.
  BilevelProblem p = sq_problem(3);
  SedmConfig cfg;
  cfg.alpha_max = 1.0;  // 1/L
  cfg.nu = 0.25;
  SedmState st = sedm_init(p, {1.0, -2.0, 0.5}, 1.0);
  PenaltySchedule sched = PenaltySchedule::harmonic(1.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    const int m = sedm_step(p, st, sched.next(), cfg);
    CHECK(m == 0);
    // x+ = (1 - alpha) x with alpha = 1 -> jumps to the origin
    CHECK(norm2(st.x_cur) == 0.0);
  }
}

TEST_CASE("sedm: gradient step is projected onto the orthant") {
  BilevelProblem p = sq_problem(1);
  p.g2 = nonneg_prox(1);
  SedmConfig cfg;
  cfg.alpha_max = 2.0;  // overshoots through the origin
  cfg.nu = 0.1;
  SedmState st = sedm_init(p, {1.0}, 1.0);
  sedm_step(p, st, 1.0, cfg);
  CHECK(st.x_cur == Vec{0.0});  // 1 - 2*1 = -1, projected to 0
}

TEST_CASE("sedm: oversized alpha_max forces backtracks on a logistic cost") {
  SparseDataset d = gen_logistic_synth(30, 1, 4);
  LogisticBuild lb = build_logistic(d);
  BilevelProblem p;
  p.f1 = zero_smooth(1);
  p.f2 = lb.f2;
  p.g1 = zero_prox(1);
  p.g2 = zero_prox(1);
  p.composite = CompositeProxStrategy::G1Zero();

  SedmConfig cfg;
  cfg.alpha_max = 10.0 / lb.L_f2;
  SedmState st = sedm_init(p, {0.0}, 1.0);
  PenaltySchedule sched = PenaltySchedule::harmonic(1.0, 1.0);
  const int m0 = sedm_step(p, st, sched.next(), cfg);
  CHECK(m0 >= 1);
}

TEST_CASE("sedm: accepted step satisfies the Armijo inequality post hoc") {
  ProblemSpec spec;
  spec.kind = ProblemSpec::Kind::lininverse;
  spec.m = 8;
  spec.n = 12;
  spec.nstar = 2;
  spec.seed = 11;
  ProblemBundle bundle = build_problem(spec);
  const BilevelProblem& p = *bundle.smooth_form;

  SedmConfig cfg;
  cfg.alpha_max = 10.0 / bundle.L_f2;
  PenaltySchedule sched = PenaltySchedule::harmonic(1.0, 1.0);
  SedmState st = sedm_init(p, bundle.x0, sched.current());
  for (int k = 0; k < 300; ++k) {
    const double sigma_next = sched.next();
    Vec x_before = st.x_cur;
    sedm_step(p, st, sigma_next, cfg);
    // recompute both sides of the accepted inequality
    auto fk = [&](const Vec& x) {
      return sigma_next * p.f1.value(x) + p.f2.value(x);
    };
    Vec g1(x_before.size()), g2(x_before.size());
    p.f1.grad(x_before, g1);
    p.f2.grad(x_before, g2);
    double inner = 0.0;
    for (std::size_t i = 0; i < x_before.size(); ++i)
      inner += (sigma_next * g1[i] + g2[i]) * (st.x_cur[i] - x_before[i]);
    CHECK(fk(st.x_cur) <= fk(x_before) + cfg.nu * inner + 1e-12);
  }
}

TEST_CASE("sedm requires the indicator structure") {
  BilevelProblem p = sq_problem(1);
  p.g1 = l1_prox(1);
  CHECK_THROWS_AS(sedm_init(p, {0.0}, 1.0), StrategyMismatch);
}

TEST_CASE("bigsam: combination weights") {
  ProblemSpec spec;  // min-norm line problem, smooth form
  ProblemBundle bundle = build_problem(spec);
  const BilevelProblem& p = *bundle.smooth_form;
  BigsamConfig cfg;  // L1 = mu1 = 1 -> a1 = 1; L2 from bundle
  cfg.L_f2 = bundle.L_f2;

  SUBCASE("sigma = 1 gives the pure upper step") {
    BigsamState st = bigsam_init(p, {0.4, -0.2}, 1.0);
    bigsam_step(p, st, 1.0, cfg);
    // x1 = x - 1*x = 0
    CHECK(norm2(st.x_cur) == 0.0);
  }
  SUBCASE("sigma -> 0 gives the pure lower prox-gradient step") {
    BigsamState st = bigsam_init(p, {0.4, -0.2}, 1.0);
    Vec x = st.x_cur;
    Vec g2(2);
    p.f2.grad(x, g2);
    const double a2 = cfg.a2();
    bigsam_step(p, st, 0.0, cfg);
    for (int i = 0; i < 2; ++i)
      CHECK(st.x_cur[i] == x[i] - a2 * g2[i]);
  }
}

TEST_CASE("bigsam: three-line evaluation") {
  // f1 = (1/2)||x||^2, f2 = (1/2)||x - (2,2)||^2, g2 = 0, a1 = a2 = 1,
  // sigma = 1/2, from the origin: x1 = 0, x2 = (2,2), x+ = (1,1).
  BilevelProblem p;
  p.f1.dim = 2;
  p.f1.grad = [](const Vec& x, Vec& g) { g = x; };
  p.f2.dim = 2;
  p.f2.grad = [](const Vec& x, Vec& g) { g = {x[0] - 2.0, x[1] - 2.0}; };
  p.g1 = zero_prox(2);
  p.g2 = zero_prox(2);
  p.composite = CompositeProxStrategy::G1Zero();

  BigsamConfig cfg;
  cfg.alpha1 = 1.0;
  cfg.alpha2 = 1.0;
  BigsamState st = bigsam_init(p, {0.0, 0.0}, 1.0);
  bigsam_step(p, st, 0.5, cfg);
  CHECK(st.x_cur == Vec{1.0, 1.0});
}

TEST_CASE("bigsam iterate interpolates the two half-steps exactly") {
  ProblemSpec spec;
  spec.kind = ProblemSpec::Kind::lininverse;
  spec.m = 6;
  spec.n = 9;
  spec.nstar = 2;
  spec.seed = 3;
  ProblemBundle bundle = build_problem(spec);
  const BilevelProblem& p = *bundle.smooth_form;
  BigsamConfig cfg;
  cfg.L_f2 = bundle.L_f2;

  BigsamState st = bigsam_init(p, bundle.x0, 1.0);
  PenaltySchedule sched = PenaltySchedule::harmonic(1.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    Vec x = st.x_cur;
    const double sigma = sched.next();
    Vec g1(x.size()), g2(x.size());
    p.f1.grad(x, g1);
    p.f2.grad(x, g2);
    bigsam_step(p, st, sigma, cfg);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double x1 = x[i] - cfg.a1() * g1[i];
      const double x2 = x[i] - cfg.a2() * g2[i];  // g2 prox is the identity
      CHECK(st.x_cur[i] == sigma * x1 + (1.0 - sigma) * x2);
    }
  }
}

TEST_CASE("bigsam rejects nonsmooth uppers and sigma > 1") {
  BilevelProblem p = sq_problem(1);
  p.g1 = l1_prox(1);
  CHECK_THROWS_AS(bigsam_init(p, {0.0}, 1.0), StrategyMismatch);
  BilevelProblem q = sq_problem(1);
  CHECK_THROWS_AS(bigsam_init(q, {0.0}, 1.5), Error);
}

TEST_CASE("iterative-3D single steps") {
  SUBCASE("identity operator contracts to the origin") {
    BilevelProblem p = sq_problem(1);  // grad f2 = x = A'(Ax - 0) with A = I
    I3dState st = i3d_init({1.0}, 0.0, 1.0);
    i3d_step(p, st, 0.0);
    CHECK(st.x_cur == Vec{0.0});
  }
  SUBCASE("hand-evaluated update") {
    // A = diag(1,2), b = (1,2), gamma = 0.2, sigma = 0.1, x = 0:
    // grad f2 = A'(Ax - b) = (-1, -4); x+ = -0.2*(-1,-4) = (0.2, 0.8).
    auto A = std::make_shared<DenseMatrix>(2, 2);
    A->at(0, 0) = 1.0;
    A->at(1, 1) = 2.0;
    auto b = std::make_shared<Vec>(Vec{1.0, 2.0});
    BilevelProblem p;
    p.f1 = zero_smooth(2);
    p.f2.dim = 2;
    p.f2.grad = [A, b](const Vec& x, Vec& g) {
      Vec r;
      A->apply(x, r);
      for (int i = 0; i < 2; ++i) r[i] -= (*b)[i];
      A->apply_t(r, g);
    };
    p.g1 = zero_prox(2);
    p.g2 = zero_prox(2);
    p.composite = CompositeProxStrategy::G1Zero();

    I3dState st = i3d_init({0.0, 0.0}, 0.1, 0.2);
    i3d_step(p, st, 0.1);
    CHECK(st.x_cur[0] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(st.x_cur[1] == doctest::Approx(0.8).epsilon(1e-15));
  }
  SUBCASE("zero penalty reduces to gradient descent on the residual") {
    ProblemSpec spec;
    spec.kind = ProblemSpec::Kind::lininverse;
    spec.m = 5;
    spec.n = 7;
    spec.nstar = 2;
    spec.seed = 9;
    ProblemBundle bundle = build_problem(spec);
    const BilevelProblem& p = *bundle.smooth_form;
    const double gamma = 0.5 / bundle.L_f2;

    I3dState st = i3d_init(bundle.x0, 0.0, gamma);
    Vec x = bundle.x0;
    for (int k = 0; k < 50; ++k) {
      i3d_step(p, st, 0.0);
      Vec g(x.size());
      p.f2.grad(x, g);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] -= gamma * g[i];
      for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(st.x_cur[i] == doctest::Approx(x[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("iterative-3D trajectory stays in range(A')") {
  ProblemSpec spec;
  spec.kind = ProblemSpec::Kind::lininverse;
  spec.m = 6;
  spec.n = 15;
  spec.nstar = 3;
  spec.seed = 21;
  LinearInverseInstance inst = gen_linear_inverse(6, 15, 3, 21);
  ProblemBundle bundle = build_problem(spec);
  const BilevelProblem& p = *bundle.smooth_form;

  // Orthonormal basis of range(A') from the thin SVD.
  Eigen::MatrixXd A = testutil::to_eigen(inst.A);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A.transpose(),
                                        Eigen::ComputeThinU);
  Eigen::MatrixXd V = svd.matrixU();  // 15 x 6

  PenaltySchedule sched = PenaltySchedule::square_summable(1.0, 1.0);
  I3dState st = i3d_init(bundle.x0, sched.current(), 1.0 / (bundle.L_f2 + 1));
  for (int k = 0; k < 500; ++k) {
    const double sigma = st.sigma_cur;
    i3d_step(p, st, sigma);
    st.sigma_cur = sched.next();
    Eigen::VectorXd x = testutil::to_eigen(st.x_cur);
    const double out_of_range = (x - V * (V.transpose() * x)).norm();
    CHECK(out_of_range <= 1e-10 * (1.0 + x.norm()));
  }
}

TEST_CASE("reference pgm matches the closed-form linear contraction") {
  // On f_sigma = (sigma/2)||x||^2 + (1/2)||x - z||^2 with g = 0 the update
  // is affine: x+ = (1 - a(1+sigma))x + a z.
  const double sigma = 0.5, alpha = 0.4;
  const Vec z = {2.0, -1.0};
  BilevelProblem p;
  p.f1.dim = 2;
  p.f1.grad = [](const Vec& x, Vec& g) { g = x; };
  p.f2.dim = 2;
  p.f2.grad = [z](const Vec& x, Vec& g) {
    g = {x[0] - z[0], x[1] - z[1]};
  };
  p.g1 = zero_prox(2);
  p.g2 = zero_prox(2);
  p.composite = CompositeProxStrategy::G1Zero();

  const auto traj = reference_pgm(p, {1.0, 1.0}, sigma, alpha, 100);
  Vec x = {1.0, 1.0};
  for (int k = 0; k <= 100; ++k) {
    CHECK(std::abs(traj[k][0] - x[0]) <= 1e-12);
    CHECK(std::abs(traj[k][1] - x[1]) <= 1e-12);
    for (int i = 0; i < 2; ++i)
      x[i] = x[i] - alpha * (sigma * x[i] + (x[i] - z[i]));
  }
}
