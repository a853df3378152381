#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "bilevel/adabim.hpp"
#include "bilevel/moduli.hpp"
#include "bilevel/vec.hpp"

using namespace bilevel;

namespace {

// Moduli of a single smooth f treated as f2 (f1 == 0, sigma arbitrary).
LocalModuli moduli_of(const std::function<void(const Vec&, Vec&)>& grad,
                      const Vec& x_prev, const Vec& x_cur, double sigma = 1.0) {
  Vec zp(x_prev.size(), 0.0), zc(x_cur.size(), 0.0);
  Vec gp, gc;
  grad(x_prev, gp);
  grad(x_cur, gc);
  return local_moduli(x_prev, x_cur, zp, gp, zc, gc, sigma);
}

}  // namespace

TEST_CASE("identity gradient gives unit moduli") {
  auto m = moduli_of([](const Vec& x, Vec& g) { g = x; }, {1.0, 1.0},
                     {0.0, 0.0});
  CHECK(m.l == 1.0);
  CHECK(m.c == 1.0);
}

TEST_CASE("diagonal quadratic") {
  // grad = diag(1,4)x between (1,1) and (0,0): l = 5/2, c = 17/5.
  auto m = moduli_of(
      [](const Vec& x, Vec& g) {
        g = {x[0], 4.0 * x[1]};
      },
      {1.0, 1.0}, {0.0, 0.0});
  CHECK(m.l == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(m.c == doctest::Approx(3.4).epsilon(1e-15));
}

TEST_CASE("affine gradient zeroes both moduli") {
  auto m = moduli_of([](const Vec&, Vec& g) { g = {3.0, -1.0}; }, {1.0, 2.0},
                     {0.0, 0.0});
  CHECK(m.l == 0.0);
  CHECK(m.c == 0.0);
}

TEST_CASE("coincident iterates return zero moduli, strict mode throws") {
  Vec x = {1.0, 2.0};
  Vec z(2, 0.0), g = {1.0, 0.0};
  auto m = local_moduli(x, x, z, g, z, g, 1.0);
  CHECK(m.l == 0.0);
  CHECK(m.c == 0.0);
  CHECK_THROWS_AS(local_moduli(x, x, z, g, z, g, 1.0, /*strict=*/true),
                  DegenerateStep);
}

TEST_CASE("moduli identities on random convex quadratics") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    // Random SPD 3x3 quadratics for f1 and f2 via M'M.
    double a1[3][3], a2[3][3];
    auto fill = [&](double m[3][3]) {
      double b[3][3];
      for (auto& row : b)
        for (double& v : row) v = rng.uniform(-1.0, 1.0);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          m[i][j] = 0.0;
          for (int k = 0; k < 3; ++k) m[i][j] += b[k][i] * b[k][j];
        }
    };
    fill(a1);
    fill(a2);
    auto apply = [](double m[3][3], const Vec& x, Vec& g) {
      g.assign(3, 0.0);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) g[i] += m[i][j] * x[j];
    };

    Vec xp(3), xc(3);
    for (int i = 0; i < 3; ++i) {
      xp[i] = rng.uniform(-2.0, 2.0);
      xc[i] = rng.uniform(-2.0, 2.0);
    }
    const double sigma = rng.uniform(0.1, 2.0);
    Vec g1p, g1c, g2p, g2c;
    apply(a1, xp, g1p);
    apply(a1, xc, g1c);
    apply(a2, xp, g2p);
    apply(a2, xc, g2c);

    const LocalModuli m = local_moduli(xp, xc, g1p, g2p, g1c, g2c, sigma);

    // closing identity l = sigma*l1 + l2
    CHECK(m.l == doctest::Approx(sigma * m.l1 + m.l2).epsilon(1e-12));
    // ordering 0 <= l <= c
    CHECK(m.l >= 0.0);
    CHECK(m.l <= m.c * (1.0 + 1e-12));
    // ||d grad||^2 = c * l * ||d x||^2
    if (m.l > 0.0 && m.c > 0.0) {
      double dx2 = 0.0, gg = 0.0;
      for (int i = 0; i < 3; ++i) {
        const double dx = xp[i] - xc[i];
        const double dg =
            sigma * (g1p[i] - g1c[i]) + (g2p[i] - g2c[i]);
        dx2 += dx * dx;
        gg += dg * dg;
      }
      CHECK(gg == doctest::Approx(m.c * m.l * dx2).epsilon(1e-9));
    }
  }
}

TEST_CASE("stepsize initializer") {
  SUBCASE("constant penalty with equal stepsizes reduces to sqrt(2)*alpha") {
    LocalModuli m;
    m.l = 0.5;
    m.c = 0.9;  // alpha*c <= 1 -> curvature branch infinite
    const double a =
        stepsize_init(1.0, 1.0, 1.0, 1.0, 1.0, m, 1e9, 0.98);
    CHECK(a == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  }
  SUBCASE("curvature branch evaluates the closed form") {
    LocalModuli m;
    m.l = 1.0;
    m.c = 2.0;
    const double a =
        stepsize_init(1.0, 1.0, 1.0, 1.0, 1.0, m, 1e9, 0.98);
    // branch 1 = sqrt(2), branch 2 = 1/(2 sqrt(1*1*1)) = 0.5
    CHECK(a == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("alpha_max caps the result") {
    LocalModuli m;
    m.l = 0.5;
    m.c = 0.9;
    const double a = stepsize_init(1.0, 1.0, 1.0, 1.0, 1.0, m, 0.1, 0.98);
    CHECK(a == 0.1);
  }
  SUBCASE("penalty shift scales both branches") {
    LocalModuli m;
    m.l = 0.0;
    m.c = 0.0;
    // sigma_next = 3/4 sigma_cur -> shift 4/3 on branch 1
    const double a =
        stepsize_init(1.0, 1.0, 0.75, 1.0, 1.0, m, 1e9, 0.98);
    CHECK(a == doctest::Approx(std::sqrt(2.0) * 4.0 / 3.0).epsilon(1e-15));
  }
}
