#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bilevel/errors.hpp"
#include "bilevel/vec.hpp"

namespace bilevel {

/// Row-major dense matrix.
struct DenseMatrix {
  int rows = 0, cols = 0;
  std::vector<double> a;

  DenseMatrix() = default;
  DenseMatrix(int r, int c) : rows(r), cols(c), a(std::size_t(r) * c, 0.0) {}

  double& at(int i, int j) { return a[std::size_t(i) * cols + j]; }
  double at(int i, int j) const { return a[std::size_t(i) * cols + j]; }

  void apply(const Vec& x, Vec& y) const {  // y = A x
    y.assign(rows, 0.0);
    for (int i = 0; i < rows; ++i) {
      const double* row = &a[std::size_t(i) * cols];
      double s = 0.0;
      for (int j = 0; j < cols; ++j) s += row[j] * x[j];
      y[i] = s;
    }
  }

  void apply_t(const Vec& y, Vec& x) const {  // x = A' y
    x.assign(cols, 0.0);
    for (int i = 0; i < rows; ++i) {
      const double* row = &a[std::size_t(i) * cols];
      const double yi = y[i];
      for (int j = 0; j < cols; ++j) x[j] += row[j] * yi;
    }
  }
};

/// Compressed sparse rows; column indices strictly increasing within a row.
struct CsrMatrix {
  int rows = 0, cols = 0;
  std::vector<std::int64_t> row_ptr{0};
  std::vector<int> col;
  std::vector<double> val;

  void apply(const Vec& x, Vec& y) const {
    y.assign(rows, 0.0);
    for (int i = 0; i < rows; ++i) {
      double s = 0.0;
      for (std::int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
        s += val[k] * x[col[k]];
      y[i] = s;
    }
  }

  void apply_t(const Vec& y, Vec& x) const {
    x.assign(cols, 0.0);
    for (int i = 0; i < rows; ++i)
      for (std::int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
        x[col[k]] += val[k] * y[i];
  }
};

/// Estimate of ||A||^2 = lambda_max(A'A) by power iteration: 200 iterations
/// max, relative tolerance 1e-8, deterministic start.
template <typename Op>
double sqnorm_estimate(const Op& A, int cols, std::uint64_t seed = 0x5eed) {
  Rng rng(seed);
  Vec v(cols);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  double nv = norm2(v);
  if (nv == 0.0) {
    v[0] = 1.0;
    nv = 1.0;
  }
  for (double& x : v) x /= nv;

  Vec Av, AtAv;
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    A.apply(v, Av);
    A.apply_t(Av, AtAv);
    const double lambda_new = dot(v, AtAv);
    const double nn = norm2(AtAv);
    if (nn == 0.0) return 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = AtAv[i] / nn;
    if (it > 0 && std::abs(lambda_new - lambda) <= 1e-8 * std::abs(lambda_new)) {
      lambda = lambda_new;
      break;
    }
    lambda = lambda_new;
  }
  return lambda;
}

// ---------------------------------------------------------------------------
// Discrete gradient operator L: (Lx)_i = x_{i+1} - x_i, an (n-1) x n map.
// Q1 = L'L is applied matrix-free.

inline void apply_discrete_gradient(const Vec& x, Vec& y) {
  const std::size_t n = x.size();
  y.assign(n > 0 ? n - 1 : 0, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) y[i] = x[i + 1] - x[i];
}

inline void apply_discrete_gradient_t(const Vec& y, Vec& x) {
  const std::size_t n = y.size() + 1;
  x.assign(n, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    x[i] -= y[i];
    x[i + 1] += y[i];
  }
}

/// y = Q1 x = L'(L x).
inline void apply_q1(const Vec& x, Vec& y) {
  Vec t;
  apply_discrete_gradient(x, t);
  apply_discrete_gradient_t(t, y);
}

/// Operator view of Q1 for the power iteration.
struct Q1Op {
  void apply(const Vec& x, Vec& y) const { apply_q1(x, y); }
  void apply_t(const Vec& y, Vec& x) const { apply_q1(y, x); }  // symmetric
};

// ---------------------------------------------------------------------------
// Plain binary layout: two little-endian uint64 (rows, cols), then
// rows*cols little-endian float64 in row-major order. Vectors are stored
// with cols = 1.

inline void save_matrix(const std::string& path, const DenseMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  const std::uint64_t dims[2] = {static_cast<std::uint64_t>(m.rows),
                                 static_cast<std::uint64_t>(m.cols)};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(m.a.data()),
            static_cast<std::streamsize>(m.a.size() * sizeof(double)));
  if (!out) throw DataError("short write to " + path);
}

inline DenseMatrix load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::uint64_t dims[2];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in) throw DataError("truncated header in " + path);
  DenseMatrix m(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
  in.read(reinterpret_cast<char*>(m.a.data()),
          static_cast<std::streamsize>(m.a.size() * sizeof(double)));
  if (!in) throw DataError("truncated data in " + path);
  return m;
}

inline void save_vector(const std::string& path, const Vec& v) {
  DenseMatrix m(static_cast<int>(v.size()), 1);
  m.a = v;
  save_matrix(path, m);
}

inline Vec load_vector(const std::string& path) {
  DenseMatrix m = load_matrix(path);
  if (m.cols != 1) throw DataError(path + " is not a vector");
  return m.a;
}

}  // namespace bilevel
