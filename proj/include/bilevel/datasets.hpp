#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bilevel/errors.hpp"
#include "bilevel/matrix.hpp"
#include "bilevel/oracles.hpp"
#include "bilevel/vec.hpp"

namespace bilevel {

/// Sparse design matrix plus binary labels. File labels in {-1, 0} map to 0
/// and {+1, 1} map to 1. An optional bias column of ones can be absorbed as
/// the last feature.
struct SparseDataset {
  CsrMatrix x;  // m rows, n features (0-based columns)
  Vec labels;   // in {0, 1}
  bool bias_absorbed = false;

  int rows() const { return x.rows; }
  int cols() const { return x.cols; }
};

/// Parses the "label idx:val idx:val ..." text format with strictly
/// increasing 1-based indices per line. Blank lines are skipped and '#'
/// starts a comment.
inline SparseDataset parse_libsvm(std::istream& in, bool add_bias = false) {
  SparseDataset d;
  d.x.rows = 0;
  int max_col = -1;
  std::string line;
  long long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;  // blank

    double label;
    try {
      std::size_t used = 0;
      label = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ParseError("bad label '" + tok + "'", lineno);
    }
    if (label == -1.0 || label == 0.0) {
      label = 0.0;
    } else if (label == 1.0) {
      label = 1.0;
    } else {
      throw ParseError("label must be -1, 0 or +1", lineno);
    }

    int prev_idx = 0;  // 1-based; indices must strictly increase
    while (ls >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos)
        throw ParseError("expected idx:val, got '" + tok + "'", lineno);
      int idx;
      double val;
      try {
        std::size_t u1 = 0, u2 = 0;
        idx = std::stoi(tok.substr(0, colon), &u1);
        val = std::stod(tok.substr(colon + 1), &u2);
        if (u1 != colon || u2 != tok.size() - colon - 1)
          throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError("malformed token '" + tok + "'", lineno);
      }
      if (idx <= prev_idx)
        throw ParseError("feature indices not strictly increasing", lineno);
      prev_idx = idx;
      d.x.col.push_back(idx - 1);
      d.x.val.push_back(val);
      max_col = std::max(max_col, idx - 1);
    }
    d.x.row_ptr.push_back(static_cast<std::int64_t>(d.x.col.size()));
    d.labels.push_back(label);
    ++d.x.rows;
  }
  d.x.cols = max_col + 1;

  if (add_bias) {
    CsrMatrix with_bias;
    with_bias.rows = d.x.rows;
    with_bias.cols = d.x.cols + 1;
    for (int i = 0; i < d.x.rows; ++i) {
      for (std::int64_t k = d.x.row_ptr[i]; k < d.x.row_ptr[i + 1]; ++k) {
        with_bias.col.push_back(d.x.col[k]);
        with_bias.val.push_back(d.x.val[k]);
      }
      with_bias.col.push_back(d.x.cols);
      with_bias.val.push_back(1.0);
      with_bias.row_ptr.push_back(static_cast<std::int64_t>(with_bias.col.size()));
    }
    d.x = std::move(with_bias);
    d.bias_absorbed = true;
  }
  return d;
}

inline void serialize_libsvm(const SparseDataset& d, std::ostream& out) {
  char buf[64];
  for (int i = 0; i < d.x.rows; ++i) {
    out << static_cast<int>(d.labels[i]);
    for (std::int64_t k = d.x.row_ptr[i]; k < d.x.row_ptr[i + 1]; ++k) {
      std::snprintf(buf, sizeof(buf), " %d:%.17g", d.x.col[k] + 1, d.x.val[k]);
      out << buf;
    }
    out << '\n';
  }
}

/// Synthetic two-class data: features uniform in [-1, 1], labels from a
/// random separating direction with 10% flipped. Deterministic from seed.
inline SparseDataset gen_logistic_synth(int m, int n, std::uint64_t seed) {
  Rng rng(seed);
  Vec w(n);
  for (double& v : w) v = rng.normal();
  SparseDataset d;
  d.x.rows = m;
  d.x.cols = n;
  for (int i = 0; i < m; ++i) {
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      const double v = rng.uniform(-1.0, 1.0);
      d.x.col.push_back(j);
      d.x.val.push_back(v);
      z += v * w[j];
    }
    d.x.row_ptr.push_back(static_cast<std::int64_t>(d.x.col.size()));
    double y = z > 0.0 ? 1.0 : 0.0;
    if (rng.uniform() < 0.1) y = 1.0 - y;
    d.labels.push_back(y);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Logistic loss oracle. With z = Ax and labels y in {0,1},
//   f(x) = (1/m) sum_i [ log(1 + exp(z_i)) - y_i z_i ]
//   grad f(x) = (1/m) A'(s(z) - y),  s the sigmoid,
// both in overflow-safe form.

inline double softplus(double z) {
  // log(1 + e^z) = max(z, 0) + log1p(exp(-|z|))
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

inline double sigmoid(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct LogisticBuild {
  SmoothOracle f2;
  double L_f2 = 0.0;  // ||A||^2 / (4m)
};

inline LogisticBuild build_logistic(const SparseDataset& data) {
  auto mat = std::make_shared<CsrMatrix>(data.x);
  auto y = std::make_shared<Vec>(data.labels);
  const int m = data.rows();
  const int n = data.cols();

  LogisticBuild b;
  b.f2.dim = n;
  b.f2.grad = [mat, y, m](const Vec& x, Vec& g) {
    Vec z;
    mat->apply(x, z);
    for (int i = 0; i < mat->rows; ++i) z[i] = sigmoid(z[i]) - (*y)[i];
    mat->apply_t(z, g);
    const double inv_m = 1.0 / m;
    for (double& v : g) v *= inv_m;
  };
  b.f2.value = [mat, y, m](const Vec& x) {
    Vec z;
    mat->apply(x, z);
    double s = 0.0;
    for (int i = 0; i < mat->rows; ++i) s += softplus(z[i]) - (*y)[i] * z[i];
    return s / m;
  };
  b.L_f2 = sqnorm_estimate(*mat, n) / (4.0 * m);
  return b;
}

}  // namespace bilevel
