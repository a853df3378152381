#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "bilevel/errors.hpp"

namespace bilevel {

/// Generator of inverse-penalty sequences sigma_k. Every tag keeps the
/// sequence nonincreasing, strictly positive, and inside the per-step box
/// sigma_{k+1} >= (3/4) sigma_k.
///
/// The plain harmonic law c/(k+1) violates the box at k = 0, 1 (ratios 1/2
/// and 2/3); the clamp max(3/4 sigma_k, c/(k+2)) is active only for a finite
/// prefix and leaves the asymptotic law untouched.
///
/// A schedule instance is a single-consumer stateful iterator; distinct runs
/// use distinct instances.
struct PenaltySchedule {
  enum class Kind { harmonic_clamped, square_summable, constant_then_harmonic };

  Kind kind = Kind::harmonic_clamped;
  double c = 1.0;
  std::int64_t k0 = 0;  // constant prefix length for constant_then_harmonic

  std::int64_t k = 0;    // current index
  double sigma = 1.0;    // current value sigma_k

  static PenaltySchedule harmonic(double c = 1.0, double sigma0 = 1.0) {
    PenaltySchedule s;
    s.kind = Kind::harmonic_clamped;
    s.c = c;
    s.sigma = sigma0;
    return s;
  }

  /// Square-summable decay c/(k+1)^2 (clamped to the box). Not slowly
  /// controlled; only legal for the iterative-3D baseline.
  static PenaltySchedule square_summable(double c = 1.0, double sigma0 = 1.0) {
    PenaltySchedule s;
    s.kind = Kind::square_summable;
    s.c = c;
    s.sigma = sigma0;
    return s;
  }

  static PenaltySchedule constant_then_harmonic(double c, std::int64_t k0,
                                                double sigma0) {
    PenaltySchedule s;
    s.kind = Kind::constant_then_harmonic;
    s.c = c;
    s.k0 = k0;
    s.sigma = sigma0;
    return s;
  }

  /// sigma_k == sigma0 for the whole run.
  static PenaltySchedule constant(double sigma0) {
    return constant_then_harmonic(sigma0, INT64_MAX, sigma0);
  }

  double current() const { return sigma; }

  /// Advances to index k+1 and returns sigma_{k+1} in [3/4 sigma_k, sigma_k].
  double next() {
    double target;
    switch (kind) {
      case Kind::harmonic_clamped:
        target = c / static_cast<double>(k + 2);
        break;
      case Kind::square_summable: {
        const double d = static_cast<double>(k + 2);
        target = c / (d * d);
        break;
      }
      case Kind::constant_then_harmonic:
        if (k < k0) {
          target = sigma;
        } else {
          target = c / static_cast<double>(k + 2 - k0);
        }
        break;
      default:
        throw UnsupportedKind("unknown schedule kind");
    }
    sigma = std::min(sigma, std::max(0.75 * sigma, target));
    ++k;
    return sigma;
  }
};

/// Numerical diagnostics of a sigma sequence against the slow-control
/// requirements: monotone decrease, the 3/4 box, decay to zero, and the
/// consecutive ratio tending to one. Index fields give the first violation
/// (the box index k refers to the transition sigma_k -> sigma_{k+1}), or -1.
struct SlowControlReport {
  bool positive = true;
  bool monotone = true;
  bool box = true;
  bool to_zero = true;
  bool ratio_to_one = true;
  std::int64_t first_bad_positive = -1;
  std::int64_t first_bad_monotone = -1;
  std::int64_t first_bad_box = -1;

  bool pass() const {
    return positive && monotone && box && to_zero && ratio_to_one;
  }
};

inline SlowControlReport check_sigma_sequence(const std::vector<double>& s) {
  SlowControlReport r;
  const std::int64_t n = static_cast<std::int64_t>(s.size());
  for (std::int64_t i = 0; i < n; ++i) {
    if (!(s[i] > 0.0)) {
      r.positive = false;
      r.first_bad_positive = i;
      break;
    }
  }
  for (std::int64_t i = 0; i + 1 < n; ++i) {
    if (s[i + 1] > s[i] && r.monotone) {
      r.monotone = false;
      r.first_bad_monotone = i;
    }
    if (s[i + 1] < 0.75 * s[i] && r.box) {
      r.box = false;
      r.first_bad_box = i;
    }
    if (!r.monotone && !r.box) break;
  }
  if (n >= 2 && r.positive) {
    const double nn = static_cast<double>(n);
    // Decay trend: the tail must have shrunk roughly harmonically or faster.
    r.to_zero = s[n - 1] <= s[0] * std::min(0.2, 20.0 / nn);
    const double ratio = s[n - 1] / s[n - 2];
    r.ratio_to_one = std::abs(ratio - 1.0) <= std::max(1e-4, 20.0 / nn);
  }
  return r;
}

/// Walks a copy of the schedule over the horizon and checks the sequence.
inline SlowControlReport validate_slow_control(PenaltySchedule schedule,
                                               std::int64_t horizon) {
  std::vector<double> s;
  s.reserve(static_cast<std::size_t>(horizon));
  s.push_back(schedule.current());
  for (std::int64_t i = 1; i < horizon; ++i) s.push_back(schedule.next());
  return check_sigma_sequence(s);
}

}  // namespace bilevel
