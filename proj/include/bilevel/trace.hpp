#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace bilevel {

/// One per-iteration metrics row. grad_f2_evals is strictly increasing
/// across the records of a run; backtracks_cum is nondecreasing.
struct TraceRecord {
  std::int64_t k = 0;
  std::int64_t grad_f2_evals = 0;
  std::int64_t f_value_evals = 0;
  std::int64_t backtracks_cum = 0;
  double alpha = 0.0;
  double sigma = 0.0;
  double cost1_gap = std::numeric_limits<double>::quiet_NaN();
  double lower_resid = std::numeric_limits<double>::quiet_NaN();
  double time_s = 0.0;
};

inline constexpr const char* kTraceHeader =
    "k,grad_f2_evals,f_value_evals,backtracks_cum,alpha,sigma,cost1_gap,"
    "lower_resid,time_s";

inline void write_trace_row(std::ostream& out, const TraceRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "%lld,%lld,%lld,%lld,%.17g,%.17g,%.17g,%.17g,%.6f",
                static_cast<long long>(r.k),
                static_cast<long long>(r.grad_f2_evals),
                static_cast<long long>(r.f_value_evals),
                static_cast<long long>(r.backtracks_cum), r.alpha, r.sigma,
                r.cost1_gap, r.lower_resid, r.time_s);
  out << buf << '\n';
}

/// Records every iteration up to 1000, then every iteration that crosses a
/// 1.05 geometric grid. Keeps desk-scale files while preserving the shape of
/// the convergence curves.
class TraceCadence {
 public:
  bool should_record(std::int64_t k) {
    if (k <= dense_until_) return true;
    if (static_cast<double>(k) >= next_) {
      while (next_ <= static_cast<double>(k))
        next_ = std::max(next_ * 1.05, next_ + 1.0);
      return true;
    }
    return false;
  }

 private:
  std::int64_t dense_until_ = 1000;
  double next_ = 1050.0;
};

struct RunReport {
  std::string solver;
  std::string problem;
  std::vector<double> x_head;  // first <= 8 components of the final iterate
  double x_norm = 0.0;
  std::int64_t iterations = 0;
  std::int64_t grad_f1_evals = 0;
  std::int64_t grad_f2_evals = 0;
  std::int64_t prox_evals = 0;
  std::int64_t f_value_evals = 0;
  std::int64_t backtracks = 0;
  // budget_gradevals | budget_iters | budget_time | tolerance | error(<kind>)
  std::string termination;
  double final_cost1 = std::numeric_limits<double>::quiet_NaN();
  double final_cost2 = std::numeric_limits<double>::quiet_NaN();
  double final_gap = std::numeric_limits<double>::quiet_NaN();
  std::string trace_path;
  std::map<std::string, std::string> config_echo;
};

}  // namespace bilevel
