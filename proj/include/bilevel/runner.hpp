#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "bilevel/adabim.hpp"
#include "bilevel/baselines.hpp"
#include "bilevel/config.hpp"
#include "bilevel/problems.hpp"
#include "bilevel/schedule.hpp"
#include "bilevel/stabim.hpp"
#include "bilevel/trace.hpp"

namespace bilevel {

struct Budgets {
  std::int64_t max_grad_evals = 100000;
  std::int64_t max_iters = std::numeric_limits<std::int64_t>::max();
  double wall_s = std::numeric_limits<double>::infinity();
};

/// Composite stopping rule: stop once the penalty is small and the scaled
/// step is small relative to the iterate. Budgets act as hard caps.
struct StopTol {
  double sigma_tol = 1e-6;
  double r_tol = 1e-8;
};

struct RunConfig {
  ProblemSpec problem;
  std::string solver = "adabim";

  std::string schedule_kind;  // empty -> per-solver default
  double schedule_c = 1.0;
  double sigma0 = 1.0;
  std::int64_t schedule_k0 = 0;

  Budgets budgets;
  StopTol tol;

  AdaBimOptions adabim;
  std::optional<double> stabim_L_f1, stabim_L_f2;
  double stabim_nu = 0.98;
  double sedm_alpha_max_factor = 1.0;
  double sedm_eta = 0.5, sedm_nu = 0.98;
  std::optional<double> bigsam_L_f1, bigsam_mu_f1, bigsam_L_f2;
  std::optional<double> bigsam_alpha1, bigsam_alpha2;
  double i3d_gamma = 0.0;
  std::optional<double> pgm_sigma, pgm_alpha;

  std::string out_dir = ".";

  static RunConfig from_kv(const KvConfig& kv);
};

inline ProblemSpec problem_spec_from_kv(const KvConfig& kv) {
  ProblemSpec spec;
  const std::string kind = kv.get_str("problem.kind", "line");
  if (kind == "line")
    spec.kind = ProblemSpec::Kind::line;
  else if (kind == "logistic")
    spec.kind = ProblemSpec::Kind::logistic;
  else if (kind == "lininverse")
    spec.kind = ProblemSpec::Kind::lininverse;
  else if (kind == "inteq")
    spec.kind = ProblemSpec::Kind::inteq;
  else
    throw ConfigError("unknown problem.kind '" + kind + "'");

  const std::string upper = kv.get_str("problem.upper", "sqnorm");
  if (upper == "sqnorm")
    spec.upper = ProblemSpec::Upper::sqnorm;
  else if (upper == "l1")
    spec.upper = ProblemSpec::Upper::l1;
  else
    throw ConfigError("unknown problem.upper '" + upper + "'");

  spec.upper_in_f1 = kv.get_bool("problem.upper_in_f1", false);
  spec.line_a = kv.get_vec("problem.line_a", spec.line_a);
  spec.line_rhs = kv.get_double("problem.line_rhs", spec.line_rhs);
  spec.data_path = kv.get_str("data.path", "");
  spec.add_bias = kv.get_bool("data.add_bias", false);
  spec.m = static_cast<int>(kv.get_int("problem.m", spec.m));
  spec.n = static_cast<int>(kv.get_int("problem.n", spec.n));
  spec.nstar = static_cast<int>(kv.get_int("problem.nstar", spec.nstar));
  spec.seed = static_cast<std::uint64_t>(
      kv.get_int("problem.seed", kv.get_int("seed", 42)));
  spec.inteq_kind = kv.get_str("problem.inteq_kind", spec.inteq_kind);
  if (kv.has("problem.cost1_ref"))
    spec.cost1_ref = kv.get_double("problem.cost1_ref", 0.0);
  if (kv.has("problem.cost2_ref"))
    spec.cost2_ref = kv.get_double("problem.cost2_ref", 0.0);
  spec.x0 = kv.get_vec("problem.x0", {});
  return spec;
}

inline RunConfig RunConfig::from_kv(const KvConfig& kv) {
  RunConfig rc;
  rc.problem = problem_spec_from_kv(kv);
  rc.solver = kv.get_str("solver.kind", "adabim");

  rc.schedule_kind = kv.get_str("schedule.kind", "");
  rc.schedule_c = kv.get_double("schedule.c", 1.0);
  rc.sigma0 = kv.get_double("schedule.sigma0", 1.0);
  rc.schedule_k0 = kv.get_int("schedule.k0", 0);

  rc.budgets.max_grad_evals = kv.get_int("budget.max_grad_evals", 100000);
  rc.budgets.max_iters =
      kv.get_int("budget.max_iters", std::numeric_limits<std::int64_t>::max());
  rc.budgets.wall_s = kv.get_double("budget.wall_s",
                                    std::numeric_limits<double>::infinity());
  if (rc.budgets.max_grad_evals <= 0 || rc.budgets.max_iters <= 0 ||
      !(rc.budgets.wall_s > 0.0))
    throw ConfigError("budgets must be positive");

  rc.tol.sigma_tol = kv.get_double("tol.sigma", 1e-6);
  rc.tol.r_tol = kv.get_double("tol.r", 1e-8);

  rc.adabim.nu = kv.get_double("adabim.nu", 0.98);
  rc.adabim.eta = kv.get_double("adabim.eta", 0.5);
  if (kv.has("adabim.alpha0"))
    rc.adabim.alpha0 = kv.get_double("adabim.alpha0", 1.0);
  if (kv.has("adabim.alpha_m1"))
    rc.adabim.alpha_m1 = kv.get_double("adabim.alpha_m1", 1.0);
  rc.adabim.alpha_max_factor = kv.get_double("adabim.alpha_max_factor", 1e6);
  if (kv.has("adabim.alpha_max"))
    rc.adabim.alpha_max = kv.get_double("adabim.alpha_max", 1e12);
  rc.adabim.max_backtracks =
      static_cast<int>(kv.get_int("adabim.max_backtracks", 60));
  rc.adabim.linesearch = kv.get_bool("adabim.linesearch", true);

  if (kv.has("stabim.L_f1")) rc.stabim_L_f1 = kv.get_double("stabim.L_f1", 0);
  if (kv.has("stabim.L_f2")) rc.stabim_L_f2 = kv.get_double("stabim.L_f2", 1);
  rc.stabim_nu = kv.get_double("stabim.nu", 0.98);

  rc.sedm_alpha_max_factor = kv.get_double("sedm.alpha_max_factor", 1.0);
  rc.sedm_eta = kv.get_double("sedm.eta", 0.5);
  rc.sedm_nu = kv.get_double("sedm.nu", 0.98);

  if (kv.has("bigsam.L_f1")) rc.bigsam_L_f1 = kv.get_double("bigsam.L_f1", 1);
  if (kv.has("bigsam.mu_f1"))
    rc.bigsam_mu_f1 = kv.get_double("bigsam.mu_f1", 1);
  if (kv.has("bigsam.L_f2")) rc.bigsam_L_f2 = kv.get_double("bigsam.L_f2", 1);
  if (kv.has("bigsam.alpha1"))
    rc.bigsam_alpha1 = kv.get_double("bigsam.alpha1", 0);
  if (kv.has("bigsam.alpha2"))
    rc.bigsam_alpha2 = kv.get_double("bigsam.alpha2", 0);

  rc.i3d_gamma = kv.get_double("i3d.gamma", 0.0);
  if (kv.has("pgm.sigma")) rc.pgm_sigma = kv.get_double("pgm.sigma", 1.0);
  if (kv.has("pgm.alpha")) rc.pgm_alpha = kv.get_double("pgm.alpha", 0.1);

  rc.out_dir = kv.get_str("output.dir", ".");
  return rc;
}

// ---------------------------------------------------------------------------

struct SolveOutcome {
  RunReport report;
  std::vector<TraceRecord> trace;
  Vec x_final;
};

namespace detail {

/// "sedm-10" -> base "sedm", alpha_max factor 10.
inline std::string solver_base(const std::string& solver, double* factor) {
  if (solver.rfind("sedm", 0) == 0 && solver.size() > 5 &&
      solver[4] == '-') {
    if (factor) *factor = std::stod(solver.substr(5));
    return "sedm";
  }
  return solver;
}

inline PenaltySchedule make_schedule(const RunConfig& rc,
                                     const std::string& base) {
  std::string kind = rc.schedule_kind;
  if (kind.empty()) kind = (base == "i3d") ? "sqsummable" : "harmonic";
  if (kind == "harmonic")
    return PenaltySchedule::harmonic(rc.schedule_c, rc.sigma0);
  if (kind == "sqsummable")
    return PenaltySchedule::square_summable(rc.schedule_c, rc.sigma0);
  if (kind == "const_then_harmonic")
    return PenaltySchedule::constant_then_harmonic(rc.schedule_c,
                                                   rc.schedule_k0, rc.sigma0);
  if (kind == "constant") return PenaltySchedule::constant(rc.sigma0);
  throw ConfigError("unknown schedule.kind '" + kind + "'");
}

class RunLoop {
 public:
  RunLoop(const BilevelProblem& p, const RunConfig& rc, std::ostream* csv)
      : p_(p), rc_(rc), csv_(csv), start_(std::chrono::steady_clock::now()) {
    if (csv_) *csv_ << kTraceHeader << '\n';
  }

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

  /// Records the iteration if due and decides termination. Returns a
  /// non-empty reason when the run should stop.
  std::string after_iteration(std::int64_t k, double alpha, double sigma,
                              const StepSnapshot& snap,
                              std::int64_t backtracks_cum) {
    std::string reason;
    if (p_.counters->grad_f2 >= rc_.budgets.max_grad_evals)
      reason = "budget_gradevals";
    else if (k >= rc_.budgets.max_iters)
      reason = "budget_iters";
    else if (elapsed() >= rc_.budgets.wall_s)
      reason = "budget_time";
    else if (alpha > 0.0 && sigma <= rc_.tol.sigma_tol && snap.x_prev &&
             snap.x_cur) {
      double step2 = 0.0;
      for (std::size_t i = 0; i < snap.x_cur->size(); ++i) {
        const double d = (*snap.x_cur)[i] - (*snap.x_prev)[i];
        step2 += d * d;
      }
      if (std::sqrt(step2) / alpha <=
          rc_.tol.r_tol * (1.0 + norm2(*snap.x_cur)))
        reason = "tolerance";
    }

    if (cadence_.should_record(k) || !reason.empty()) {
      TraceRecord r;
      r.k = k;
      r.grad_f2_evals = p_.counters->grad_f2;
      r.f_value_evals = p_.counters->f_value;
      r.backtracks_cum = backtracks_cum;
      r.alpha = alpha;
      r.sigma = sigma;
      if (snap.x_cur) {
        const double c1 = p_.cost1(*snap.x_cur);
        r.cost1_gap = p_.known.cost1_star ? c1 - *p_.known.cost1_star : c1;
        r.lower_resid = lower_residual(p_, snap);
      }
      r.time_s = elapsed();
      trace.push_back(r);
      if (csv_) write_trace_row(*csv_, r);
    }
    return reason;
  }

  RunReport finish(const std::string& solver, const std::string& problem,
                   const Vec& x, std::int64_t iterations,
                   std::int64_t backtracks, const std::string& termination) {
    RunReport rep;
    rep.solver = solver;
    rep.problem = problem;
    rep.x_norm = norm2(x);
    for (std::size_t i = 0; i < x.size() && i < 8; ++i)
      rep.x_head.push_back(x[i]);
    rep.iterations = iterations;
    rep.grad_f1_evals = p_.counters->grad_f1;
    rep.grad_f2_evals = p_.counters->grad_f2;
    rep.prox_evals = p_.counters->prox;
    rep.f_value_evals = p_.counters->f_value;
    rep.backtracks = backtracks;
    rep.termination = termination;
    rep.final_cost1 = p_.cost1(x);
    rep.final_cost2 = p_.cost2(x);
    if (p_.known.cost1_star)
      rep.final_gap = rep.final_cost1 - *p_.known.cost1_star;
    return rep;
  }

  std::vector<TraceRecord> trace;

 private:
  const BilevelProblem& p_;
  const RunConfig& rc_;
  std::ostream* csv_;
  TraceCadence cadence_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

/// Runs one solver on one problem bundle, streaming trace rows to csv when
/// given. The bundle is consulted for the formulation the solver needs.
inline SolveOutcome run_single(const RunConfig& rc, const ProblemBundle& bundle,
                               std::ostream* csv = nullptr) {
  double sedm_factor = rc.sedm_alpha_max_factor;
  const std::string base = detail::solver_base(rc.solver, &sedm_factor);

  const bool needs_smooth =
      base == "sedm" || base == "bigsam" || base == "i3d";
  if (needs_smooth && !bundle.smooth_form)
    throw ConfigError(rc.solver + " needs a smooth upper level (g1 == 0)");
  if (base == "sedm" && !bundle.sedm_ok)
    throw ConfigError("sedm is not applicable to this problem");
  if (base == "bigsam" && !bundle.bigsam_ok)
    throw ConfigError("bigsam is not applicable to this problem");
  if (base == "i3d" && !bundle.i3d_ok)
    throw ConfigError("i3d is only applicable to the l2-upper linear inverse"
                      " problem");

  const BilevelProblem problem =
      (needs_smooth ? *bundle.smooth_form : bundle.prox_form)
          .with_fresh_counters();

  PenaltySchedule sched = detail::make_schedule(rc, base);
  detail::RunLoop loop(problem, rc, csv);
  SolveOutcome out;
  std::string reason;
  std::int64_t iters = 0, backs = 0;

  if (base == "adabim") {
    AdaBimState st = adabim_init(problem, bundle.x0, sched.current(),
                                 rc.adabim);
    while (reason.empty()) {
      const double sigma_next = sched.next();
      try {
        adabim_step(problem, st, sigma_next, rc.adabim);
      } catch (const Error& e) {
        reason = std::string("error(") + e.what() + ")";
        break;
      }
      ++iters;
      StepSnapshot snap;
      snap.x_prev = &st.x_prev;
      snap.x_cur = &st.x_cur;
      snap.alpha = st.alpha_cur;
      snap.sigma = st.sigma_cur;
      snap.grad_f2_cur = &st.grad_f2_cur;
      Vec gkp(st.x_prev.size());
      for (std::size_t i = 0; i < gkp.size(); ++i)
        gkp[i] = st.sigma_cur * st.grad_f1_prev[i] + st.grad_f2_prev[i];
      snap.grad_fk_prev = &gkp;
      reason = loop.after_iteration(st.k, st.alpha_cur, st.sigma_cur, snap,
                                    st.backtracks_total);
    }
    backs = st.backtracks_total;
    out.x_final = st.x_cur;
  } else if (base == "stabim") {
    StaBimConfig cfg;
    cfg.L_f1 = rc.stabim_L_f1 ? *rc.stabim_L_f1 : bundle.L_f1_prox;
    cfg.L_f2 = rc.stabim_L_f2 ? *rc.stabim_L_f2 : bundle.L_f2;
    cfg.nu = rc.stabim_nu;
    StaBimState st = stabim_init(problem, bundle.x0, sched.current());
    while (reason.empty()) {
      stabim_step(problem, st, sched.next(), cfg);
      ++iters;
      StepSnapshot snap;
      snap.x_prev = &st.x_prev;
      snap.x_cur = &st.x_cur;
      snap.alpha = st.alpha_cur;
      snap.sigma = st.sigma_cur;
      snap.grad_f2_cur = &st.grad_f2_cur;
      reason = loop.after_iteration(st.k, st.alpha_cur, st.sigma_cur, snap, 0);
    }
    out.x_final = st.x_cur;
  } else if (base == "sedm") {
    SedmConfig cfg;
    cfg.alpha_max = sedm_factor / bundle.L_f2;
    cfg.eta = rc.sedm_eta;
    cfg.nu = rc.sedm_nu;
    SedmState st = sedm_init(problem, bundle.x0, sched.current());
    while (reason.empty()) {
      try {
        sedm_step(problem, st, sched.next(), cfg);
      } catch (const Error& e) {
        reason = std::string("error(") + e.what() + ")";
        break;
      }
      ++iters;
      StepSnapshot snap;
      snap.x_prev = &st.x_prev;
      snap.x_cur = &st.x_cur;
      snap.alpha = st.alpha_cur;
      snap.sigma = st.sigma_cur;
      reason = loop.after_iteration(st.k, st.alpha_cur, st.sigma_cur, snap,
                                    st.backtracks_total);
    }
    backs = st.backtracks_total;
    out.x_final = st.x_cur;
  } else if (base == "bigsam") {
    BigsamConfig cfg;
    cfg.L_f1 = rc.bigsam_L_f1 ? *rc.bigsam_L_f1 : bundle.L_f1_smooth;
    cfg.mu_f1 = rc.bigsam_mu_f1 ? *rc.bigsam_mu_f1 : bundle.mu_f1_smooth;
    cfg.L_f2 = rc.bigsam_L_f2 ? *rc.bigsam_L_f2 : bundle.L_f2;
    if (rc.bigsam_alpha1) cfg.alpha1 = *rc.bigsam_alpha1;
    if (rc.bigsam_alpha2) cfg.alpha2 = *rc.bigsam_alpha2;
    BigsamState st = bigsam_init(problem, bundle.x0, sched.current());
    while (reason.empty()) {
      bigsam_step(problem, st, sched.next(), cfg);
      ++iters;
      StepSnapshot snap;  // averaged step: gap-based lower measure
      snap.x_prev = &st.x_prev;
      snap.x_cur = &st.x_cur;
      snap.alpha = 0.0;
      snap.sigma = st.sigma_cur;
      reason = loop.after_iteration(st.k, cfg.a2(), st.sigma_cur, snap, 0);
    }
    out.x_final = st.x_cur;
  } else if (base == "i3d") {
    const double gamma =
        I3dConfig{rc.i3d_gamma}.step(bundle.L_f2, sched.current());
    I3dState st = i3d_init(bundle.x0, sched.current(), gamma);
    while (reason.empty()) {
      const double sigma = st.sigma_cur;  // current penalty, then advance
      i3d_step(problem, st, sigma);
      sched.next();
      st.sigma_cur = sched.current();
      ++iters;
      StepSnapshot snap;
      snap.x_prev = &st.x_prev;
      snap.x_cur = &st.x_cur;
      snap.alpha = st.gamma;
      snap.sigma = sigma;
      reason = loop.after_iteration(st.k, st.gamma, sigma, snap, 0);
    }
    out.x_final = st.x_cur;
  } else if (base == "pgm-ref") {
    const double sigma = rc.pgm_sigma ? *rc.pgm_sigma : rc.sigma0;
    const double alpha = rc.pgm_alpha ? *rc.pgm_alpha : 1.0 / bundle.L_f2;
    Vec x = bundle.x0, x_prev = bundle.x0, y(x.size()), next;
    PenalizedGrad g;
    std::int64_t k = 0;
    while (reason.empty()) {
      eval_penalized_grad(problem, sigma, x, g);
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - alpha * g.fk[i];
      problem.prox_penalized(alpha, sigma, y, next);
      x_prev = x;
      x.swap(next);
      ++k;
      ++iters;
      StepSnapshot snap;
      snap.x_prev = &x_prev;
      snap.x_cur = &x;
      snap.alpha = alpha;
      snap.sigma = sigma;
      reason = loop.after_iteration(k, alpha, sigma, snap, 0);
    }
    out.x_final = x;
  } else {
    throw ConfigError("unknown solver '" + rc.solver + "'");
  }

  out.report = loop.finish(rc.solver, bundle.name, out.x_final, iters, backs,
                           reason);
  out.trace = std::move(loop.trace);
  return out;
}

// ---------------------------------------------------------------------------
// Bench: several solvers on one problem, one trace per solver plus a summary
// of gradient evaluations needed to reach each decade of upper-cost gap.

struct BenchEntry {
  std::string solver;
  bool applicable = true;
  std::string note;
  SolveOutcome outcome;
};

inline bool solver_applicable(const std::string& solver,
                              const ProblemBundle& bundle) {
  double f;
  const std::string base = detail::solver_base(solver, &f);
  if (base == "sedm") return bundle.sedm_ok;
  if (base == "bigsam") return bundle.bigsam_ok;
  if (base == "i3d") return bundle.i3d_ok;
  return true;
}

inline std::vector<BenchEntry> run_bench(const RunConfig& base_config,
                                         const std::vector<std::string>& solvers,
                                         const ProblemBundle& bundle,
                                         int threads,
                                         const std::string& out_dir) {
  std::vector<BenchEntry> entries(solvers.size());
  for (std::size_t i = 0; i < solvers.size(); ++i)
    entries[i].solver = solvers[i];

  auto work = [&](std::size_t i) {
    BenchEntry& e = entries[i];
    if (!solver_applicable(e.solver, bundle)) {
      e.applicable = false;
      e.note = "inapplicable";
      return;
    }
    try {
      RunConfig rc = base_config;
      rc.solver = e.solver;
      const std::string path = out_dir + "/trace_" + e.solver + ".csv";
      std::ofstream csv(path);
      if (!csv) throw DataError("cannot write " + path);
      e.outcome = run_single(rc, bundle, &csv);
      e.outcome.report.trace_path = path;
    } catch (const std::exception& ex) {
      e.applicable = false;
      e.note = std::string("error: ") + ex.what();
    }
  };

  if (threads <= 1) {
    for (std::size_t i = 0; i < entries.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < entries.size();
             i = next.fetch_add(1))
          work(i);
      });
    for (auto& th : pool) th.join();
  }
  return entries;
}

/// summary.csv: gradient evaluations needed to bring the upper gap below
/// each decade threshold 1e0 .. 1e-6 (empty when never reached or when no
/// reference optimum is known), plus total backtracks.
inline void write_bench_summary(std::ostream& out,
                                const std::vector<BenchEntry>& entries) {
  out << "solver,status";
  for (int d = 0; d >= -6; --d) out << ",ge_to_gap_1e" << d;
  out << ",total_backtracks,final_gap\n";
  for (const auto& e : entries) {
    out << e.solver << ',' << (e.applicable ? "ok" : "inapplicable");
    for (int d = 0; d >= -6; --d) {
      out << ',';
      if (!e.applicable) continue;
      const double thr = std::pow(10.0, d);
      for (const auto& r : e.outcome.trace) {
        if (!std::isnan(r.cost1_gap) && r.cost1_gap <= thr) {
          out << r.grad_f2_evals;
          break;
        }
      }
    }
    out << ',';
    if (e.applicable) out << e.outcome.report.backtracks;
    out << ',';
    if (e.applicable && !std::isnan(e.outcome.report.final_gap)) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", e.outcome.report.final_gap);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace bilevel
