#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bilevel/runner.hpp"

using namespace bilevel;
namespace fs = std::filesystem;

namespace {

KvConfig line_config() {
  std::istringstream in(
      "problem.kind = line\n"
      "solver.kind = adabim\n"
      "budget.max_grad_evals = 5000\n");
  return KvConfig::parse(in);
}

/// Strips the trailing time_s column from every CSV line.
std::string without_time_column(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const auto comma = line.rfind(',');
    out << line.substr(0, comma) << '\n';
  }
  return out.str();
}

int run_cli(const std::string& args) {
#ifdef BILEVEL_CLI_PATH
  const std::string cmd = std::string(BILEVEL_CLI_PATH) + " " + args +
                          " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
#else
  (void)args;
  return -1;
#endif
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("comments, spacing, overrides") {
    std::istringstream in(
        "# a comment\n"
        "solver.kind = stabim   # trailing\n"
        "schedule.c=2.5\n"
        "\n");
    KvConfig kv = KvConfig::parse(in);
    CHECK(kv.get_str("solver.kind", "") == "stabim");
    CHECK(kv.get_double("schedule.c", 0.0) == 2.5);
    kv.set_pair("schedule.c=3.0");
    CHECK(kv.get_double("schedule.c", 0.0) == 3.0);
  }
  SUBCASE("malformed values raise ConfigError") {
    KvConfig kv;
    kv.set("budget.max_grad_evals", "many");
    CHECK_THROWS_AS(RunConfig::from_kv(kv), ConfigError);
    KvConfig kv2;
    kv2.set("budget.max_grad_evals", "-5");
    CHECK_THROWS_AS(RunConfig::from_kv(kv2), ConfigError);
    KvConfig kv3;
    kv3.set("problem.kind", "sudoku");
    CHECK_THROWS_AS(RunConfig::from_kv(kv3), ConfigError);
  }
}

TEST_CASE("run_single on the analytic line problem") {
  RunConfig rc = RunConfig::from_kv(line_config());
  ProblemBundle bundle = build_problem(rc.problem);
  std::ostringstream csv;
  SolveOutcome out = run_single(rc, bundle, &csv);

  CHECK(out.report.termination == "budget_gradevals");
  CHECK(out.report.grad_f2_evals >= 5000);
  CHECK(std::abs(out.x_final[0] - 1.0) < 1e-2);
  CHECK(std::abs(out.x_final[1] - 1.0) < 1e-2);

  // csv schema
  std::istringstream lines(csv.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header ==
        "k,grad_f2_evals,f_value_evals,backtracks_cum,alpha,sigma,cost1_gap,"
        "lower_resid,time_s");
  // strictly increasing gradient counts and nondecreasing backtracks
  std::int64_t prev_ge = 0, prev_bt = -1, last_k = 0;
  std::string line;
  std::int64_t rows = 0;
  while (std::getline(lines, line)) {
    long k = 0, ge = 0, fe = 0, bt = 0;
    std::sscanf(line.c_str(), "%ld,%ld,%ld,%ld", &k, &ge, &fe, &bt);
    CHECK(ge > prev_ge);
    CHECK(bt >= prev_bt);
    prev_ge = ge;
    prev_bt = bt;
    last_k = k;
    ++rows;
  }
  // dense up to iteration 1000, log-spaced beyond, final row always present
  CHECK(rows >= std::min<std::int64_t>(out.report.iterations, 1000));
  CHECK(rows <= out.report.iterations);
  CHECK(last_k == out.report.iterations);
}

TEST_CASE("tolerance stop fires on an easy problem") {
  KvConfig kv = line_config();
  kv.set("budget.max_grad_evals", "100000000");
  kv.set("budget.max_iters", "2000000");
  kv.set("tol.sigma", "1e-3");
  kv.set("tol.r", "1e-6");
  RunConfig rc = RunConfig::from_kv(kv);
  ProblemBundle bundle = build_problem(rc.problem);
  SolveOutcome out = run_single(rc, bundle, nullptr);
  CHECK(out.report.termination == "tolerance");
}

TEST_CASE("library-level determinism of traces") {
  for (const char* solver : {"adabim", "stabim", "sedm-1", "bigsam"}) {
    CAPTURE(solver);
    KvConfig kv = line_config();
    kv.set("solver.kind", solver);
    kv.set("budget.max_grad_evals", "3000");
    RunConfig rc = RunConfig::from_kv(kv);
    ProblemBundle bundle = build_problem(rc.problem);
    std::ostringstream csv1, csv2;
    run_single(rc, bundle, &csv1);
    run_single(rc, bundle, &csv2);
    CHECK(without_time_column(csv1.str()) == without_time_column(csv2.str()));
  }
}

TEST_CASE("solver applicability filtering") {
  ProblemSpec spec;
  spec.kind = ProblemSpec::Kind::line;
  spec.upper = ProblemSpec::Upper::l1;
  spec.line_a = {1.0, 2.0};
  ProblemBundle bundle = build_problem(spec);
  CHECK(solver_applicable("adabim", bundle));
  CHECK(solver_applicable("stabim", bundle));
  CHECK(!solver_applicable("sedm-1", bundle));
  CHECK(!solver_applicable("bigsam", bundle));
  CHECK(!solver_applicable("i3d", bundle));

  const fs::path dir = fs::temp_directory_path() / "bilevel_bench_test";
  fs::create_directories(dir);
  KvConfig kv = line_config();
  kv.set("problem.upper", "l1");
  kv.set("problem.line_a", "1,2");
  kv.set("budget.max_grad_evals", "500");
  RunConfig rc = RunConfig::from_kv(kv);
  auto entries = run_bench(rc, {"adabim", "sedm-10", "bigsam"}, bundle, 2,
                           dir.string());
  CHECK(entries[0].applicable);
  CHECK(!entries[1].applicable);
  CHECK(entries[1].note == "inapplicable");
  CHECK(!entries[2].applicable);

  std::ostringstream summary;
  write_bench_summary(summary, entries);
  CHECK(summary.str().find("sedm-10,inapplicable") != std::string::npos);
  fs::remove_all(dir);
}

#ifdef BILEVEL_CLI_PATH
TEST_CASE("cli exit codes and determinism") {
  const fs::path dir = fs::temp_directory_path() / "bilevel_cli_test";
  fs::create_directories(dir);
  const std::string cfg = (dir / "run.cfg").string();
  {
    std::ofstream out(cfg);
    out << "problem.kind = line\nsolver.kind = adabim\n"
        << "budget.max_grad_evals = 2000\n";
  }

  SUBCASE("smoke run exits zero and writes the trace") {
    CHECK(run_cli("solve --config " + cfg + " --out " + (dir / "r1").string()) ==
          0);
    CHECK(fs::exists(dir / "r1" / "trace.csv"));
  }
  SUBCASE("missing config file exits 2") {
    CHECK(run_cli("solve --config /nonexistent.cfg") == 2);
  }
  SUBCASE("missing data file exits 3") {
    const std::string cfg3 = (dir / "bad_data.cfg").string();
    std::ofstream out(cfg3);
    out << "problem.kind = logistic\ndata.path = /no/such/file.libsvm\n"
        << "solver.kind = adabim\n";
    out.close();
    CHECK(run_cli("solve --config " + cfg3) == 3);
  }
  SUBCASE("empty bench solver list exits 2") {
    CHECK(run_cli("bench --config " + cfg + " --out " + dir.string()) == 2);
  }
  SUBCASE("invalid datagen kind exits 2") {
    CHECK(run_cli("datagen --kind nope --out " + dir.string()) == 2);
  }
  SUBCASE("datagen round trip") {
    const std::string gdir = (dir / "gen").string();
    CHECK(run_cli("datagen --kind lininverse --m 5 --n 10 --nstar 3 --seed 42"
                  " --out " +
                  gdir) == 0);
    auto inst = gen_linear_inverse(5, 10, 3, 42);
    DenseMatrix A = load_matrix(gdir + "/A.bin");
    CHECK(A.a == inst.A.a);
    CHECK(load_vector(gdir + "/b.bin") == inst.b);
    CHECK(fs::file_size(gdir + "/A.bin") == 16 + 8 * 5 * 10);
  }
  fs::remove_all(dir);
}
#endif
