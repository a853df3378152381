// Benchmark CLI for the bilevel proximal solvers: run one solver with
// budgets and a CSV trace (solve), compare several solvers on one problem
// (bench), or persist generated instances (datagen).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bilevel/bilevel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitSolver = 4;

json report_to_json(const bilevel::RunReport& r) {
  json j;
  j["solver"] = r.solver;
  j["problem"] = r.problem;
  j["x_norm"] = r.x_norm;
  j["x_head"] = r.x_head;
  j["iterations"] = r.iterations;
  j["grad_f1_evals"] = r.grad_f1_evals;
  j["grad_f2_evals"] = r.grad_f2_evals;
  j["prox_evals"] = r.prox_evals;
  j["f_value_evals"] = r.f_value_evals;
  j["backtracks"] = r.backtracks;
  j["termination"] = r.termination;
  j["final_cost1"] = r.final_cost1;
  j["final_cost2"] = r.final_cost2;
  if (!std::isnan(r.final_gap)) j["final_gap"] = r.final_gap;
  if (!r.trace_path.empty()) j["trace"] = r.trace_path;
  j["config"] = r.config_echo;
  return j;
}

bilevel::KvConfig load_config(const std::string& path,
                              const std::vector<std::string>& overrides) {
  bilevel::KvConfig kv = bilevel::KvConfig::load(path);
  for (const auto& s : overrides) kv.set_pair(s);
  return kv;
}

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("BILEVEL_PROX_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
  }
  return 1;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto b = tok.find_first_not_of(" \t");
    const auto e = tok.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(tok.substr(b, e - b + 1));
  }
  return out;
}

int cmd_solve(const std::string& config_path,
              const std::vector<std::string>& overrides,
              const std::string& out_dir) {
  bilevel::KvConfig kv;
  bilevel::RunConfig rc;
  try {
    kv = load_config(config_path, overrides);
    rc = bilevel::RunConfig::from_kv(kv);
    if (!out_dir.empty()) rc.out_dir = out_dir;
  } catch (const bilevel::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const bilevel::ProblemBundle bundle = bilevel::build_problem(rc.problem);
    fs::create_directories(rc.out_dir);
    const std::string trace_path = rc.out_dir + "/trace.csv";
    std::ofstream csv(trace_path);
    if (!csv) {
      std::cerr << "data error: cannot write " << trace_path << "\n";
      return kExitData;
    }
    bilevel::SolveOutcome out = bilevel::run_single(rc, bundle, &csv);
    out.report.trace_path = trace_path;
    for (const auto& [k, v] : kv.items()) out.report.config_echo[k] = v;
    std::cout << report_to_json(out.report).dump(2) << "\n";
    if (out.report.termination.rfind("error", 0) == 0) return kExitSolver;
    return 0;
  } catch (const bilevel::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const bilevel::ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const bilevel::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const bilevel::Error& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  }
}

int cmd_bench(const std::string& config_path,
              const std::vector<std::string>& overrides,
              const std::string& out_dir, int threads) {
  bilevel::KvConfig kv;
  bilevel::RunConfig rc;
  std::vector<std::string> solvers;
  try {
    kv = load_config(config_path, overrides);
    rc = bilevel::RunConfig::from_kv(kv);
    if (!out_dir.empty()) rc.out_dir = out_dir;
    solvers = split_list(kv.get_str("bench.solvers", ""));
    if (solvers.empty())
      throw bilevel::ConfigError("bench.solvers must list at least one solver");
  } catch (const bilevel::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const bilevel::ProblemBundle bundle = bilevel::build_problem(rc.problem);
    fs::create_directories(rc.out_dir);
    const auto entries =
        bilevel::run_bench(rc, solvers, bundle, threads, rc.out_dir);

    const std::string summary_path = rc.out_dir + "/summary.csv";
    std::ofstream summary(summary_path);
    if (!summary) {
      std::cerr << "data error: cannot write " << summary_path << "\n";
      return kExitData;
    }
    bilevel::write_bench_summary(summary, entries);

    json j;
    j["problem"] = bundle.name;
    j["summary"] = summary_path;
    for (const auto& e : entries) {
      json je;
      je["solver"] = e.solver;
      je["status"] = e.applicable ? "ok" : (e.note.empty() ? "skipped" : e.note);
      if (e.applicable) {
        je["grad_f2_evals"] = e.outcome.report.grad_f2_evals;
        je["backtracks"] = e.outcome.report.backtracks;
        je["termination"] = e.outcome.report.termination;
      }
      j["runs"].push_back(je);
    }
    std::cout << j.dump(2) << "\n";
    return 0;
  } catch (const bilevel::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const bilevel::ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const bilevel::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const bilevel::Error& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  }
}

int cmd_datagen(const std::string& kind, int m, int n, int nstar,
                std::uint64_t seed, const std::string& out_dir) {
  try {
    json meta;
    meta["kind"] = kind;
    meta["seed"] = seed;
    fs::create_directories(out_dir);

    if (kind == "lininverse") {
      auto inst = bilevel::gen_linear_inverse(m, n, nstar, seed);
      bilevel::save_matrix(out_dir + "/A.bin", inst.A);
      bilevel::save_vector(out_dir + "/b.bin", inst.b);
      bilevel::save_vector(out_dir + "/x_gen.bin", inst.x_gen);
      meta["m"] = m;
      meta["n"] = n;
      meta["nstar"] = nstar;
      meta["norm_A_sq"] = inst.L_f2;
    } else if (kind == "phillips" || kind == "foxgood" || kind == "baart") {
      auto inst = bilevel::gen_integral_equation(kind, n, seed);
      bilevel::save_matrix(out_dir + "/A.bin", inst.A);
      bilevel::save_vector(out_dir + "/b.bin", inst.b);
      bilevel::save_vector(out_dir + "/x_exact.bin", inst.x_exact);
      meta["n"] = n;
      meta["norm_A_sq"] = inst.L_f2;
    } else if (kind == "logistic") {
      auto data = bilevel::gen_logistic_synth(m, n, seed);
      std::ofstream out(out_dir + "/data.libsvm");
      if (!out) throw bilevel::DataError("cannot write " + out_dir);
      bilevel::serialize_libsvm(data, out);
      meta["m"] = m;
      meta["n"] = n;
    } else {
      std::cerr << "config error: unknown datagen kind '" << kind << "'\n";
      return kExitConfig;
    }

    std::ofstream mf(out_dir + "/meta.json");
    if (!mf) throw bilevel::DataError("cannot write " + out_dir + "/meta.json");
    mf << meta.dump(2) << "\n";
    std::cout << meta.dump(2) << "\n";
    return 0;
  } catch (const bilevel::UnsupportedKind& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const bilevel::DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const bilevel::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bilevel proximal-gradient solver benchmark harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::vector<std::string> overrides;
  int threads = 0;

  auto* solve = app.add_subcommand("solve", "run one solver, write a trace");
  solve->add_option("--config", config_path, "config file")->required();
  solve->add_option("--set", overrides, "key=value override (repeatable)");
  solve->add_option("--out", out_dir, "output directory");

  auto* bench = app.add_subcommand("bench", "compare solvers on one problem");
  bench->add_option("--config", config_path, "config file")->required();
  bench->add_option("--set", overrides, "key=value override (repeatable)");
  bench->add_option("--out", out_dir, "output directory");
  bench->add_option("--threads", threads,
                    "worker threads (or BILEVEL_PROX_THREADS)");

  std::string gen_kind;
  int gen_m = 20, gen_n = 50, gen_nstar = 5;
  std::uint64_t gen_seed = 42;
  auto* datagen = app.add_subcommand("datagen", "persist a generated instance");
  datagen->add_option("--kind", gen_kind,
                      "lininverse | phillips | foxgood | baart | logistic")
      ->required();
  datagen->add_option("--m", gen_m, "rows");
  datagen->add_option("--n", gen_n, "columns");
  datagen->add_option("--nstar", gen_nstar, "planted nonzeros");
  datagen->add_option("--seed", gen_seed, "generator seed");
  datagen->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (solve->parsed()) return cmd_solve(config_path, overrides, out_dir);
  if (bench->parsed())
    return cmd_bench(config_path, overrides, out_dir,
                     resolve_threads(threads));
  if (datagen->parsed())
    return cmd_datagen(gen_kind, gen_m, gen_n, gen_nstar, gen_seed, out_dir);
  return kExitConfig;
}
