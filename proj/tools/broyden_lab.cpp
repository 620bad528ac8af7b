#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "broyden_lab/bench.hpp"
#include "broyden_lab/verify.hpp"

namespace bl = broyden_lab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitMaxIters = 2;
constexpr int kExitFailed = 3;

struct SolveArgs {
  std::string problem = "linear";
  long n = 10;
  long m = 0;
  double gamma = 1.0;
  double c_const = 0.9;
  std::uint64_t seed = 0;
  std::string method = "greedy";
  std::string direction = "basis";
  std::string init = "exact-j0";
  std::optional<double> scale;
  std::string x0 = "sphere";
  double rho = 0.1;
  double tol = 1e-12;
  int max_iters = 500;
  std::string out;
  bool record_sigma = false;
  bool fd_jacobian = false;
  bool debug = false;
};

bl::ProblemPtr build_problem(const SolveArgs& a) {
  if (a.problem == "linear") return bl::make_random_linear_problem(a.n, a.seed);
  if (a.problem == "logsumexp") return bl::gen_logsumexp(a.n, a.m > 0 ? a.m : 2 * a.n, a.seed, a.gamma);
  return bl::make_hequation(a.n, a.c_const);
}

int run_solve(const SolveArgs& a) {
  const auto problem = build_problem(a);
  bl::SolverConfig cfg;
  cfg.method = *bl::parse_method(a.method);
  cfg.direction_rule = {*bl::parse_direction_kind(a.direction), a.seed};
  cfg.init.kind = *bl::parse_init_kind(a.init);
  if (a.scale) {
    cfg.init.scale = *a.scale;
  } else if (cfg.init.kind == bl::InitKind::ScaledIdentity) {
    if (const auto* lse = dynamic_cast<const bl::LogSumExpProblem*>(problem.get())) {
      cfg.init.scale = lse->smoothness_constant();
    }
  }
  cfg.tol_residual = a.tol;
  cfg.max_iters = a.max_iters;
  cfg.seed = a.seed;
  cfg.record_sigma = a.record_sigma || a.debug;
  cfg.fd_jacobian = a.fd_jacobian;
  cfg.debug_checks = a.debug;

  bl::RngStream x0_stream(a.seed, 2);
  const bl::Vector x0 =
      bl::draw_x0(*problem, *bl::parse_x0_distribution(a.x0), a.rho, x0_stream);
  const auto trace = bl::solve(*problem, x0, cfg);

  if (a.out.empty()) {
    bl::write_trace_csv(std::cout, trace);
  } else {
    std::filesystem::create_directories(a.out);
    const std::string stem = (std::filesystem::path(a.out) / "trace").string();
    bl::write_trace_files(stem, trace);
    std::cerr << "wrote " << stem << ".csv and " << stem << ".json\n";
  }
  std::fprintf(stderr, "%s after %d iterations, ||F|| = %.3e%s%s\n",
               std::string(bl::to_string(trace.status)).c_str(), trace.iterations(),
               trace.records.empty() ? 0.0 : trace.records.back().res_norm,
               trace.message.empty() ? "" : ": ", trace.message.c_str());
  switch (trace.status) {
    case bl::SolverStatus::Converged: return kExitOk;
    case bl::SolverStatus::MaxIters: return kExitMaxIters;
    default: return kExitFailed;
  }
}

int run_bench_cmd(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "cannot open spec file " << path << '\n';
    return kExitUsage;
  }
  bl::ExperimentSpec spec;
  try {
    spec = bl::parse_experiment_spec(nlohmann::json::parse(in));
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kExitUsage;
  }
  const auto result = bl::run_bench(spec);
  for (const auto& c : result.cells) {
    char sig[32] = "-";
    if (c.final_sigma_rel) std::snprintf(sig, sizeof sig, "%.3e", *c.final_sigma_rel);
    std::fprintf(stderr, "%-10s %-24s %-11s iters=%-4d sigma_rel=%s\n",
                 std::string(bl::to_string(c.method)).c_str(), c.init_label.c_str(),
                 std::string(bl::to_string(c.status)).c_str(), c.iterations, sig);
  }
  std::cerr << "summary: " << (std::filesystem::path(spec.output_dir) / "summary.json").string() << '\n';
  return result.all_failed() ? kExitFailed : kExitOk;
}

int run_compare(long n, long k_max, const std::string& out) {
  const auto rows = bl::theory::compare_rates(n, k_max);
  if (out.empty()) {
    bl::theory::write_rate_csv(std::cout, rows);
  } else {
    std::ofstream f(out);
    bl::theory::write_rate_csv(f, rows);
  }
  std::cerr << "crossover_iteration(" << n << ") = " << bl::theory::crossover_iteration(n) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Greedy and random Broyden solvers: solve, benchmark, verify"};
  app.require_subcommand(1);

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "Run one solve and emit its trace");
  solve->add_option("--problem", sa.problem)->check(CLI::IsMember({"linear", "logsumexp", "hequation"}));
  solve->add_option("--n", sa.n)->check(CLI::Range(1L, 100000L));
  solve->add_option("--m", sa.m, "logsumexp terms (default 2n)")->check(CLI::NonNegativeNumber);
  solve->add_option("--gamma", sa.gamma)->check(CLI::PositiveNumber);
  solve->add_option("--c-const", sa.c_const, "H-equation constant in (0, 1)")->check(CLI::Range(0.0, 1.0));
  solve->add_option("--seed", sa.seed);
  solve->add_option("--method", sa.method)
      ->check(CLI::IsMember({"newton", "classical", "bad", "greedy", "random"}));
  solve->add_option("--direction", sa.direction)->check(CLI::IsMember({"basis", "sphere", "gaussian"}));
  solve->add_option("--init", sa.init)
      ->check(CLI::IsMember({"exact-j0", "scaled-identity", "scaled-j0", "scaled-jstar"}));
  solve->add_option("--scale", sa.scale, "B0 scale (scaled-identity on logsumexp defaults to L)");
  solve->add_option("--x0", sa.x0)->check(CLI::IsMember({"sphere", "normal", "near-solution"}));
  solve->add_option("--rho", sa.rho)->check(CLI::NonNegativeNumber);
  solve->add_option("--tol", sa.tol)->check(CLI::PositiveNumber);
  solve->add_option("--max-iters", sa.max_iters)->check(CLI::PositiveNumber);
  solve->add_option("--out", sa.out, "directory for trace.csv and trace.json (default: CSV to stdout)");
  solve->add_flag("--record-sigma", sa.record_sigma);
  solve->add_flag("--fd-jacobian", sa.fd_jacobian, "finite-difference Jacobian actions (outside the analysis)");
  solve->add_flag("--debug", sa.debug, "maintain B and check B H = I");

  std::string spec_path;
  auto* bench = app.add_subcommand("bench", "Run an experiment spec");
  bench->add_option("spec", spec_path)->required();

  std::string suite_name = "all";
  auto* verify = app.add_subcommand("verify", "Run a self-check suite");
  verify->add_option("suite", suite_name)->check(CLI::IsMember({"lemmas", "bounds", "jacobians", "all"}));

  long cr_n = 2;
  long cr_k = 100;
  std::string cr_out;
  auto* compare = app.add_subcommand("compare-rates", "Tabulate classical vs greedy rate bounds");
  compare->add_option("--n", cr_n)->check(CLI::Range(2L, 1000000L));
  compare->add_option("--k-max", cr_k)->check(CLI::Range(1L, 10000000L));
  compare->add_option("--out", cr_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*solve) return run_solve(sa);
    if (*bench) return run_bench_cmd(spec_path);
    if (*verify) {
      const auto report = bl::run_verify(*bl::parse_verify_suite(suite_name));
      bl::print_report(std::cout, report);
      return report.passed() ? kExitOk : kExitFailed;
    }
    if (*compare) return run_compare(cr_n, cr_k, cr_out);
  } catch (const bl::Error& e) {
    std::cerr << e.what() << '\n';
    return e.kind() == bl::ErrorKind::InvalidArgument ? kExitUsage : kExitFailed;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kExitFailed;
  }
  return kExitUsage;
}
