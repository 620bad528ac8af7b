#pragma once

// Benchmark sweeps: a JSON experiment spec expands into (method x init) cells
// that run concurrently, each writing its own trace, plus one summary JSON.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "broyden_lab/solver.hpp"

namespace broyden_lab {

enum class X0Distribution { Sphere, Normal, NearSolution };

std::string_view to_string(X0Distribution d);
std::optional<X0Distribution> parse_x0_distribution(std::string_view name);

/// Sphere: uniform on the unit sphere. Normal: N(0, I).
/// NearSolution: x* + rho ||x*|| eps with eps uniform on the unit sphere.
Vector draw_x0(const Problem& p, X0Distribution dist, double rho, RngStream& stream);

inline constexpr int kSpecSchemaVersion = 1;

struct InitSpec {
  InitKind kind = InitKind::ExactJacobianAtX0;
  double scale = 1.0;
  /// Use the logsumexp smoothness constant 2 lambda_max(C C^T) + gamma as scale.
  bool smoothness_scale = false;
  std::string label;
};

struct ExperimentSpec {
  int schema_version = kSpecSchemaVersion;
  /// Problem document accepted by problem_from_json.
  nlohmann::json problem;
  std::vector<Method> methods;
  DirectionRule direction{DirectionKind::RandomBasis, 0};
  std::vector<InitSpec> inits;
  X0Distribution x0 = X0Distribution::Sphere;
  double rho = 0.1;
  std::uint64_t x0_seed = 0;
  bool shared_x0 = true;
  double tol = 1e-12;
  int max_iters = 100;
  bool record_sigma = true;
  /// Keyed by method name; fields: tol, max_iters, direction, direction_seed, fd_jacobian.
  std::map<std::string, nlohmann::json> overrides;
  std::string output_dir = "bench_out";
};

/// Throws InvalidArgument on anything malformed, including an empty method list.
ExperimentSpec parse_experiment_spec(const nlohmann::json& doc);

struct CellResult {
  Method method = Method::BroydenGreedy;
  std::string init_label;
  SolverStatus status = SolverStatus::Running;
  std::string message;
  int iterations = 0;
  std::optional<double> final_res_norm;
  std::optional<int> iterations_to_tol;
  std::optional<double> final_sigma_rel;
  /// Least-squares slope of log10(sigma_rel) against k.
  std::optional<double> sigma_decay_slope;
  std::string trace_file;
  bool failed = false;
};

struct BenchResult {
  std::vector<CellResult> cells;
  nlohmann::json summary;
  bool all_failed() const;
};

/// Number of workers: BROYDEN_LAB_THREADS if set and positive, else hardware
/// concurrency, never more than `cells`.
int bench_thread_count(std::size_t cells);

/// Runs every cell and writes traces plus <output_dir>/summary.json.
BenchResult run_bench(const ExperimentSpec& spec);

/// Slope of the least-squares line through (k, log10 sigma_rel) over positive values.
std::optional<double> sigma_decay_slope(const IterationTrace& trace);

}  // namespace broyden_lab
