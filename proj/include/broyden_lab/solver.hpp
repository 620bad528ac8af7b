#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "broyden_lab/broyden.hpp"
#include "broyden_lab/problems.hpp"

namespace broyden_lab {

enum class Method { Newton, BroydenClassical, BroydenBad, BroydenGreedy, BroydenRandom };

enum class InitKind { ExactJacobianAtX0, ScaledIdentity, ScaledJacobianAtX0, ScaledJacobianAtStar };

/// How B_0 is built. `scale` is ignored for ExactJacobianAtX0.
struct InitScheme {
  InitKind kind = InitKind::ExactJacobianAtX0;
  double scale = 1.0;
};

enum class SolverStatus { Running, Converged, MaxIters, Degenerate, DomainError };

std::string_view to_string(Method m);
std::string_view to_string(InitKind k);
std::string_view to_string(SolverStatus s);
std::optional<Method> parse_method(std::string_view name);
std::optional<InitKind> parse_init_kind(std::string_view name);
std::optional<DirectionKind> parse_direction_kind(std::string_view name);

struct SolverConfig {
  Method method = Method::BroydenGreedy;
  /// Used by BroydenRandom; its seed drives the direction stream.
  DirectionRule direction_rule{DirectionKind::RandomBasis, 0};
  InitScheme init;
  double tol_residual = 1e-12;
  int max_iters = 500;
  std::uint64_t seed = 0;
  /// Evaluate J(x_k) every iteration to record sigma_k. Never changes iterates.
  bool record_sigma = false;
  /// Also record the spectral norm of B_k - J(x_k) (needs record_sigma).
  bool record_spectral_sigma = false;
  /// Maintain B_k for every method and record ||B_k H_k - I||_F / max(1, ||B_k||_F).
  bool debug_checks = false;
  /// Replace the exact Jacobian action of the greedy/random methods by central
  /// differences. This is outside the convergence analysis of those methods.
  bool fd_jacobian = false;

  /// Throws InvalidArgument on a malformed configuration.
  void validate() const;
  nlohmann::json to_json() const;
};

struct SolverState {
  Vector x;
  Vector fx;
  /// B is empty when the method does not need it and no diagnostics ask for it.
  JacobianPair pair;
  int k = 0;
  SolverStatus status = SolverStatus::Running;
  /// Describe the step that produced this state.
  std::optional<Index> last_direction;
  double last_step_norm = 0.0;

  bool has_B() const { return pair.B.size() > 0; }
};

struct IterationRecord {
  int k = 0;
  double res_norm = 0.0;
  std::optional<double> r_k;
  std::optional<double> sigma_abs;
  std::optional<double> sigma_rel;
  std::optional<Index> direction_index;
  std::optional<double> step_norm;
  // In-memory diagnostics, not part of the CSV.
  std::optional<double> sigma_spectral;
  std::optional<double> inverse_residual;
};

struct IterationTrace {
  std::vector<IterationRecord> records;
  SolverStatus status = SolverStatus::Running;
  std::string message;
  Vector x_final;
  nlohmann::json metadata;

  bool converged() const { return status == SolverStatus::Converged; }
  int iterations() const { return records.empty() ? 0 : records.back().k; }
};

/// x - J(x)^{-1} F(x).
Vector newton_step(const Problem& p, const Vector& x);

/// Builds B_0 and H_0 = B_0^{-1} at x0. Throws on singular B_0 or missing x*.
SolverState initial_state(const Problem& p, const Vector& x0, const SolverConfig& cfg);

SolverState classical_broyden_step(const Problem& p, const SolverState& state,
                                   const SolverConfig& cfg = {});
SolverState bad_broyden_step(const Problem& p, const SolverState& state,
                             const SolverConfig& cfg = {});
SolverState greedy_broyden_step(const Problem& p, const SolverState& state,
                                const SolverConfig& cfg = {});
SolverState random_broyden_step(const Problem& p, const SolverState& state, RngStream& stream,
                                const SolverConfig& cfg = {});

/// Runs the configured method until ||F(x_k)|| <= tol, max_iters, or a
/// terminal error. Failures are reported through the trace status.
IterationTrace solve(const Problem& p, const Vector& x0, const SolverConfig& cfg);

inline constexpr std::string_view kTraceCsvHeader =
    "k,res_norm,r_k,sigma_abs,sigma_rel,direction_index,step_norm";

void write_trace_csv(std::ostream& out, const IterationTrace& trace);
std::vector<IterationRecord> read_trace_csv(std::istream& in);

/// Writes <stem>.csv and <stem>.json; each file is written to a temporary
/// name and renamed into place.
void write_trace_files(const std::string& stem, const IterationTrace& trace);

}  // namespace broyden_lab
