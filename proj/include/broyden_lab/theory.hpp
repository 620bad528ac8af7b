#pragma once

// Evaluable forms of the convergence guarantees for greedy / random Broyden:
// superlinear envelopes, Jacobian-decay bounds, the initialization gate, the
// linear-rate constant q_m and the comparison against classical Broyden.
// Rate factors are evaluated in log space; the log_* variants stay finite
// where the factors themselves over- or underflow.

#include <iosfwd>
#include <string>
#include <vector>

#include "broyden_lab/solver.hpp"

namespace broyden_lab::theory {

enum class NormKind { Spectral, Frobenius };

/// c = ||J(x*)^{-1}||, M the Lipschitz constant of J at x*, r0 = ||x0 - x*||
/// and sigma0 = ||B0 - J(x0)|| measured in `sigma0_norm`.
struct ProblemConstants {
  double c = 0.0;
  double M = 0.0;
  int n = 2;
  double r0 = 0.0;
  double sigma0 = 0.0;
  NormKind sigma0_norm = NormKind::Spectral;
};

/// 48 sqrt(n) c M r0 + c sigma0 <= 1/3.
bool check_initial_condition(const ProblemConstants& k);
double initial_condition_lhs(const ProblemConstants& k);

/// Measures r0 and sigma0 for a concrete start; c and M come from estimates.
ProblemConstants measure_constants(const Problem& p, const Vector& x0, const Matrix& b0,
                                   double c, double M, NormKind norm = NormKind::Spectral);

double log_greedy_rate_bound(long long k, long long n);
/// e^k (1 - 1/n)^{k(k-1)/4}.
double greedy_rate_bound(long long k, long long n);

double log_random_rate_bound(long long k, long long n, double delta);
/// (4 n^2 e / delta)^k (1 - 1/(n+1))^{k(k-1)/4}.
double random_rate_bound(long long k, long long n, double delta);

/// 2 e (1 - 1/n)^{k/2} / c, valid for k >= 4n + 3 (ThresholdNotMet otherwise).
double jacobian_rate_bound_greedy(long long k, long long n, double c);

/// 8 n^2 e / (delta c) (1 - 1/(n+1))^{k/2}, valid for
/// k >= 4 (n+1) ln(4 n^2 e / delta) + 3. Exponent k/2 as stated; the
/// derivation actually ends with (k-1)/4.
double jacobian_rate_bound_random(long long k, long long n, double c, double delta);
long long jacobian_threshold_random(long long n, double delta);

double log_original_broyden_bound(long long k);
/// 2 k^{-k/2}: the classical Broyden envelope on ||x_k - x*|| / ||x_0 - x*||.
double original_broyden_bound(long long k);

/// ceil(8 n ln(n e) + 1).
long long crossover_iteration(long long n);

/// Smallest q with c sigma0 <= q/(q+1) and
/// sqrt(n) c M r0 <= q(1-q)/12 (q/(1+q) - c sigma0), by bisection to 1e-12.
/// Throws Infeasible unless 48 sqrt(n) c M r0 + c sigma0 <= 1/3.
double compute_qm(const ProblemConstants& k);

/// Slack of the two defining constraints at q (>= 0 means satisfied).
struct QmSlack {
  double first = 0.0;
  double second = 0.0;
};
QmSlack qm_constraint_slack(const ProblemConstants& k, double q);

/// 0.5 (c sigma0 + sqrt(sqrt(n) c M r0)) and 7 (c sigma0 + sqrt(sqrt(n) c M r0)).
std::pair<double, double> qm_bracket(const ProblemConstants& k);

struct NeumannBound {
  double inv_bound = 0.0;
  double dev_bound = 0.0;
};
/// For ||E|| < 1: ||(I - E)^{-1}|| <= 1/(1 - ||E||) and
/// ||(I - E)^{-1} - I|| <= ||E|| / (1 - ||E||). OutOfDomain otherwise.
NeumannBound neumann_inverse_bound(double e_norm);

struct RateRow {
  long long n = 0;
  long long k = 0;
  double original_bound = 0.0;
  double greedy_bound = 0.0;
  double log_original = 0.0;
  double log_greedy = 0.0;
  /// original >= greedy, decided in log space.
  bool greedy_faster = false;
};

std::vector<RateRow> compare_rates(long long n, long long k_max);
std::vector<RateRow> compare_rates(long long n, long long k_min, long long k_max);

inline constexpr const char* kRateCsvHeader = "n,k,original_bound,greedy_bound,greedy_faster";
void write_rate_csv(std::ostream& out, const std::vector<RateRow>& rows, bool header = true);

// ----------------------------------------------------------------- audits

/// Outcome of checking an inequality along a trace. `worst_slack` is the
/// minimum of (bound - observed) over checked entries; negative means failure.
struct AuditResult {
  std::string name;
  bool passed = true;
  int checked = 0;
  int skipped = 0;
  double worst_slack = 0.0;
  std::string detail;
  /// Uses estimated constants, so the verdict is advisory.
  bool advisory = false;
};

/// sigma_{k+1}^2 <= sigma_k^2 + 2 sigma_k sqrt(n) M (r_k + r_{k+1}) + n M^2 (r_k + r_{k+1})^2.
AuditResult audit_sigma_recursion(const IterationTrace& trace, int n, double M);

/// r_{k+1} <= (3cMr_k/2 + c sigma_k) / (1 - c(sigma_k + M r_k)) r_k whenever
/// c (sigma_k + M r_k) < 1.
AuditResult audit_r_recursion(const IterationTrace& trace, double c, double M);

/// c sigma_k <= e (1 - 1/n)^{k/2}, using the spectral sigma when recorded.
AuditResult audit_jacobian_decay(const IterationTrace& trace, int n, double c);

/// Ratios r_{k+1}/r_k strictly decrease over the last `window` ratios whose
/// records stay at or above the floating-point floor on ||F||.
AuditResult audit_superlinear_signature(const IterationTrace& trace, int window = 5,
                                        double floor = 1e-14);

inline constexpr double kResidualFloor = 1e-14;
inline constexpr double kLipschitzSafety = 1.5;

}  // namespace broyden_lab::theory
