#include "broyden_lab/theory.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>

namespace broyden_lab::theory {

namespace {

void require_n(long long n, const char* what) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, std::string(what) + ": needs n >= 2");
}

void require_k(long long k, long long min_k, const char* what) {
  if (k < min_k) {
    throw Error(ErrorKind::InvalidArgument,
                std::string(what) + ": needs k >= " + std::to_string(min_k));
  }
}

void require_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "delta must lie in (0, 1)");
  }
}

double safe_exp(double log_value) { return std::exp(log_value); }

}  // namespace

double initial_condition_lhs(const ProblemConstants& k) {
  return 48.0 * std::sqrt(double(k.n)) * k.c * k.M * k.r0 + k.c * k.sigma0;
}

bool check_initial_condition(const ProblemConstants& k) {
  return initial_condition_lhs(k) <= 1.0 / 3.0;
}

ProblemConstants measure_constants(const Problem& p, const Vector& x0, const Matrix& b0,
                                   double c, double M, NormKind norm) {
  const auto& sol = p.known_solution();
  if (!sol) throw Error(ErrorKind::InvalidArgument, "measure_constants: no known solution");
  ProblemConstants k;
  k.c = c;
  k.M = M;
  k.n = static_cast<int>(p.dim());
  k.r0 = (x0 - sol->x).norm();
  const Matrix diff = b0 - p.jacobian(x0);
  k.sigma0 = norm == NormKind::Spectral ? spectral_norm(diff) : diff.norm();
  k.sigma0_norm = norm;
  return k;
}

double log_greedy_rate_bound(long long k, long long n) {
  require_n(n, "greedy_rate_bound");
  require_k(k, 0, "greedy_rate_bound");
  const double kk = double(k);
  return kk + kk * (kk - 1.0) / 4.0 * std::log1p(-1.0 / double(n));
}

double greedy_rate_bound(long long k, long long n) { return safe_exp(log_greedy_rate_bound(k, n)); }

double log_random_rate_bound(long long k, long long n, double delta) {
  require_n(n, "random_rate_bound");
  require_k(k, 0, "random_rate_bound");
  require_delta(delta);
  const double kk = double(k);
  const double nn = double(n);
  const double prefactor = std::log(4.0 * nn * nn / delta) + 1.0;
  return kk * prefactor + kk * (kk - 1.0) / 4.0 * std::log1p(-1.0 / (nn + 1.0));
}

double random_rate_bound(long long k, long long n, double delta) {
  return safe_exp(log_random_rate_bound(k, n, delta));
}

double jacobian_rate_bound_greedy(long long k, long long n, double c) {
  require_n(n, "jacobian_rate_bound_greedy");
  if (!(c > 0.0)) throw Error(ErrorKind::InvalidArgument, "jacobian_rate_bound_greedy: c > 0");
  const long long threshold = 4 * n + 3;
  if (k < threshold) {
    throw ThresholdNotMet(threshold, "greedy Jacobian bound holds for k >= " +
                                         std::to_string(threshold));
  }
  const double log_bound = std::log(2.0 / c) + 1.0 + double(k) / 2.0 * std::log1p(-1.0 / double(n));
  return safe_exp(log_bound);
}

long long jacobian_threshold_random(long long n, double delta) {
  require_n(n, "jacobian_threshold_random");
  require_delta(delta);
  const double nn = double(n);
  return static_cast<long long>(
      std::ceil(4.0 * (nn + 1.0) * (std::log(4.0 * nn * nn / delta) + 1.0) + 3.0));
}

double jacobian_rate_bound_random(long long k, long long n, double c, double delta) {
  if (!(c > 0.0)) throw Error(ErrorKind::InvalidArgument, "jacobian_rate_bound_random: c > 0");
  const long long threshold = jacobian_threshold_random(n, delta);
  if (k < threshold) {
    throw ThresholdNotMet(threshold, "random Jacobian bound holds for k >= " +
                                         std::to_string(threshold));
  }
  const double nn = double(n);
  const double log_bound = std::log(8.0 * nn * nn / (delta * c)) + 1.0 +
                           double(k) / 2.0 * std::log1p(-1.0 / (nn + 1.0));
  return safe_exp(log_bound);
}

double log_original_broyden_bound(long long k) {
  require_k(k, 1, "original_broyden_bound");
  const double kk = double(k);
  return std::numbers::ln2 - kk / 2.0 * std::log(kk);
}

double original_broyden_bound(long long k) { return safe_exp(log_original_broyden_bound(k)); }

long long crossover_iteration(long long n) {
  require_n(n, "crossover_iteration");
  const double nn = double(n);
  return static_cast<long long>(std::ceil(8.0 * nn * (std::log(nn) + 1.0) + 1.0));
}

QmSlack qm_constraint_slack(const ProblemConstants& k, double q) {
  const double s = k.c * k.sigma0;
  const double a = std::sqrt(double(k.n)) * k.c * k.M * k.r0;
  const double ratio = q / (q + 1.0);
  return {ratio - s, q * (1.0 - q) / 12.0 * (ratio - s) - a};
}

std::pair<double, double> qm_bracket(const ProblemConstants& k) {
  const double a = std::sqrt(double(k.n)) * k.c * k.M * k.r0;
  const double base = k.c * k.sigma0 + std::sqrt(a);
  return {0.5 * base, 7.0 * base};
}

double compute_qm(const ProblemConstants& k) {
  if (!(k.c >= 0.0 && k.M >= 0.0 && k.r0 >= 0.0 && k.sigma0 >= 0.0 && k.n >= 1)) {
    throw Error(ErrorKind::InvalidArgument, "compute_qm: constants must be nonnegative");
  }
  if (!(initial_condition_lhs(k) <= 1.0 / 3.0)) {
    throw Error(ErrorKind::Infeasible, "compute_qm: 48 sqrt(n) c M r0 + c sigma0 > 1/3");
  }
  const double s = k.c * k.sigma0;
  const double q_lo = s / (1.0 - s);
  if (qm_constraint_slack(k, q_lo).second >= 0.0) return q_lo;

  // f(q) = q(1-q)(q/(1+q) - c sigma0) is increasing on [q_lo, 1/2].
  double lo = q_lo;
  double hi = 0.5;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (qm_constraint_slack(k, mid).second >= 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

NeumannBound neumann_inverse_bound(double e_norm) {
  if (!(e_norm >= 0.0 && e_norm < 1.0)) {
    throw Error(ErrorKind::OutOfDomain, "neumann_inverse_bound: needs 0 <= ||E|| < 1");
  }
  return {1.0 / (1.0 - e_norm), e_norm / (1.0 - e_norm)};
}

std::vector<RateRow> compare_rates(long long n, long long k_min, long long k_max) {
  require_n(n, "compare_rates");
  std::vector<RateRow> rows;
  for (long long k = std::max<long long>(1, k_min); k <= k_max; ++k) {
    RateRow r;
    r.n = n;
    r.k = k;
    r.log_original = log_original_broyden_bound(k);
    r.log_greedy = log_greedy_rate_bound(k, n);
    r.original_bound = std::exp(r.log_original);
    r.greedy_bound = std::exp(r.log_greedy);
    r.greedy_faster = r.log_original >= r.log_greedy;
    rows.push_back(r);
  }
  return rows;
}

std::vector<RateRow> compare_rates(long long n, long long k_max) {
  return compare_rates(n, 1, k_max);
}

void write_rate_csv(std::ostream& out, const std::vector<RateRow>& rows, bool header) {
  if (header) out << kRateCsvHeader << '\n';
  char a[40];
  char b[40];
  for (const auto& r : rows) {
    std::snprintf(a, sizeof a, "%.17g", r.original_bound);
    std::snprintf(b, sizeof b, "%.17g", r.greedy_bound);
    out << r.n << ',' << r.k << ',' << a << ',' << b << ',' << (r.greedy_faster ? 1 : 0) << '\n';
  }
}

// ----------------------------------------------------------------- audits

namespace {

constexpr double kAuditRelTol = 1e-12;

void note(AuditResult& res, double slack) {
  if (res.checked == 0 || slack < res.worst_slack) res.worst_slack = slack;
  ++res.checked;
}

}  // namespace

AuditResult audit_sigma_recursion(const IterationTrace& trace, int n, double M) {
  AuditResult res;
  res.name = "sigma recursion";
  res.advisory = true;
  const double rn = std::sqrt(double(n));
  const auto& rec = trace.records;
  for (std::size_t i = 0; i + 1 < rec.size(); ++i) {
    const auto& a = rec[i];
    const auto& b = rec[i + 1];
    if (!a.sigma_abs || !b.sigma_abs || !a.r_k || !b.r_k) {
      ++res.skipped;
      continue;
    }
    const double rs = *a.r_k + *b.r_k;
    const double sk = *a.sigma_abs;
    const double rhs = sk * sk + 2.0 * sk * rn * M * rs + double(n) * M * M * rs * rs;
    const double lhs = *b.sigma_abs * *b.sigma_abs;
    const double slack = (rhs - lhs) / std::max(rhs, std::numeric_limits<double>::min());
    note(res, slack);
    if (lhs > rhs * (1.0 + kAuditRelTol)) {
      res.passed = false;
      res.detail = "violated at k=" + std::to_string(a.k);
    }
  }
  return res;
}

AuditResult audit_r_recursion(const IterationTrace& trace, double c, double M) {
  AuditResult res;
  res.name = "r recursion";
  res.advisory = true;
  const auto& rec = trace.records;
  for (std::size_t i = 0; i + 1 < rec.size(); ++i) {
    const auto& a = rec[i];
    const auto& b = rec[i + 1];
    if (!a.sigma_abs || !a.r_k || !b.r_k || a.res_norm < kResidualFloor ||
        b.res_norm < kResidualFloor) {
      ++res.skipped;
      continue;
    }
    const double gate = c * (*a.sigma_abs + M * *a.r_k);
    if (!(gate < 1.0)) {
      ++res.skipped;
      continue;
    }
    const double bound = (1.5 * c * M * *a.r_k + c * *a.sigma_abs) / (1.0 - gate) * *a.r_k;
    const double slack = (bound - *b.r_k) / std::max(*a.r_k, std::numeric_limits<double>::min());
    note(res, slack);
    if (*b.r_k > bound * (1.0 + 1e-9) + 1e-14) {
      res.passed = false;
      res.detail = "violated at k=" + std::to_string(a.k);
    }
  }
  return res;
}

AuditResult audit_jacobian_decay(const IterationTrace& trace, int n, double c) {
  AuditResult res;
  res.name = "jacobian decay";
  res.advisory = true;
  for (const auto& r : trace.records) {
    const std::optional<double> sigma = r.sigma_spectral ? r.sigma_spectral : r.sigma_abs;
    if (!sigma) {
      ++res.skipped;
      continue;
    }
    const double bound = std::exp(1.0 + double(r.k) / 2.0 * std::log1p(-1.0 / double(n)));
    note(res, bound - c * *sigma);
    if (c * *sigma > bound * (1.0 + kAuditRelTol)) {
      res.passed = false;
      res.detail = "violated at k=" + std::to_string(r.k);
    }
  }
  return res;
}

AuditResult audit_superlinear_signature(const IterationTrace& trace, int window, double floor) {
  AuditResult res;
  res.name = "superlinear signature";
  std::vector<double> ratios;
  const auto& rec = trace.records;
  for (std::size_t i = 0; i + 1 < rec.size(); ++i) {
    const auto& a = rec[i];
    const auto& b = rec[i + 1];
    if (a.res_norm < floor || b.res_norm < floor) break;
    if (!a.r_k || !b.r_k || *a.r_k == 0.0) {
      ++res.skipped;
      continue;
    }
    ratios.push_back(*b.r_k / *a.r_k);
  }
  if (static_cast<int>(ratios.size()) < window) {
    res.passed = false;
    res.detail = "only " + std::to_string(ratios.size()) + " ratios above the floor";
    return res;
  }
  const std::size_t start = ratios.size() - static_cast<std::size_t>(window);
  std::string seq;
  for (std::size_t i = start; i < ratios.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%.3e", i == start ? "" : " ", ratios[i]);
    seq += buf;
    if (i == start) continue;
    note(res, ratios[i - 1] - ratios[i]);
    if (!(ratios[i] < ratios[i - 1])) res.passed = false;
  }
  res.detail = "ratios " + seq;
  return res;
}

}  // namespace broyden_lab::theory
