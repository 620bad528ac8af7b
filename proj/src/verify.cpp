#include "broyden_lab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include <Eigen/SVD>

#include "broyden_lab/bench.hpp"

namespace broyden_lab {

std::optional<VerifySuite> parse_verify_suite(std::string_view name) {
  if (name == "lemmas") return VerifySuite::Lemmas;
  if (name == "bounds") return VerifySuite::Bounds;
  if (name == "jacobians") return VerifySuite::Jacobians;
  if (name == "all") return VerifySuite::All;
  return std::nullopt;
}

bool SuiteReport::passed() const {
  return std::all_of(lines.begin(), lines.end(),
                     [](const CheckLine& l) { return l.passed || l.skipped; });
}

void print_report(std::ostream& out, const SuiteReport& report) {
  for (const auto& l : report.lines) {
    out << l.name << ": " << (l.skipped ? "SKIP" : l.passed ? "PASS" : "FAIL");
    if (l.slack) {
      char buf[48];
      std::snprintf(buf, sizeof buf, " slack=%.3e", *l.slack);
      out << buf;
    }
    if (!l.detail.empty()) out << " (" << l.detail << ")";
    out << '\n';
  }
  out << (report.passed() ? "verify: PASS" : "verify: FAIL") << '\n';
}

theory::ProblemConstants random_feasible_constants(RngStream& stream) {
  theory::ProblemConstants k;
  k.n = 2 + static_cast<int>(stream.index(49));
  k.c = std::pow(10.0, stream.uniform(-1.0, 1.0));
  k.M = std::pow(10.0, stream.uniform(-1.0, 1.0));
  const double total = stream.uniform(0.0, 1.0 / 3.0);
  const double share = stream.uniform01();
  k.sigma0 = share * total / k.c;
  k.r0 = (1.0 - share) * total / (48.0 * std::sqrt(double(k.n)) * k.c * k.M);
  return k;
}

namespace {

double svd_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

Matrix random_matrix(Index n, RngStream& s) {
  Matrix m(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) m(i, j) = s.normal();
  return m;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Worst {
  double slack = std::numeric_limits<double>::infinity();
  void add(double s) { slack = std::min(slack, s); }
};

// ----------------------------------------------------------------- lemmas

CheckLine check_greedy_contraction() {
  RngStream s(101);
  Worst w;
  int cases = 0;
  for (Index n : {2, 5, 20}) {
    for (int t = 0; t < 40; ++t, ++cases) {
      const Matrix B = random_matrix(n, s);
      const Matrix A = random_matrix(n, s);
      const Index i = greedy_direction(B, A);
      const Matrix Bp = broyd_matrix(B, A, Vector(Vector::Unit(n, i)));
      const double before = (B - A).squaredNorm();
      const double after = (Bp - A).squaredNorm();
      w.add(((1.0 - 1.0 / double(n)) * before - after) / before);
    }
  }
  return {"greedy contraction", w.slack >= -1e-12, false, w.slack,
          std::to_string(cases) + " instances"};
}

CheckLine check_random_expectation() {
  RngStream s(102);
  double worst = 0.0;
  for (int t = 0; t < 30; ++t) {
    const Index n = 2 + s.index(10);
    const Matrix B = random_matrix(n, s);
    const Matrix A = random_matrix(n, s);
    double mean = 0.0;
    for (Index i = 0; i < n; ++i) mean += (broyd_matrix(B, A, Vector(Vector::Unit(n, i))) - A).squaredNorm();
    mean /= double(n);
    const double expect = (1.0 - 1.0 / double(n)) * (B - A).squaredNorm();
    worst = std::max(worst, std::abs(mean - expect) / expect);
  }
  return {"random contraction in expectation", worst <= 1e-10, false, 1e-10 - worst,
          "max relative error " + fmt("%.2e", worst)};
}

CheckLine check_monotonicity() {
  RngStream s(103);
  Worst fro;
  Worst spec;
  double gram = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Index n = 2 + s.index(8);
    const Matrix B = random_matrix(n, s);
    const Matrix A = random_matrix(n, s);
    const Matrix C = random_matrix(n, s) + 3.0 * Matrix::Identity(n, n);
    const Vector u = s.normal_vector(n);
    const Matrix Bp = broyd_matrix(B, A, u);
    const Matrix pre = C * (B - A);
    const Matrix post = C * (Bp - A);
    fro.add((pre.norm() - post.norm()) / std::max(1.0, pre.norm()));
    spec.add((svd_norm(pre) - svd_norm(post)) / std::max(1.0, svd_norm(pre)));
    const Matrix expect = pre * pre.transpose() - (pre * u) * (pre * u).transpose() / u.squaredNorm();
    gram = std::max(gram, (post * post.transpose() - expect).cwiseAbs().maxCoeff() /
                              std::max(1.0, expect.cwiseAbs().maxCoeff()));
  }
  const bool ok = fro.slack >= -1e-12 && spec.slack >= -1e-12 && gram <= 1e-10;
  return {"update monotonicity", ok, false, std::min(fro.slack, spec.slack),
          "frobenius " + fmt("%.2e", fro.slack) + ", spectral " + fmt("%.2e", spec.slack) +
              ", gram identity error " + fmt("%.2e", gram)};
}

CheckLine check_secant_and_inverse() {
  RngStream s(104);
  double secant = 0.0;
  double inverse = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Index n = 2 + s.index(19);
    const Matrix B = random_matrix(n, s) + 2.0 * std::sqrt(double(n)) * Matrix::Identity(n, n);
    const Vector u = s.normal_vector(n);
    const Vector y = s.normal_vector(n);
    const Matrix Bp = broyden_secant_update(B, y, u);
    secant = std::max(secant, (Bp * u - y).norm() / (1.0 + y.norm()));
    try {
      const Matrix Hp = sherman_morrison_inverse(lu_inverse(B), y, u);
      inverse = std::max(inverse, (Hp * Bp - Matrix::Identity(n, n)).norm() /
                                      std::max(1.0, Bp.norm()));
    } catch (const Error&) {
    }
  }
  const bool ok = secant <= 1e-12 && inverse <= 1e-8;
  return {"secant equation and inverse update", ok, false, std::min(1e-12 - secant, 1e-8 - inverse),
          "secant " + fmt("%.2e", secant) + ", inverse " + fmt("%.2e", inverse)};
}

CheckLine check_neumann() {
  RngStream s(105);
  Worst w;
  for (int t = 0; t < 100; ++t) {
    const Index n = 2 + s.index(8);
    Matrix E = random_matrix(n, s);
    const double target = s.uniform(0.01, 0.9);
    E *= target / svd_norm(E);
    const auto b = theory::neumann_inverse_bound(target);
    const Matrix inv = lu_inverse(Matrix(Matrix::Identity(n, n) - E));
    w.add(b.inv_bound - svd_norm(inv));
    w.add(b.dev_bound - svd_norm(inv - Matrix::Identity(n, n)));
  }
  return {"neumann inverse bound", w.slack >= -1e-10, false, w.slack, "100 instances"};
}

struct HEquationRun {
  ProblemPtr problem;
  IterationTrace trace;
  ConstantEstimates est;
};

HEquationRun hequation_run(Index n, double c, double rho, std::uint64_t seed, Method method) {
  HEquationRun run;
  run.problem = make_hequation(n, c);
  RngStream x0s(seed, 2);
  const Vector x0 = draw_x0(*run.problem, X0Distribution::NearSolution, rho, x0s);
  SolverConfig cfg;
  cfg.method = method;
  cfg.direction_rule.seed = seed;
  cfg.record_sigma = true;
  cfg.record_spectral_sigma = true;
  run.trace = solve(*run.problem, x0, cfg);
  RngStream es(seed, 3);
  run.est = estimate_constants(*run.problem, 0.0, 100, es);
  return run;
}

CheckLine from_audit(const theory::AuditResult& a, std::string name) {
  CheckLine l{std::move(name), a.passed, false, std::nullopt, a.detail};
  if (a.checked > 0) l.slack = a.worst_slack;
  const std::string counts = std::to_string(a.checked) + " checked, " + std::to_string(a.skipped) + " skipped";
  l.detail = l.detail.empty() ? counts : l.detail + "; " + counts;
  if (a.advisory) l.detail += "; estimated constants";
  if (a.checked == 0) l.skipped = true;
  return l;
}

std::vector<CheckLine> check_audits() {
  std::vector<CheckLine> out;
  for (Method m : {Method::BroydenGreedy, Method::BroydenRandom}) {
    const auto run = hequation_run(20, 0.5, 0.01, 7, m);
    const double M = theory::kLipschitzSafety * run.est.M_hat;
    const std::string tag = std::string(" [") + std::string(to_string(m)) + "]";
    out.push_back(from_audit(theory::audit_sigma_recursion(run.trace, 20, M), "sigma recursion" + tag));
    out.push_back(from_audit(theory::audit_r_recursion(run.trace, run.est.c_hat, M), "r recursion" + tag));
    if (m == Method::BroydenGreedy) {
      theory::ProblemConstants k;
      k.c = run.est.c_hat;
      k.M = M;
      k.n = 20;
      k.r0 = run.trace.records.front().r_k.value_or(0.0);
      k.sigma0 = run.trace.records.front().sigma_spectral.value_or(0.0);
      auto line = from_audit(theory::audit_jacobian_decay(run.trace, 20, run.est.c_hat),
                             "jacobian decay" + tag);
      if (!theory::check_initial_condition(k)) {
        line.skipped = true;
        line.detail += "; initial condition not met";
      }
      out.push_back(line);
    }
  }
  return out;
}

CheckLine check_taylor() {
  Worst w;
  int samples = 0;
  const ProblemPtr problems[] = {make_hequation(20, 0.5), gen_logsumexp(10, 15, 11, 1.0)};
  for (const auto& p : problems) {
    RngStream s(106);
    const double radius = 0.1;
    const auto est = estimate_constants(*p, radius, 200, s);
    const Vector& xs = p->known_solution()->x;
    const Matrix js = p->jacobian(xs);
    const double bound = theory::kLipschitzSafety * est.M_hat / 2.0;
    for (int t = 0; t < 100; ++t, ++samples) {
      const double r = std::pow(10.0, s.uniform(-4.0, -1.0));
      const Vector d = r * s.unit_sphere(p->dim());
      const double rem = (p->residual(xs + d) - js * d).norm();
      w.add((bound * r * r - rem) / (r * r));
    }
  }
  return {"taylor remainder", w.slack >= 0.0, false, w.slack,
          std::to_string(samples) + " samples, M estimated"};
}

CheckLine check_superlinear() {
  CheckLine l{"superlinear signature", true, false, std::nullopt, ""};
  for (Method m : {Method::BroydenGreedy, Method::BroydenRandom}) {
    const auto run = hequation_run(100, 0.9, 0.1, 0, m);
    const auto a = theory::audit_superlinear_signature(run.trace, 5, theory::kResidualFloor);
    const bool ok = run.trace.converged() && run.trace.iterations() <= 50 && a.passed;
    l.passed = l.passed && ok;
    if (a.checked > 0) l.slack = l.slack ? std::min(*l.slack, a.worst_slack) : a.worst_slack;
    if (!l.detail.empty()) l.detail += "; ";
    l.detail += std::string(to_string(m)) + " " + std::to_string(run.trace.iterations()) + " iters, " + a.detail;
  }
  return l;
}

CheckLine check_linear_greedy_decay() {
  Worst w;
  for (Index n : {5, 20}) {
    auto p = make_random_linear_problem(n, 200 + n);
    RngStream s(107, n);
    SolverConfig cfg;
    cfg.method = Method::BroydenGreedy;
    cfg.init = {InitKind::ScaledIdentity, 1.0};
    cfg.record_sigma = true;
    cfg.max_iters = 5 * static_cast<int>(n);
    cfg.tol_residual = 1e-300;
    const auto tr = solve(*p, s.normal_vector(n), cfg);
    const double s0 = *tr.records.front().sigma_abs;
    for (const auto& r : tr.records) {
      if (!r.sigma_abs) continue;
      const double bound = std::pow(1.0 - 1.0 / double(n), r.k / 2.0) * s0;
      w.add((bound - *r.sigma_abs) / s0);
    }
  }
  return {"greedy jacobian decay on linear systems", w.slack >= -1e-12, false, w.slack, "n in {5, 20}"};
}

// ----------------------------------------------------------------- bounds

CheckLine check_crossover_table() {
  int rows = 0;
  int bad = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (long long n = 2; n <= 50; ++n) {
    const long long k0 = theory::crossover_iteration(n);
    for (const auto& r : theory::compare_rates(n, k0, 10 * k0)) {
      ++rows;
      if (!r.greedy_faster) ++bad;
      worst = std::min(worst, r.log_original - r.log_greedy);
    }
  }
  return {"rate crossover table", bad == 0, false, worst,
          std::to_string(rows) + " rows, log-space margin"};
}

CheckLine check_log_space() {
  double worst = 0.0;
  for (long long n = 2; n <= 20; ++n) {
    for (long long k = 0; k <= 30; ++k) {
      double direct = 1.0;
      for (long long j = 0; j < k; ++j) direct *= std::exp(1.0);
      direct *= std::pow(1.0 - 1.0 / double(n), double(k) * double(k - 1) / 4.0);
      worst = std::max(worst, std::abs(theory::greedy_rate_bound(k, n) - direct) / direct);
      double rnd = std::pow(4.0 * double(n * n) * std::exp(1.0) / 0.1, double(k)) *
                   std::pow(1.0 - 1.0 / double(n + 1), double(k) * double(k - 1) / 4.0);
      if (std::isfinite(rnd) && rnd > 0.0) {
        worst = std::max(worst, std::abs(theory::random_rate_bound(k, n, 0.1) - rnd) / rnd);
      }
    }
  }
  for (long long k = 1; k <= 60; ++k) {
    const double direct = 2.0 * std::pow(double(k), -double(k) / 2.0);
    worst = std::max(worst, std::abs(theory::original_broyden_bound(k) - direct) / direct);
  }
  return {"log-space evaluation", worst <= 1e-12, false, 1e-12 - worst,
          "max relative deviation " + fmt("%.2e", worst)};
}

CheckLine check_qm() {
  RngStream s(108);
  Worst bracket;
  Worst constraints;
  int non_minimal = 0;
  for (int t = 0; t < 100; ++t) {
    const auto k = random_feasible_constants(s);
    const double q = theory::compute_qm(k);
    const auto [lo, hi] = theory::qm_bracket(k);
    bracket.add(std::min(q - lo, hi - q));
    const auto sl = theory::qm_constraint_slack(k, q);
    constraints.add(std::min(sl.first, sl.second));
    const auto below = theory::qm_constraint_slack(k, q - 1e-6);
    if (below.first >= 0.0 && below.second >= 0.0) ++non_minimal;
  }
  const bool ok = bracket.slack >= 0.0 && constraints.slack >= -1e-10 && non_minimal == 0;
  return {"q_m bracket and constraints", ok, false, std::min(bracket.slack, constraints.slack + 1e-10),
          "constraint slack " + fmt("%.2e", constraints.slack) + ", " +
              std::to_string(non_minimal) + " non-minimal"};
}

CheckLine check_thresholds() {
  bool ok = true;
  for (long long n = 2; n <= 20; ++n) {
    try {
      theory::jacobian_rate_bound_greedy(4 * n + 2, n, 1.0);
      ok = false;
    } catch (const ThresholdNotMet& e) {
      ok = ok && e.min_k() == 4 * n + 3;
    }
    const double r = theory::jacobian_rate_bound_greedy(4 * n + 5, n, 1.0) /
                     theory::jacobian_rate_bound_greedy(4 * n + 3, n, 1.0);
    ok = ok && std::abs(r - (1.0 - 1.0 / double(n))) <= 1e-12;
  }
  return {"jacobian bound thresholds", ok, false, std::nullopt, "n in [2, 20]"};
}

CheckLine check_initial_gate() {
  theory::ProblemConstants k;
  k.n = 4;
  k.c = 1.0;
  k.M = 1.0;
  bool ok = theory::check_initial_condition(k);
  k.r0 = 1.0;
  ok = ok && !theory::check_initial_condition(k);
  k.n = 2;
  k.r0 = 1.0 / 3.0 / (48.0 * std::sqrt(2.0) * 2.0);
  k.c = 2.0;
  ok = ok && theory::check_initial_condition(k);
  return {"initial condition gate", ok, false, std::nullopt, ""};
}

// -------------------------------------------------------------- jacobians

// affine_step: central differences are exact on affine maps, so the step only
// trades against rounding and can be large.
CheckLine check_fd(const std::string& name, const ProblemPtr& p, double scale, double tol,
                   bool affine_step = false) {
  RngStream s(109, static_cast<std::uint64_t>(p->dim()));
  double worst = 0.0;
  const Vector base = p->known_solution() ? p->known_solution()->x : Vector::Zero(p->dim());
  for (int t = 0; t < 20; ++t) {
    const Vector x = base + scale * s.unit_sphere(p->dim()) * s.uniform01();
    const Matrix J = p->jacobian(x);
    const Matrix F = finite_diff_jacobian(*p, x, affine_step ? std::max(1.0, x.norm()) : 0.0);
    worst = std::max(worst, (J - F).norm() / std::max(1.0, J.norm()));
  }
  return {"jacobian vs central differences [" + name + "]", worst <= tol, false, tol - worst,
          "max relative error " + fmt("%.2e", worst)};
}

CheckLine check_columns_and_actions() {
  RngStream s(110);
  double worst = 0.0;
  const ProblemPtr problems[] = {make_random_linear_problem(8, 3), gen_logsumexp(8, 12, 4, 1.0),
                                 make_hequation(12, 0.7)};
  for (const auto& p : problems) {
    const Vector x = p->known_solution()->x + 0.05 * s.unit_sphere(p->dim());
    const Matrix J = p->jacobian(x);
    for (Index i = 0; i < p->dim(); ++i) {
      worst = std::max(worst, (p->jacobian_column(x, i) - J.col(i)).norm() / std::max(1.0, J.norm()));
    }
    const Vector v = s.normal_vector(p->dim());
    worst = std::max(worst, (p->jacobian_action(x, v) - J * v).norm() / std::max(1.0, J.norm() * v.norm()));
  }
  return {"jacobian columns and actions", worst <= 1e-12, false, 1e-12 - worst,
          "max relative error " + fmt("%.2e", worst)};
}

CheckLine check_logsumexp_shift() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = gen_logsumexp(6 + seed, 9 + seed, seed, 1.0);
    worst = std::max(worst, p->residual(Vector::Zero(p->dim())).norm());
  }
  return {"logsumexp gradient vanishes at zero", worst <= 1e-12, false, 1e-12 - worst,
          "max norm " + fmt("%.2e", worst)};
}

}  // namespace

SuiteReport run_verify(VerifySuite suite) {
  SuiteReport r;
  auto add = [&](CheckLine l) { r.lines.push_back(std::move(l)); };
  const bool all = suite == VerifySuite::All;
  if (all || suite == VerifySuite::Lemmas) {
    add(check_greedy_contraction());
    add(check_random_expectation());
    add(check_monotonicity());
    add(check_secant_and_inverse());
    add(check_neumann());
    add(check_linear_greedy_decay());
    for (auto& l : check_audits()) add(std::move(l));
    add(check_taylor());
    add(check_superlinear());
  }
  if (all || suite == VerifySuite::Bounds) {
    add(check_crossover_table());
    add(check_log_space());
    add(check_qm());
    add(check_thresholds());
    add(check_initial_gate());
  }
  if (all || suite == VerifySuite::Jacobians) {
    add(check_fd("linear", make_random_linear_problem(10, 5), 1.0, 1e-12, true));
    add(check_fd("logsumexp", gen_logsumexp(20, 30, 6, 1.0), 1.0, 1e-5));
    add(check_fd("hequation", make_hequation(50, 0.9), 0.1, 1e-5));
    add(check_columns_and_actions());
    add(check_logsumexp_shift());
  }
  return r;
}

}  // namespace broyden_lab
