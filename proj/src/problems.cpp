#include "broyden_lab/problems.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace broyden_lab {

namespace {

nlohmann::json vector_to_json(const Vector& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

Vector vector_from_json(const nlohmann::json& doc) {
  const auto values = doc.get<std::vector<double>>();
  Vector v(static_cast<Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Index>(i)) = values[i];
  return v;
}

Matrix matrix_from_json(const nlohmann::json& doc) {
  const auto rows = doc.get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw Error(ErrorKind::InvalidArgument, "empty matrix in problem document");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) {
      throw Error(ErrorKind::DimensionMismatch, "ragged matrix in problem document");
    }
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
  }
  return m;
}

void add_solution(nlohmann::json& doc, const std::optional<KnownSolution>& sol) {
  if (!sol) return;
  doc["x_star"] = vector_to_json(sol->x);
  doc["x_star_residual"] = sol->residual;
}

nlohmann::json seed_json(const std::optional<std::uint64_t>& seed) {
  return seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
}

std::optional<std::uint64_t> seed_from_json(const nlohmann::json& doc) {
  if (!doc.contains("seed") || doc.at("seed").is_null()) return std::nullopt;
  return doc.at("seed").get<std::uint64_t>();
}

}  // namespace

void Problem::check_dim(const Vector& x) const {
  if (x.size() != dim()) {
    throw Error(ErrorKind::DimensionMismatch,
                kind() + ": expected x of length " + std::to_string(dim()) + ", got " +
                    std::to_string(x.size()));
  }
}

// ---------------------------------------------------------------- linear

LinearProblem::LinearProblem(Matrix a, Vector b, std::optional<std::uint64_t> seed)
    : a_(std::move(a)), b_(std::move(b)), seed_(seed) {
  require_square(a_, "linear problem matrix");
  if (b_.size() != a_.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "linear problem: b length differs from A");
  }
  require_finite(a_, "linear problem matrix");
  require_finite(b_, "linear problem rhs");
  Vector x = lu_solve(a_, b_);
  const double res = (a_ * x - b_).norm();
  known_solution_ = KnownSolution{std::move(x), res, "lu_solve"};
}

Vector LinearProblem::residual(const Vector& x) const {
  check_dim(x);
  return a_ * x - b_;
}

Matrix LinearProblem::jacobian(const Vector& x) const {
  check_dim(x);
  return a_;
}

Vector LinearProblem::jacobian_column(const Vector& x, Index i) const {
  check_dim(x);
  return a_.col(i);
}

Vector LinearProblem::jacobian_action(const Vector& x, const Vector& v) const {
  check_dim(x);
  return a_ * v;
}

nlohmann::json LinearProblem::to_json() const {
  nlohmann::json doc = {{"kind", kind()}, {"n", dim()}, {"seed", seed_json(seed_)}};
  doc["A"] = matrix_to_json(a_);
  doc["b"] = vector_to_json(b_);
  add_solution(doc, known_solution_);
  return doc;
}

std::shared_ptr<LinearProblem> make_linear_problem(const Matrix& a, const Vector& b) {
  return std::make_shared<LinearProblem>(a, b);
}

std::shared_ptr<LinearProblem> make_random_linear_problem(Index n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "linear problem: n must be positive");
  RngStream stream(seed);
  Matrix a(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) a(i, j) = stream.uniform(-1.0, 1.0);
  }
  a.diagonal().array() += double(n);
  Vector b = stream.uniform_vector(n, -1.0, 1.0);
  return std::make_shared<LinearProblem>(std::move(a), std::move(b), seed);
}

// ------------------------------------------------------------- logsumexp

LogSumExpProblem::LogSumExpProblem(Matrix c, Vector b, double gamma,
                                   std::optional<std::uint64_t> seed)
    : c_(std::move(c)), b_(std::move(b)), gamma_(gamma), seed_(seed) {
  if (c_.rows() < 1 || c_.cols() < 1) {
    throw Error(ErrorKind::InvalidArgument, "logsumexp: n and m must be positive");
  }
  if (b_.size() != c_.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "logsumexp: b length differs from m");
  }
  if (!(gamma_ > 0.0)) throw Error(ErrorKind::InvalidArgument, "logsumexp: gamma must be > 0");
  require_finite(c_, "logsumexp coefficients");
  require_finite(b_, "logsumexp offsets");
  const Vector zero = Vector::Zero(c_.rows());
  known_solution_ = KnownSolution{zero, residual(zero).norm(), "shift-construction"};
}

Vector LogSumExpProblem::softmax_weights(const Vector& x) const {
  check_dim(x);
  Vector z = c_.transpose() * x - b_;
  z.array() -= z.maxCoeff();
  Vector w = z.array().exp().matrix();
  return w / w.sum();
}

double LogSumExpProblem::objective(const Vector& x) const {
  check_dim(x);
  const Vector cx = c_.transpose() * x;
  const Vector z = cx - b_;
  const double zmax = z.maxCoeff();
  const double lse = zmax + std::log((z.array() - zmax).exp().sum());
  return lse + 0.5 * cx.squaredNorm() + 0.5 * gamma_ * x.squaredNorm();
}

Vector LogSumExpProblem::residual(const Vector& x) const {
  const Vector pi = softmax_weights(x);
  return c_ * pi + c_ * (c_.transpose() * x) + gamma_ * x;
}

Matrix LogSumExpProblem::jacobian(const Vector& x) const {
  const Vector pi = softmax_weights(x);
  const Vector cpi = c_ * pi;
  const Vector weights = pi.array() + 1.0;
  Matrix j = c_ * weights.asDiagonal() * c_.transpose();
  j.noalias() -= cpi * cpi.transpose();
  j.diagonal().array() += gamma_;
  return j;
}

Vector LogSumExpProblem::jacobian_column(const Vector& x, Index i) const {
  const Vector pi = softmax_weights(x);
  const Vector cpi = c_ * pi;
  const Vector row = c_.row(i).transpose();
  Vector col = c_ * ((pi.array() + 1.0) * row.array()).matrix() - cpi * cpi(i);
  col(i) += gamma_;
  return col;
}

Vector LogSumExpProblem::jacobian_action(const Vector& x, const Vector& v) const {
  const Vector pi = softmax_weights(x);
  const Vector cpi = c_ * pi;
  const Vector ctv = c_.transpose() * v;
  return c_ * ((pi.array() + 1.0) * ctv.array()).matrix() - cpi * cpi.dot(v) + gamma_ * v;
}

double LogSumExpProblem::smoothness_constant() const {
  const double s = spectral_norm(c_);
  return 2.0 * s * s + gamma_;
}

nlohmann::json LogSumExpProblem::to_json() const {
  nlohmann::json doc = {{"kind", kind()},    {"n", dim()},       {"seed", seed_json(seed_)},
                        {"m", terms()},      {"gamma", gamma_}};
  if (!seed_) {
    doc["C"] = matrix_to_json(c_);
    doc["b"] = vector_to_json(b_);
  }
  add_solution(doc, known_solution_);
  return doc;
}

std::shared_ptr<LogSumExpProblem> gen_logsumexp(Index n, Index m, std::uint64_t seed,
                                                double gamma) {
  if (n < 1 || m < 1) throw Error(ErrorKind::InvalidArgument, "logsumexp: n, m must be >= 1");
  RngStream stream(seed);
  Matrix c_hat(n, m);
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < n; ++i) c_hat(i, j) = stream.uniform(-1.0, 1.0);
  }
  Vector b = stream.uniform_vector(m, -1.0, 1.0);

  // grad f-hat(0) = C-hat softmax(-b)
  Vector z = -b;
  z.array() -= z.maxCoeff();
  Vector pi = z.array().exp().matrix();
  pi /= pi.sum();
  const Vector shift = c_hat * pi;
  Matrix c = c_hat.colwise() - shift;
  return std::make_shared<LogSumExpProblem>(std::move(c), std::move(b), gamma, seed);
}

Vector logsumexp_F(const LogSumExpProblem& p, const Vector& x) { return p.residual(x); }
Matrix logsumexp_J(const LogSumExpProblem& p, const Vector& x) { return p.jacobian(x); }

// ------------------------------------------------------------- hequation

namespace {

void check_hequation_params(Index n, double c) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "hequation: N must be positive");
  if (!(c > 0.0 && c < 1.0)) throw Error(ErrorKind::InvalidArgument, "hequation: c must be in (0,1)");
}

}  // namespace

HEquationProblem::HEquationProblem(Index n, double c, std::optional<KnownSolution> reference)
    : c_(c) {
  check_hequation_params(n, c);
  mu_.resize(n);
  for (Index i = 0; i < n; ++i) mu_(i) = (double(i + 1) - 0.5) / double(n);
  kernel_.resize(n, n);
  const double scale = c / (2.0 * double(n));
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) kernel_(i, j) = scale * mu_(i) / (mu_(i) + mu_(j));
  }
  known_solution_ = std::move(reference);
}

HEquationProblem::HEquationProblem(Index n, double c) : HEquationProblem(n, c, std::nullopt) {
  Vector x = Vector::Ones(n);
  double best = residual(x).norm();
  Vector best_x = x;
  bool reached = best <= kHEquationSolutionTol;
  int polish = 0;
  for (int it = 0; it < 200 && polish < 3; ++it) {
    const Vector f = residual(x);
    x -= lu_solve(jacobian(x), f);
    if (!x.allFinite()) break;
    const double res = residual(x).norm();
    if (reached && res >= best) ++polish;
    if (res < best) {
      best = res;
      best_x = x;
    }
    if (best <= kHEquationSolutionTol) reached = true;
    if (reached && best == 0.0) break;
  }
  known_solution_ = KnownSolution{best_x, best, "newton"};
}

Vector HEquationProblem::denominators(const Vector& x) const {
  check_dim(x);
  Vector g = Vector::Ones(dim()) - kernel_ * x;
  for (Index i = 0; i < g.size(); ++i) {
    if (!(std::abs(g(i)) > kPoleTol)) {
      throw Error(ErrorKind::PoleEncountered,
                  "hequation: |g_" + std::to_string(i) + "| <= 1e-12, iterate left the domain");
    }
  }
  return g;
}

Vector HEquationProblem::residual(const Vector& x) const {
  const Vector g = denominators(x);
  return x - g.cwiseInverse();
}

Matrix HEquationProblem::jacobian(const Vector& x) const {
  const Vector g = denominators(x);
  Matrix j = -(g.array().square().inverse().matrix().asDiagonal() * kernel_);
  j.diagonal().array() += 1.0;
  return j;
}

Vector HEquationProblem::jacobian_column(const Vector& x, Index i) const {
  const Vector g = denominators(x);
  Vector col = -(kernel_.col(i).array() / g.array().square()).matrix();
  col(i) += 1.0;
  return col;
}

nlohmann::json HEquationProblem::to_json() const {
  nlohmann::json doc = {{"kind", kind()}, {"n", dim()}, {"seed", nullptr}, {"c", c_}};
  add_solution(doc, known_solution_);
  return doc;
}

std::shared_ptr<HEquationProblem> make_hequation(Index n, double c) {
  return std::make_shared<HEquationProblem>(n, c);
}

Vector hequation_F(const HEquationProblem& p, const Vector& x) { return p.residual(x); }
Matrix hequation_J(const HEquationProblem& p, const Vector& x) { return p.jacobian(x); }

// ------------------------------------------------------- finite differences

double default_fd_step(const Vector& x) { return 1e-6 * std::max(1.0, x.norm()); }

Matrix finite_diff_jacobian(const Problem& p, const Vector& x, double h) {
  if (h <= 0.0) h = default_fd_step(x);
  const Index n = p.dim();
  Matrix j(n, n);
  Vector xp = x;
  Vector xm = x;
  for (Index i = 0; i < n; ++i) {
    xp(i) = x(i) + h;
    xm(i) = x(i) - h;
    j.col(i) = (p.residual(xp) - p.residual(xm)) / (2.0 * h);
    xp(i) = x(i);
    xm(i) = x(i);
  }
  return j;
}

Vector finite_diff_action(const Problem& p, const Vector& x, const Vector& v, double h) {
  if (h <= 0.0) h = default_fd_step(x);
  return (p.residual(x + h * v) - p.residual(x - h * v)) / (2.0 * h);
}

// --------------------------------------------------------------- constants

ConstantEstimates estimate_constants(const Problem& p, double radius, int samples,
                                     RngStream& stream) {
  const auto& sol = p.known_solution();
  if (!sol) throw Error(ErrorKind::InvalidArgument, "estimate_constants: no known solution");
  if (samples < 1) throw Error(ErrorKind::InvalidArgument, "estimate_constants: samples < 1");
  const Vector& xs = sol->x;
  if (radius <= 0.0) radius = 0.1 * (1.0 + xs.norm());

  const Matrix j_star = p.jacobian(xs);
  ConstantEstimates est;
  est.radius = radius;
  est.samples = samples;
  // Full SVD here: J(x) - J(x*) is often symmetric indefinite, and its nearly
  // tied top singular values stall power iteration.
  const auto top_sv = [](const Matrix& m) { return Eigen::JacobiSVD<Matrix>(m).singularValues()(0); };
  const Vector sv = Eigen::JacobiSVD<Matrix>(j_star).singularValues();
  if (!(sv.minCoeff() >= kPivotRelTol * sv(0))) {
    throw Error(ErrorKind::SingularMatrix, "estimate_constants: J(x*) is singular");
  }
  est.c_hat = 1.0 / sv.minCoeff();

  const Index n = p.dim();
  for (int s = 0; s < samples; ++s) {
    const Vector dir = stream.unit_sphere(n);
    const double r = radius * std::pow(1.0 - stream.uniform01(), 1.0 / double(n));
    if (r == 0.0) continue;
    try {
      const Matrix diff = p.jacobian(xs + r * dir) - j_star;
      est.M_hat = std::max(est.M_hat, top_sv(diff) / r);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::PoleEncountered) throw;
    }
  }
  return est;
}

// -------------------------------------------------------------------- json

ProblemPtr problem_from_json(const nlohmann::json& doc) {
  const auto kind = doc.at("kind").get<std::string>();
  const Index n = doc.at("n").get<Index>();
  const auto seed = seed_from_json(doc);
  std::optional<KnownSolution> reference;
  if (doc.contains("x_star")) {
    reference = KnownSolution{vector_from_json(doc.at("x_star")),
                              doc.value("x_star_residual", 0.0), "json"};
  }

  if (kind == "linear") {
    if (doc.contains("A")) {
      return std::make_shared<LinearProblem>(matrix_from_json(doc.at("A")),
                                             vector_from_json(doc.at("b")), seed);
    }
    if (!seed) throw Error(ErrorKind::InvalidArgument, "linear problem needs A/b or a seed");
    return make_random_linear_problem(n, *seed);
  }
  if (kind == "logsumexp") {
    const double gamma = doc.at("gamma").get<double>();
    if (seed) return gen_logsumexp(n, doc.at("m").get<Index>(), *seed, gamma);
    return std::make_shared<LogSumExpProblem>(matrix_from_json(doc.at("C")),
                                              vector_from_json(doc.at("b")), gamma);
  }
  if (kind == "hequation") {
    const double c = doc.at("c").get<double>();
    if (reference) {
      if (reference->x.size() != n) {
        throw Error(ErrorKind::DimensionMismatch, "hequation: x_star length differs from n");
      }
      return std::make_shared<HEquationProblem>(n, c, reference);
    }
    return make_hequation(n, c);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown problem kind '" + kind + "'");
}

}  // namespace broyden_lab
