#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "broyden_lab/densealg.hpp"
#include "broyden_lab/rng.hpp"

namespace broyden_lab {

/// A point x* with F(x*) ~ 0 and a note on how it was obtained.
struct KnownSolution {
  Vector x;
  double residual = 0.0;
  std::string origin;
};

/// Square system F: R^n -> R^n with an analytic Jacobian. Implementations are
/// immutable after construction and safe to evaluate concurrently.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string kind() const = 0;
  virtual Index dim() const = 0;
  virtual Vector residual(const Vector& x) const = 0;
  virtual Matrix jacobian(const Vector& x) const = 0;
  virtual Vector jacobian_column(const Vector& x, Index i) const { return jacobian(x).col(i); }
  virtual Vector jacobian_action(const Vector& x, const Vector& v) const {
    return jacobian(x) * v;
  }

  /// JSON document {"kind", "n", "seed", parameters..., "x_star", "x_star_residual"}.
  virtual nlohmann::json to_json() const = 0;

  const std::optional<KnownSolution>& known_solution() const { return known_solution_; }

 protected:
  void check_dim(const Vector& x) const;

  std::optional<KnownSolution> known_solution_;
};

using ProblemPtr = std::shared_ptr<const Problem>;

/// F(x) = A x - b.
class LinearProblem final : public Problem {
 public:
  LinearProblem(Matrix a, Vector b, std::optional<std::uint64_t> seed = std::nullopt);

  std::string kind() const override { return "linear"; }
  Index dim() const override { return a_.rows(); }
  Vector residual(const Vector& x) const override;
  Matrix jacobian(const Vector& x) const override;
  Vector jacobian_column(const Vector& x, Index i) const override;
  Vector jacobian_action(const Vector& x, const Vector& v) const override;
  nlohmann::json to_json() const override;

  const Matrix& a() const { return a_; }
  const Vector& b() const { return b_; }

 private:
  Matrix a_;
  Vector b_;
  std::optional<std::uint64_t> seed_;
};

std::shared_ptr<LinearProblem> make_linear_problem(const Matrix& a, const Vector& b);

/// Seeded random system with A = G + n I (G entries Unif[-1,1]), b Unif[-1,1].
/// Strict diagonal dominance keeps A well conditioned.
std::shared_ptr<LinearProblem> make_random_linear_problem(Index n, std::uint64_t seed);

/// F = grad f for f(x) = ln sum_j exp(c_j^T x - b_j) + 1/2 sum_j (c_j^T x)^2 + gamma/2 ||x||^2.
class LogSumExpProblem final : public Problem {
 public:
  LogSumExpProblem(Matrix c, Vector b, double gamma,
                   std::optional<std::uint64_t> seed = std::nullopt);

  std::string kind() const override { return "logsumexp"; }
  Index dim() const override { return c_.rows(); }
  Vector residual(const Vector& x) const override;
  Matrix jacobian(const Vector& x) const override;
  Vector jacobian_column(const Vector& x, Index i) const override;
  Vector jacobian_action(const Vector& x, const Vector& v) const override;
  nlohmann::json to_json() const override;

  /// Scalar objective f(x).
  double objective(const Vector& x) const;
  /// Softmax weights pi(x) = softmax(C^T x - b), computed with max subtraction.
  Vector softmax_weights(const Vector& x) const;
  /// L = 2 lambda_max(C C^T) + gamma.
  double smoothness_constant() const;

  const Matrix& coefficients() const { return c_; }
  const Vector& offsets() const { return b_; }
  double gamma() const { return gamma_; }
  Index terms() const { return c_.cols(); }

 private:
  Matrix c_;  // n x m, column j is c_j
  Vector b_;
  double gamma_;
  std::optional<std::uint64_t> seed_;
};

/// Draws C-hat (column by column) and then b from Unif[-1,1], and shifts
/// c_j = c-hat_j - grad f-hat(0) so that x* = 0.
std::shared_ptr<LogSumExpProblem> gen_logsumexp(Index n, Index m, std::uint64_t seed,
                                                double gamma);

Vector logsumexp_F(const LogSumExpProblem& p, const Vector& x);
Matrix logsumexp_J(const LogSumExpProblem& p, const Vector& x);

inline constexpr double kPoleTol = 1e-12;
inline constexpr double kHEquationSolutionTol = 1e-13;

/// Chandrasekhar H-equation F(x)_i = x_i - 1 / g_i(x),
/// g_i(x) = 1 - (c / 2N) sum_j mu_i x_j / (mu_i + mu_j), mu_i = (i - 1/2) / N.
class HEquationProblem final : public Problem {
 public:
  /// Solves for x* by Newton's method from the all-ones vector; the iteration
  /// is continued past ||F|| <= 1e-13 while the residual still decreases.
  HEquationProblem(Index n, double c);
  /// Uses the given reference solution instead of solving for one.
  HEquationProblem(Index n, double c, std::optional<KnownSolution> reference);

  std::string kind() const override { return "hequation"; }
  Index dim() const override { return mu_.size(); }
  Vector residual(const Vector& x) const override;
  Matrix jacobian(const Vector& x) const override;
  Vector jacobian_column(const Vector& x, Index i) const override;
  nlohmann::json to_json() const override;

  /// g(x); throws PoleEncountered if any |g_i| <= 1e-12.
  Vector denominators(const Vector& x) const;

  double c() const { return c_; }
  const Vector& mu() const { return mu_; }

 private:
  double c_;
  Vector mu_;
  Matrix kernel_;  // (c / 2N) mu_i / (mu_i + mu_j)
};

std::shared_ptr<HEquationProblem> make_hequation(Index n, double c);

Vector hequation_F(const HEquationProblem& p, const Vector& x);
Matrix hequation_J(const HEquationProblem& p, const Vector& x);

/// Central differences (F(x + h e_i) - F(x - h e_i)) / 2h; h <= 0 selects
/// the default 1e-6 * max(1, ||x||).
Matrix finite_diff_jacobian(const Problem& p, const Vector& x, double h = 0.0);
double default_fd_step(const Vector& x);

/// Central-difference directional derivative (F(x + h v) - F(x - h v)) / 2h.
Vector finite_diff_action(const Problem& p, const Vector& x, const Vector& v, double h = 0.0);

/// Estimates of c = ||J(x*)^{-1}|| and of the Lipschitz constant M of J at x*.
/// M_hat is a max over samples and therefore a lower bound of the true M.
struct ConstantEstimates {
  double c_hat = 0.0;
  double M_hat = 0.0;
  double radius = 0.0;
  int samples = 0;
};

/// Samples x uniformly in the ball of the given radius around x*. A radius
/// <= 0 selects the default 0.1 * (1 + ||x*||).
ConstantEstimates estimate_constants(const Problem& p, double radius, int samples,
                                     RngStream& stream);

/// Rebuilds a problem from its JSON document.
ProblemPtr problem_from_json(const nlohmann::json& doc);

}  // namespace broyden_lab
