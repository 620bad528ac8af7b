#pragma once

// Dense linear algebra used throughout the library: norms, extreme singular
// values by (inverse) power iteration, and LU solves with a scale-invariant
// singularity test. Everything is templated on the Eigen expression type so
// that it works for any real scalar; the rest of the library uses double.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "broyden_lab/errors.hpp"

namespace broyden_lab {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = DenseMatrix<double>;
using Vector = DenseVector<double>;
using Index = Eigen::Index;

inline constexpr double kPowerIterationTol = 1e-10;
inline constexpr int kPowerIterationMaxIters = 10000;
inline constexpr double kPivotRelTol = 1e-14;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

/// Throws NonFinite if any entry is NaN or infinite.
template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const std::string& what) {
  if (!m.allFinite()) throw Error(ErrorKind::NonFinite, what + " has non-finite entries");
}

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& m, const std::string& what) {
  if (m.rows() != m.cols() || m.rows() < 1) {
    throw Error(ErrorKind::DimensionMismatch,
                what + " must be square and non-empty, got " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()));
  }
}

template <typename Derived>
typename Derived::RealScalar frobenius_norm(const Eigen::MatrixBase<Derived>& m) {
  return m.norm();
}

namespace detail {

// Deterministic start vector with no symmetry that would make it orthogonal to
// a singular vector of a structured matrix.
template <typename Scalar>
DenseVector<Scalar> power_start(Index n) {
  DenseVector<Scalar> v(n);
  const Scalar golden = Scalar(0.6180339887498949);
  for (Index i = 0; i < n; ++i) {
    const Scalar frac = std::fmod(Scalar(i + 1) * golden, Scalar(1));
    v(i) = Scalar(1) + frac;
  }
  return v.normalized();
}

// Largest eigenvalue of a symmetric positive semidefinite operator given by
// `apply`. Returns 0 for the zero operator.
template <typename Scalar, typename Apply>
Scalar dominant_eigenvalue(Index n, Apply&& apply, Index fallback_index) {
  DenseVector<Scalar> v = power_start<Scalar>(n);
  DenseVector<Scalar> w = apply(v);
  if (w.norm() == Scalar(0)) {
    v = DenseVector<Scalar>::Unit(n, fallback_index);
    w = apply(v);
    if (w.norm() == Scalar(0)) return Scalar(0);
  }
  Scalar lambda = v.dot(w);
  for (int it = 0; it < kPowerIterationMaxIters; ++it) {
    const Scalar wn = w.norm();
    if (wn == Scalar(0)) return Scalar(0);
    v = w / wn;
    w = apply(v);
    const Scalar next = v.dot(w);
    if (std::abs(next - lambda) <= Scalar(kPowerIterationTol) * std::abs(next)) return next;
    lambda = next;
  }
  throw Error(ErrorKind::NonConvergence, "power iteration did not reach relative tolerance 1e-10");
}

template <typename Derived>
Index largest_column(const Eigen::MatrixBase<Derived>& m) {
  Index best = 0;
  m.colwise().squaredNorm().maxCoeff(&best);
  return best;
}

}  // namespace detail

/// Largest singular value, by power iteration on M^T M.
template <typename Derived>
typename Derived::RealScalar spectral_norm(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::RealScalar;
  const DenseMatrix<Scalar> a = m;
  if (a.size() == 0) return Scalar(0);
  const auto apply = [&a](const DenseVector<Scalar>& v) -> DenseVector<Scalar> {
    return a.transpose() * (a * v);
  };
  const Scalar lambda =
      detail::dominant_eigenvalue<Scalar>(a.cols(), apply, detail::largest_column(a));
  return std::sqrt(std::max(lambda, Scalar(0)));
}

/// LU factorization with partial pivoting and an explicit singularity test:
/// a pivot below 1e-14 * ||A||_F is reported as SingularMatrix.
template <typename Scalar>
class LuFactorization {
 public:
  template <typename Derived>
  explicit LuFactorization(const Eigen::MatrixBase<Derived>& a) : lu_(a.rows()) {
    require_square(a, "LU input");
    require_finite(a, "LU input");
    lu_.compute(a);
    const Scalar scale = a.norm();
    const Scalar min_pivot = lu_.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (min_pivot == Scalar(0) || min_pivot < Scalar(kPivotRelTol) * scale) {
      throw Error(ErrorKind::SingularMatrix,
                  "pivot magnitude " + std::to_string(double(min_pivot)) +
                      " below 1e-14*||A||_F");
    }
  }

  Index dim() const { return lu_.rows(); }

  template <typename Rhs>
  DenseMatrix<Scalar> solve(const Eigen::MatrixBase<Rhs>& b) const {
    if (b.rows() != dim()) {
      throw Error(ErrorKind::DimensionMismatch, "right-hand side length does not match matrix");
    }
    return lu_.solve(b);
  }

  template <typename Rhs>
  DenseMatrix<Scalar> solve_transposed(const Eigen::MatrixBase<Rhs>& b) const {
    if (b.rows() != dim()) {
      throw Error(ErrorKind::DimensionMismatch, "right-hand side length does not match matrix");
    }
    return lu_.transpose().solve(b);
  }

  DenseMatrix<Scalar> inverse() const {
    return lu_.solve(DenseMatrix<Scalar>::Identity(dim(), dim()));
  }

 private:
  Eigen::PartialPivLU<DenseMatrix<Scalar>> lu_;
};

template <typename DerivedA, typename DerivedB>
DenseVector<typename DerivedA::Scalar> lu_solve(const Eigen::MatrixBase<DerivedA>& a,
                                                const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (b.cols() != 1 || b.rows() != a.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "lu_solve: b must be a vector of length rows(A)");
  }
  return LuFactorization<Scalar>(a).solve(b);
}

template <typename Derived>
DenseMatrix<typename Derived::Scalar> lu_inverse(const Eigen::MatrixBase<Derived>& a) {
  return LuFactorization<typename Derived::Scalar>(a).inverse();
}

/// Smallest singular value of a nonsingular square matrix, by inverse power
/// iteration on (A^T A)^{-1} = A^{-1} A^{-T}.
template <typename Derived>
typename Derived::RealScalar smallest_singular_value(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::RealScalar;
  const LuFactorization<Scalar> lu(a);
  const auto apply = [&lu](const DenseVector<Scalar>& v) -> DenseVector<Scalar> {
    return lu.solve(lu.solve_transposed(v));
  };
  const Scalar mu = detail::dominant_eigenvalue<Scalar>(a.cols(), apply, 0);
  return Scalar(1) / std::sqrt(mu);
}

/// kappa(A) = s_1(A) / s_n(A).
template <typename Derived>
typename Derived::RealScalar condition_number(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::RealScalar;
  require_square(a, "condition_number input");
  const Scalar s1 = spectral_norm(a);
  const Scalar sn = smallest_singular_value(a);
  if (!(sn >= Scalar(kPivotRelTol) * s1)) {
    throw Error(ErrorKind::SingularMatrix, "smallest singular value below 1e-14*s_1");
  }
  return s1 / sn;
}

}  // namespace broyden_lab
