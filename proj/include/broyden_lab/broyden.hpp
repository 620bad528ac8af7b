#pragma once

// Rank-one secant updates of an approximate Jacobian B or its inverse H, and
// the rules that pick the update direction u.
//
// All updates cost O(n^2). For a linear map A the "good" update with y = A u
// is the projection B+ - A = (B - A)(I - u u^T / u^T u), which is what makes
// the greedy and random direction rules contract ||B - A||_F.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "broyden_lab/densealg.hpp"
#include "broyden_lab/rng.hpp"

namespace broyden_lab {

inline constexpr double kZeroDirectionTol = 1e-300;
inline constexpr double kShermanMorrisonRelTol = 1e-12;
inline constexpr double kPairConsistencyTol = 1e-8;

enum class DirectionKind { Secant, GreedyBasis, RandomBasis, RandomSphere, RandomGaussian };

constexpr std::string_view to_string(DirectionKind kind) {
  switch (kind) {
    case DirectionKind::Secant: return "secant";
    case DirectionKind::GreedyBasis: return "greedy-basis";
    case DirectionKind::RandomBasis: return "basis";
    case DirectionKind::RandomSphere: return "sphere";
    case DirectionKind::RandomGaussian: return "gaussian";
  }
  return "unknown";
}

constexpr bool is_random(DirectionKind kind) {
  return kind == DirectionKind::RandomBasis || kind == DirectionKind::RandomSphere ||
         kind == DirectionKind::RandomGaussian;
}

struct DirectionRule {
  DirectionKind kind = DirectionKind::RandomBasis;
  std::uint64_t seed = 0;
};

/// A chosen update direction; basis rules also report which e_i was taken.
struct Direction {
  Vector u;
  std::optional<Index> basis_index;
};

/// Approximate Jacobian B and its maintained inverse H.
struct JacobianPair {
  Matrix B;
  Matrix H;

  Index dim() const { return H.rows(); }

  /// ||B H - I||_F / max(1, ||B||_F).
  double inverse_residual() const {
    const Index n = H.rows();
    return (B * H - Matrix::Identity(n, n)).norm() / std::max(1.0, B.norm());
  }

  bool consistent(double tol = kPairConsistencyTol) const { return inverse_residual() <= tol; }
};

namespace detail {

template <typename D1, typename D2>
void require_same_square(const Eigen::MatrixBase<D1>& a, const Eigen::MatrixBase<D2>& b,
                         const char* what) {
  require_square(a, what);
  if (b.rows() != a.rows() || b.cols() != a.cols()) {
    throw Error(ErrorKind::DimensionMismatch, std::string(what) + ": matrix shapes differ");
  }
}

template <typename DM, typename DV>
void require_vector_for(const Eigen::MatrixBase<DM>& m, const Eigen::MatrixBase<DV>& v,
                        const char* what) {
  if (v.cols() != 1 || v.rows() != m.cols()) {
    throw Error(ErrorKind::DimensionMismatch, std::string(what) + ": vector length mismatch");
  }
}

}  // namespace detail

/// Broyd(B, A, u) = B + (A - B) u u^T / (u^T u).
template <typename DB, typename DA, typename DU>
DenseMatrix<typename DB::Scalar> broyd_matrix(const Eigen::MatrixBase<DB>& B,
                                              const Eigen::MatrixBase<DA>& A,
                                              const Eigen::MatrixBase<DU>& u) {
  using Scalar = typename DB::Scalar;
  detail::require_same_square(B, A, "broyd_matrix");
  detail::require_vector_for(B, u, "broyd_matrix");
  const Scalar uu = u.squaredNorm();
  if (!(std::sqrt(uu) >= Scalar(kZeroDirectionTol))) {
    throw Error(ErrorKind::ZeroDirection, "broyd_matrix: ||u|| below 1e-300");
  }
  const DenseVector<Scalar> residual = A * u - B * u;
  DenseMatrix<Scalar> out = B;
  out.noalias() += (residual / uu) * u.transpose();
  return out;
}

/// Good Broyden: B+ = B + (y - B u) u^T / (u^T u), so that B+ u = y.
template <typename DB, typename DY, typename DU>
DenseMatrix<typename DB::Scalar> broyden_secant_update(const Eigen::MatrixBase<DB>& B,
                                                       const Eigen::MatrixBase<DY>& y,
                                                       const Eigen::MatrixBase<DU>& u) {
  using Scalar = typename DB::Scalar;
  require_square(B, "broyden_secant_update");
  detail::require_vector_for(B, u, "broyden_secant_update");
  detail::require_vector_for(B, y, "broyden_secant_update");
  const Scalar uu = u.squaredNorm();
  if (!(std::sqrt(uu) >= Scalar(kZeroDirectionTol))) {
    throw Error(ErrorKind::ZeroDirection, "broyden_secant_update: ||u|| below 1e-300");
  }
  const DenseVector<Scalar> residual = y - B * u;
  DenseMatrix<Scalar> out = B;
  out.noalias() += (residual / uu) * u.transpose();
  return out;
}

/// Bad Broyden, on the inverse: H+ = H + (u - H y) y^T / (y^T y), so that H+ y = u.
template <typename DH, typename DY, typename DU>
DenseMatrix<typename DH::Scalar> broyden_bad_update(const Eigen::MatrixBase<DH>& H,
                                                    const Eigen::MatrixBase<DY>& y,
                                                    const Eigen::MatrixBase<DU>& u) {
  using Scalar = typename DH::Scalar;
  require_square(H, "broyden_bad_update");
  detail::require_vector_for(H, u, "broyden_bad_update");
  detail::require_vector_for(H, y, "broyden_bad_update");
  const Scalar yy = y.squaredNorm();
  if (!(std::sqrt(yy) >= Scalar(kZeroDirectionTol))) {
    throw Error(ErrorKind::ZeroDirection, "broyden_bad_update: ||y|| below 1e-300");
  }
  const DenseVector<Scalar> residual = u - H * y;
  DenseMatrix<Scalar> out = H;
  out.noalias() += (residual / yy) * y.transpose();
  return out;
}

/// Inverse of the good Broyden update of B = H^{-1}:
///   H+ = H - (H y - u) u^T H / (u^T H y).
/// Throws DegenerateUpdate when |u^T H y| < 1e-12 ||u|| ||H||_F ||y||, i.e. when
/// B+ would be (numerically) singular.
template <typename DH, typename DY, typename DU>
DenseMatrix<typename DH::Scalar> sherman_morrison_inverse(const Eigen::MatrixBase<DH>& H,
                                                          const Eigen::MatrixBase<DY>& y,
                                                          const Eigen::MatrixBase<DU>& u) {
  using Scalar = typename DH::Scalar;
  require_square(H, "sherman_morrison_inverse");
  detail::require_vector_for(H, u, "sherman_morrison_inverse");
  detail::require_vector_for(H, y, "sherman_morrison_inverse");
  const DenseVector<Scalar> Hy = H * y;
  const Scalar denom = u.dot(Hy);
  const Scalar floor = Scalar(kShermanMorrisonRelTol) * u.norm() * H.norm() * y.norm();
  if (!(std::abs(denom) >= floor) || denom == Scalar(0)) {
    throw Error(ErrorKind::DegenerateUpdate,
                "sherman_morrison_inverse: |u^T H y| = " + std::to_string(double(denom)) +
                    " below nondegeneracy floor");
  }
  const DenseVector<Scalar> uH = H.transpose() * u;
  DenseMatrix<Scalar> out = H;
  out.noalias() -= ((Hy - u) / denom) * uH.transpose();
  return out;
}

/// Index (0-based) of the column of B - J with the largest 2-norm; ties go to
/// the lowest index.
template <typename DB, typename DJ>
Index greedy_direction(const Eigen::MatrixBase<DB>& B, const Eigen::MatrixBase<DJ>& J) {
  detail::require_same_square(B, J, "greedy_direction");
  Index best = 0;
  typename DB::RealScalar best_norm = -1;
  for (Index i = 0; i < B.cols(); ++i) {
    const auto col = (B.col(i) - J.col(i)).squaredNorm();
    if (col > best_norm) {
      best_norm = col;
      best = i;
    }
  }
  return best;
}

/// One draw from an isotropic direction rule.
inline Direction random_direction(Index n, const DirectionRule& rule, RngStream& stream) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "random_direction: n must be positive");
  switch (rule.kind) {
    case DirectionKind::RandomBasis: {
      const Index i = stream.index(n);
      return {Vector::Unit(n, i), i};
    }
    case DirectionKind::RandomSphere:
      return {stream.unit_sphere(n), std::nullopt};
    case DirectionKind::RandomGaussian:
      return {stream.normal_vector(n), std::nullopt};
    default:
      throw Error(ErrorKind::InvalidArgument, "random_direction: rule is not a random kind");
  }
}

}  // namespace broyden_lab
