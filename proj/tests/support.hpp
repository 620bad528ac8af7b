#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "broyden_lab/errors.hpp"
#include "broyden_lab/rng.hpp"
#include "broyden_lab/densealg.hpp"

namespace support {

using broyden_lab::Index;
using broyden_lab::Matrix;
using broyden_lab::Vector;

inline Matrix random_matrix(Index rows, Index cols, broyden_lab::RngStream& s) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = s.normal();
  return m;
}

inline Matrix random_matrix(Index n, broyden_lab::RngStream& s) { return random_matrix(n, n, s); }

// Plain Gauss-Jordan with full pivoting on std::vector storage, independent of Eigen's LU.
inline std::vector<std::vector<double>> gauss_jordan_inverse(const Matrix& a) {
  const std::size_t n = static_cast<std::size_t>(a.rows());
  std::vector<std::vector<double>> m(n, std::vector<double>(2 * n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m[i][j] = a(Index(i), Index(j));
    m[i][n + i] = 1.0;
  }
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    std::swap(m[piv], m[col]);
    const double d = m[col][col];
    for (auto& v : m[col]) v /= d;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = m[r][col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < 2 * n; ++j) m[r][j] -= f * m[col][j];
    }
  }
  std::vector<std::vector<double>> inv(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) inv[i][j] = m[i][n + j];
  return inv;
}

inline Matrix to_matrix(const std::vector<std::vector<double>>& v) {
  Matrix m(Index(v.size()), Index(v.empty() ? 0 : v[0].size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = v[std::size_t(i)][std::size_t(j)];
  return m;
}

// Largest singular value from the eigenvalues of a symmetric 2x2 Gram matrix.
inline double spectral_2x2(const Matrix& m) {
  const Matrix g = m.transpose() * m;
  const double tr = g(0, 0) + g(1, 1);
  const double det = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0);
  return std::sqrt(0.5 * (tr + std::sqrt(std::max(0.0, tr * tr - 4.0 * det))));
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Kind of the broyden_lab::Error thrown by f, or nullopt if nothing was thrown.
template <typename F>
std::optional<broyden_lab::ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const broyden_lab::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace support
