#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/SVD>

#include "broyden_lab/broyden.hpp"
#include "support.hpp"

using namespace broyden_lab;
using support::error_kind;

namespace {

Matrix m2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }

// Entry-by-entry evaluation of B + (A - B) u u^T / u^T u.
Matrix broyd_oracle(const Matrix& B, const Matrix& A, const Vector& u) {
  const Index n = B.rows();
  double uu = 0.0;
  for (Index i = 0; i < n; ++i) uu += u(i) * u(i);
  Matrix out = B;
  for (Index i = 0; i < n; ++i) {
    double du = 0.0;
    for (Index k = 0; k < n; ++k) du += (A(i, k) - B(i, k)) * u(k);
    for (Index j = 0; j < n; ++j) out(i, j) += du * u(j) / uu;
  }
  return out;
}

double svd2(const Matrix& m) { return Eigen::JacobiSVD<Matrix>(m).singularValues()(0); }

}  // namespace

TEST_CASE("broyd_matrix examples") {
  CHECK(broyd_matrix(Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 5.0), Vector::Ones(1))(0, 0) == 5.0);
  CHECK(broyd_matrix(Matrix(Matrix::Identity(2, 2)), m2(3, 0, 0, 1), Vector(Vector::Unit(2, 0))) ==
        m2(3, 0, 0, 1));
  const Matrix got = broyd_matrix(Matrix(Matrix::Zero(2, 2)), m2(1, 2, 3, 4), v2(1, 1));
  CHECK((got - m2(1.5, 1.5, 3.5, 3.5)).norm() <= 1e-15);
  CHECK(error_kind([] { broyd_matrix(Matrix(Matrix::Identity(2, 2)), Matrix(Matrix::Zero(2, 2)), Vector(Vector::Zero(2))); }) ==
        ErrorKind::ZeroDirection);
  CHECK(error_kind([] { broyd_matrix(Matrix(Matrix::Identity(2, 2)), Matrix(Matrix::Zero(3, 3)), Vector(Vector::Ones(2))); }) ==
        ErrorKind::DimensionMismatch);
}

TEST_CASE("broyd_matrix matches the entrywise oracle and the secant identity") {
  RngStream s(11);
  for (int t = 0; t < 100; ++t) {
    const Index n = 1 + s.index(10);
    const Matrix B = support::random_matrix(n, s);
    const Matrix A = support::random_matrix(n, s);
    const Vector u = s.normal_vector(n);
    const Matrix got = broyd_matrix(B, A, u);
    CHECK((got - broyd_oracle(B, A, u)).norm() <= 1e-12 * (1.0 + got.norm()));
    CHECK((got * u - A * u).norm() <= 1e-12 * (1.0 + (A * u).norm()));
  }
}

TEST_CASE("broyden_secant_update examples") {
  CHECK(broyden_secant_update(Matrix(Matrix::Identity(2, 2)), v2(3, 0), Vector(Vector::Unit(2, 0))) ==
        m2(3, 0, 0, 1));
  CHECK(broyden_secant_update(m2(2, 0, 0, 2), v2(0, 2), v2(0, 1)) == m2(2, 0, 0, 2));
  const Matrix got = broyden_secant_update(Matrix(Matrix::Zero(2, 2)), v2(3, 7), v2(1, 1));
  CHECK((got - m2(1.5, 1.5, 3.5, 3.5)).norm() <= 1e-15);
}

TEST_CASE("secant equation holds for random updates") {
  RngStream s(12);
  for (int t = 0; t < 1000; ++t) {
    const Index n = 2 + s.index(19);
    const Matrix B = support::random_matrix(n, s);
    const Vector u = s.normal_vector(n);
    const Vector y = s.normal_vector(n);
    const Matrix Bp = broyden_secant_update(B, y, u);
    REQUIRE((Bp * u - y).norm() <= 1e-12 * (1.0 + y.norm()));
  }
}

TEST_CASE("secant update equals broyd_matrix when y = A u") {
  RngStream s(13);
  for (int t = 0; t < 50; ++t) {
    const Index n = 2 + s.index(8);
    const Matrix B = support::random_matrix(n, s);
    const Matrix A = support::random_matrix(n, s);
    const Vector u = s.normal_vector(n);
    CHECK((broyden_secant_update(B, Vector(A * u), u) - broyd_matrix(B, A, u)).norm() <= 1e-12 * (1.0 + A.norm()));
  }
}

TEST_CASE("broyden_bad_update examples") {
  CHECK(broyden_bad_update(Matrix(Matrix::Identity(2, 2)), Vector(Vector::Unit(2, 0)), v2(0.5, 0)) ==
        m2(0.5, 0, 0, 1));
  const Matrix H = m2(1, 2, -1, 3);
  const Vector y = v2(0.3, -0.7);
  CHECK((broyden_bad_update(H, y, Vector(H * y)) - H).norm() <= 1e-15);
  const Matrix got = broyden_bad_update(Matrix(Matrix::Zero(2, 2)), v2(1, 1), v2(2, 4));
  CHECK((got - m2(1, 1, 2, 2)).norm() <= 1e-15);
  CHECK(error_kind([] { broyden_bad_update(Matrix(Matrix::Identity(2, 2)), Vector(Vector::Zero(2)), v2(1, 0)); }) ==
        ErrorKind::ZeroDirection);
}

TEST_CASE("bad update satisfies the inverse secant equation") {
  RngStream s(14);
  for (int t = 0; t < 200; ++t) {
    const Index n = 2 + s.index(10);
    const Matrix H = support::random_matrix(n, s);
    const Vector u = s.normal_vector(n);
    const Vector y = s.normal_vector(n);
    CHECK((broyden_bad_update(H, y, u) * y - u).norm() <= 1e-12 * (1.0 + u.norm() + H.norm() * y.norm()));
  }
}

TEST_CASE("sherman_morrison_inverse examples") {
  const Matrix got = sherman_morrison_inverse(m2(0.5, 0, 0, 0.5), v2(4, 0), Vector(Vector::Unit(2, 0)));
  CHECK((got - m2(0.25, 0, 0, 0.5)).norm() <= 1e-15);
  const Vector u = v2(0.6, -1.1);
  CHECK((sherman_morrison_inverse(Matrix(Matrix::Identity(2, 2)), u, u) - Matrix::Identity(2, 2)).norm() <= 1e-15);
  // u^T H y = 0 makes B_+ singular.
  CHECK(error_kind([] { sherman_morrison_inverse(Matrix(Matrix::Identity(2, 2)), v2(0, 1), v2(1, 0)); }) ==
        ErrorKind::DegenerateUpdate);
}

TEST_CASE("sherman_morrison_inverse inverts the secant update") {
  RngStream s(15);
  int checked = 0;
  for (int t = 0; t < 200; ++t) {
    const Index n = 2 + s.index(10);
    const Matrix B = support::random_matrix(n, s) + 2.0 * std::sqrt(double(n)) * Matrix::Identity(n, n);
    const Matrix H = support::to_matrix(support::gauss_jordan_inverse(B));
    const Vector u = s.normal_vector(n);
    const Vector y = s.normal_vector(n);
    const Matrix Bp = broyden_secant_update(B, y, u);
    Matrix Hp;
    try {
      Hp = sherman_morrison_inverse(H, y, u);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateUpdate);
      continue;
    }
    ++checked;
    const Matrix oracle = support::to_matrix(support::gauss_jordan_inverse(Bp));
    CHECK((Hp * Bp - Matrix::Identity(n, n)).norm() <= 1e-8 * std::max(1.0, Bp.norm()));
    CHECK((Hp - oracle).norm() <= 1e-8 * std::max(1.0, oracle.norm()));
  }
  CHECK(checked > 150);
}

TEST_CASE("JacobianPair consistency") {
  Matrix B = m2(2, 1, 0, 3);
  JacobianPair pair{B, lu_inverse(B)};
  CHECK(pair.dim() == 2);
  CHECK(pair.consistent());
  pair.H(0, 0) += 1e-3;
  CHECK_FALSE(pair.consistent());
}

TEST_CASE("greedy_direction examples") {
  CHECK(greedy_direction(m2(1, 0, 0, 2), Matrix(Matrix::Zero(2, 2))) == 1);
  CHECK(greedy_direction(Matrix(Matrix::Identity(3, 3)), Matrix(Matrix::Identity(3, 3))) == 0);
  Matrix d = Matrix::Zero(3, 3);
  d(0, 0) = 3;
  d(1, 1) = 5;
  d(2, 2) = 4;
  CHECK(greedy_direction(d, Matrix(Matrix::Zero(3, 3))) == 1);
  Matrix ties = Matrix::Zero(3, 3);
  ties(0, 1) = 2;
  ties(2, 2) = -2;
  CHECK(greedy_direction(ties, Matrix(Matrix::Zero(3, 3))) == 1);
}

TEST_CASE("greedy_direction maximizes the column norm") {
  RngStream s(16);
  for (int t = 0; t < 200; ++t) {
    const Index n = 1 + s.index(12);
    const Matrix B = support::random_matrix(n, s);
    const Matrix J = support::random_matrix(n, s);
    const Index got = greedy_direction(B, J);
    double best = -1.0;
    Index arg = -1;
    for (Index j = 0; j < n; ++j) {
      double c = 0.0;
      for (Index i = 0; i < n; ++i) c += (B(i, j) - J(i, j)) * (B(i, j) - J(i, j));
      if (c > best) {
        best = c;
        arg = j;
      }
    }
    CHECK(got == arg);
  }
}

TEST_CASE("greedy step contracts by 1 - 1/n") {
  RngStream s(17);
  for (int t = 0; t < 300; ++t) {
    const Index n = 2 + s.index(20);
    const Matrix B = support::random_matrix(n, s);
    const Matrix A = support::random_matrix(n, s);
    const Matrix Bp = broyd_matrix(B, A, Vector(Vector::Unit(n, greedy_direction(B, A))));
    CHECK((Bp - A).squaredNorm() <= (1.0 - 1.0 / double(n)) * (B - A).squaredNorm() * (1.0 + 1e-12));
  }
}

TEST_CASE("basis average of the update equals the expected contraction") {
  RngStream s(18);
  for (int t = 0; t < 50; ++t) {
    const Index n = 2 + s.index(12);
    const Matrix B = support::random_matrix(n, s);
    const Matrix A = support::random_matrix(n, s);
    double mean = 0.0;
    for (Index i = 0; i < n; ++i) mean += (broyd_oracle(B, A, Vector(Vector::Unit(n, i))) - A).squaredNorm();
    mean /= double(n);
    CHECK(support::rel(mean, (1.0 - 1.0 / double(n)) * (B - A).squaredNorm()) <= 1e-10);
  }
}

TEST_CASE("update monotonicity under a left factor and the Gram identity") {
  RngStream s(19);
  for (int t = 0; t < 300; ++t) {
    const Index n = 2 + s.index(8);
    const Matrix B = support::random_matrix(n, s);
    const Matrix A = support::random_matrix(n, s);
    const Matrix C = support::random_matrix(n, s);
    const Vector u = s.normal_vector(n);
    const Matrix pre = C * (B - A);
    const Matrix post = C * (broyd_matrix(B, A, u) - A);
    CHECK(post.norm() <= pre.norm() * (1.0 + 1e-12));
    CHECK(svd2(post) <= svd2(pre) * (1.0 + 1e-12));
    const Matrix gram = pre * pre.transpose() - (pre * u) * (pre * u).transpose() / u.squaredNorm();
    CHECK((post * post.transpose() - gram).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, gram.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("random_direction rules") {
  RngStream s(20);
  const DirectionRule sphere{DirectionKind::RandomSphere, 0};
  for (int t = 0; t < 100; ++t) CHECK(std::abs(random_direction(7, sphere, s).u.norm() - 1.0) <= 1e-12);

  const DirectionRule gauss{DirectionKind::RandomGaussian, 0};
  const auto g = random_direction(5, gauss, s);
  CHECK(g.u.size() == 5);
  CHECK_FALSE(g.basis_index.has_value());

  CHECK(error_kind([&] { random_direction(3, DirectionRule{DirectionKind::GreedyBasis, 0}, s); }) ==
        ErrorKind::InvalidArgument);
  CHECK(error_kind([&] { random_direction(0, sphere, s); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("random basis draws are uniform") {
  RngStream s(21);
  const DirectionRule basis{DirectionKind::RandomBasis, 0};
  int counts[4] = {0, 0, 0, 0};
  for (int t = 0; t < 40000; ++t) {
    const auto d = random_direction(4, basis, s);
    REQUIRE(d.basis_index.has_value());
    CHECK(d.u(*d.basis_index) == 1.0);
    ++counts[*d.basis_index];
  }
  for (int c : counts) CHECK(std::abs(c / 40000.0 - 0.25) <= 0.01);
}

TEST_CASE("normalized second moment is isotropic") {
  for (auto kind : {DirectionKind::RandomBasis, DirectionKind::RandomSphere, DirectionKind::RandomGaussian}) {
    RngStream s(22, static_cast<std::uint64_t>(kind));
    const Index n = 4;
    Matrix mean = Matrix::Zero(n, n);
    const int draws = 100000;
    for (int t = 0; t < draws; ++t) {
      const Vector u = random_direction(n, {kind, 0}, s).u;
      mean += u * u.transpose() / u.squaredNorm();
    }
    mean /= double(draws);
    CHECK((mean - Matrix::Identity(n, n) / double(n)).cwiseAbs().maxCoeff() <= 0.01);
  }
}

TEST_CASE("rng streams are reproducible and distinct") {
  RngStream a(5, 1);
  RngStream b(5, 1);
  RngStream c(5, 2);
  bool differs = false;
  for (int t = 0; t < 100; ++t) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  // First output of the reference splitmix64 generator seeded with 0.
  CHECK(RngStream::splitmix64(0) == 0xE220A8397B1DCDAFull);
}
