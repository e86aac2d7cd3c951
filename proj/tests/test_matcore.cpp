#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>

#include "qmadiab/qmadiab.hpp"

using namespace qmadiab;

namespace {

ComplexMatrix random_hermitian(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  ComplexMatrix a(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = Complex(gauss(rng), gauss(rng));
  return 0.5 * (a + a.adjoint());
}

ComplexMatrix random_unitary(int dim, std::mt19937_64& rng) {
  return expm_hermitian(random_hermitian(dim, rng), Complex(0.0, -1.0));
}

// Reference exponential: plain Taylor series, enough terms for ||scale*H|| < 4.
ComplexMatrix taylor_expm(const ComplexMatrix& h, Complex scale, int terms = 40) {
  ComplexMatrix sum = ComplexMatrix::Identity(h.rows(), h.cols());
  ComplexMatrix term = sum;
  for (int k = 1; k <= terms; ++k) {
    term = (term * (scale * h) / static_cast<double>(k)).eval();
    sum += term;
  }
  return sum;
}

ComplexMatrix sigma_x() {
  ComplexMatrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

ComplexMatrix sigma_y() {
  ComplexMatrix m(2, 2);
  m << Complex(0, 0), Complex(0, -1), Complex(0, 1), Complex(0, 0);
  return m;
}

}  // namespace

TEST_CASE("op_norm on known matrices") {
  CHECK(op_norm(ComplexMatrix::Identity(3, 3)) == Catch::Approx(1.0).margin(1e-14));

  ComplexMatrix d = ComplexMatrix::Zero(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = -5.0;
  CHECK(op_norm(d) == Catch::Approx(5.0).margin(1e-13));

  ComplexMatrix n = ComplexMatrix::Zero(2, 2);
  n(0, 1) = 3.0;
  CHECK(op_norm(n) == Catch::Approx(3.0).margin(1e-13));

  CHECK(op_norm(ComplexMatrix::Zero(4, 4)) == 0.0);
}

TEST_CASE("op_norm properties on random matrices") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const ComplexMatrix a = random_hermitian(4, rng);
    const ComplexMatrix b = random_hermitian(4, rng);
    const double na = op_norm(a), nb = op_norm(b);
    CHECK(op_norm(a * b) <= na * nb * (1.0 + 1e-12));
    CHECK(op_norm(a + b) <= (na + nb) * (1.0 + 1e-12));
    const ComplexMatrix u = random_unitary(4, rng);
    CHECK(op_norm(u * a * u.adjoint()) == Catch::Approx(na).epsilon(1e-11));
    const ComplexVector x = ComplexVector::Random(4);
    CHECK((a * x).norm() <= na * x.norm() * (1.0 + 1e-12));
  }
}

TEST_CASE("op_norm rejects non-finite input") {
  ComplexMatrix bad = ComplexMatrix::Zero(2, 2);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(op_norm(bad), NonFinite);
  bad(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(op_norm(bad), NonFinite);
}

TEST_CASE("herm_eig on the zero matrix") {
  const HermEig e = herm_eig(ComplexMatrix::Zero(2, 2));
  REQUIRE(e.values.size() == 2);
  CHECK(e.values[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(e.values[1] == Catch::Approx(0.0).margin(1e-15));
  CHECK(e.vectors.unitarity_defect() <= 1e-13);
}

TEST_CASE("herm_eig on a diagonal matrix") {
  ComplexMatrix h = ComplexMatrix::Zero(2, 2);
  h(0, 0) = 1.0;
  h(1, 1) = 3.0;
  const HermEig e = herm_eig(h);
  CHECK(e.values[0] == Catch::Approx(1.0).margin(1e-14));
  CHECK(e.values[1] == Catch::Approx(3.0).margin(1e-14));
  // Columns must be the standard basis up to phase.
  CHECK(std::abs(e.vectors.mat()(0, 0)) == Catch::Approx(1.0).margin(1e-13));
  CHECK(std::abs(e.vectors.mat()(1, 1)) == Catch::Approx(1.0).margin(1e-13));
}

TEST_CASE("herm_eig on sigma_x") {
  const HermEig e = herm_eig(sigma_x());
  REQUIRE(e.values.size() == 2);
  CHECK(e.values[0] == Catch::Approx(-1.0).margin(1e-13));
  CHECK(e.values[1] == Catch::Approx(1.0).margin(1e-13));
  const double inv = 1.0 / std::sqrt(2.0);
  ComplexVector minus(2), plus(2);
  minus << inv, -inv;
  plus << inv, inv;
  // Up to a column phase.
  CHECK(std::abs(minus.dot(e.vectors.mat().col(0))) == Catch::Approx(1.0).margin(1e-12));
  CHECK(std::abs(plus.dot(e.vectors.mat().col(1))) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("herm_eig reconstructs random Hermitian matrices") {
  std::mt19937_64 rng(11);
  for (int dim : {1, 2, 3, 5, 8}) {
    const ComplexMatrix h = random_hermitian(dim, rng);
    const HermEig e = herm_eig(h);
    ComplexMatrix lambda = ComplexMatrix::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) lambda(i, i) = e.values[i];
    const ComplexMatrix rebuilt =
        e.vectors.mat() * lambda * e.vectors.mat().adjoint();
    CHECK(op_norm(rebuilt - h) <= 1e-12 * std::max(1.0, op_norm(h)));
    for (Eigen::Index i = 1; i < e.values.size(); ++i)
      CHECK(e.values[i - 1] <= e.values[i]);
  }
}

TEST_CASE("herm_eig rejects non-Hermitian input") {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 1) = 1.0;
  CHECK_THROWS_AS(herm_eig(m), NotHermitian);
  ComplexMatrix rect(2, 3);
  rect.setZero();
  CHECK_THROWS_AS(herm_eig(rect), NotHermitian);
}

TEST_CASE("expm_hermitian on known matrices") {
  CHECK(op_norm(expm_hermitian(ComplexMatrix::Zero(3, 3), Complex(0.0, -2.5)) -
                ComplexMatrix::Identity(3, 3)) <= 1e-14);

  ComplexMatrix d = ComplexMatrix::Zero(2, 2);
  d(0, 0) = std::numbers::pi;
  ComplexMatrix expected = ComplexMatrix::Zero(2, 2);
  expected(0, 0) = -1.0;
  expected(1, 1) = 1.0;
  CHECK(op_norm(expm_hermitian(d, Complex(0.0, -1.0)) - expected) <= 1e-13);

  // exp(-i (pi/2) sigma_y) = -i sigma_y = [[0,-1],[1,0]].
  ComplexMatrix rot(2, 2);
  rot << 0, -1, 1, 0;
  const ComplexMatrix got =
      expm_hermitian(sigma_y(), Complex(0.0, -std::numbers::pi / 2.0));
  CHECK(op_norm(got - rot) <= 1e-13);
}

TEST_CASE("expm_hermitian matches a Taylor-series reference") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const ComplexMatrix h = random_hermitian(4, rng);
    const Complex scale(0.0, -0.7);
    CHECK(op_norm(expm_hermitian(h, scale) - taylor_expm(h, scale)) <= 1e-11);
  }
}

TEST_CASE("expm_unitary certifies its result") {
  std::mt19937_64 rng(31);
  const ComplexMatrix h = random_hermitian(4, rng);
  const UnitaryMatrix u = expm_unitary(h, 1.3);
  CHECK(u.unitarity_defect() <= 1e-12);
  CHECK(op_norm(u.mat() - expm_hermitian(h, Complex(0.0, -1.3))) <= 1e-13);
}

TEST_CASE("UnitaryMatrix::certify accepts unitaries and rejects the rest") {
  std::mt19937_64 rng(43);
  const ComplexMatrix u = random_unitary(5, rng);
  CHECK(UnitaryMatrix::certify(u).unitarity_defect() <= 1e-13);
  CHECK(op_norm(UnitaryMatrix::identity(3).mat() - ComplexMatrix::Identity(3, 3)) ==
        0.0);

  CHECK_THROWS_AS(UnitaryMatrix::certify(2.0 * u), NotUnitary);
  CHECK_THROWS_AS(UnitaryMatrix::certify(ComplexMatrix::Zero(2, 2)), NotUnitary);
  ComplexMatrix rect(2, 3);
  rect.setZero();
  CHECK_THROWS_AS(UnitaryMatrix::certify(rect), NotUnitary);
  ComplexMatrix bad = u;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(UnitaryMatrix::certify(bad), NonFinite);
}

TEST_CASE("certify tolerance scales with the product length") {
  std::mt19937_64 rng(47);
  ComplexMatrix u = random_unitary(4, rng);
  // Perturbation sized between the base tolerance and 100x looser.
  const double base = defaults::tol_unitary_factor * 4;
  ComplexMatrix drifted = u + 20.0 * base * random_hermitian(4, rng);
  CHECK_THROWS_AS(UnitaryMatrix::certify(drifted, 1.0), NotUnitary);
  CHECK_NOTHROW(UnitaryMatrix::certify(drifted, 1000.0));
}

TEST_CASE("closest_unitary recovers the polar factor") {
  std::mt19937_64 rng(53);
  const ComplexMatrix u = random_unitary(4, rng);
  CHECK(op_norm(closest_unitary(3.7 * u) - u) <= 1e-12);

  const ComplexMatrix wobble = u + 1e-4 * random_hermitian(4, rng);
  const ComplexMatrix fixed = closest_unitary(wobble);
  CHECK(UnitaryMatrix::certify(fixed).unitarity_defect() <= 1e-12);
  CHECK(op_norm(fixed - wobble) <= 1e-3);
}

TEST_CASE("frobenius_norm agrees with the definition") {
  ComplexMatrix m(2, 2);
  m << Complex(3, 0), Complex(0, 4), Complex(0, 0), Complex(0, 0);
  CHECK(frobenius_norm(m) == Catch::Approx(5.0).margin(1e-14));
  CHECK(frobenius_norm(m) >= op_norm(m));
}
