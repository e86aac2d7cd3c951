#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <string>
#include <utility>

#include "qmadiab/defaults.hpp"
#include "qmadiab/errors.hpp"

namespace qmadiab {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline void require_finite(const ComplexMatrix& m, const char* where) {
  if (m.size() == 0) throw NonFinite(std::string(where) + ": empty matrix");
  if (!m.allFinite()) throw NonFinite(std::string(where) + ": non-finite entries");
}

inline void require_square(const ComplexMatrix& m, const char* where) {
  if (m.rows() != m.cols())
    throw NotHermitian(std::string(where) + ": matrix is not square");
}

// Spectral norm, sqrt of the top eigenvalue of A^dagger A. Eigenvalues-only
// solve, so this is safe to call from inside the certifying wrappers below.
inline double op_norm(const ComplexMatrix& a) {
  require_finite(a, "op_norm");
  ComplexMatrix gram = a.adjoint() * a;
  gram = 0.5 * (gram + gram.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(gram, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw NoConvergence("op_norm: eigensolver did not converge");
  double top = solver.eigenvalues().maxCoeff();
  return std::sqrt(std::max(top, 0.0));
}

inline double frobenius_norm(const ComplexMatrix& a) { return a.norm(); }

// Unitary certified at construction: defect = ||U^dagger U - 1|| in operator
// norm, gated at tol_unitary_factor * dim * tol_scale. Products accumulated
// over N steps pass tol_scale = N.
class UnitaryMatrix {
 public:
  UnitaryMatrix() = default;

  static UnitaryMatrix certify(ComplexMatrix m, double tol_scale = 1.0) {
    require_finite(m, "UnitaryMatrix");
    if (m.rows() != m.cols()) throw NotUnitary("UnitaryMatrix: matrix is not square");
    const Eigen::Index d = m.rows();
    ComplexMatrix gram = m.adjoint() * m;
    gram.diagonal().array() -= Complex(1.0, 0.0);
    const double defect = op_norm(gram);
    const double tol = defaults::tol_unitary_factor * static_cast<double>(d) * tol_scale;
    if (defect > tol)
      throw NotUnitary("defect " + std::to_string(defect) + " exceeds " +
                       std::to_string(tol));
    return UnitaryMatrix(std::move(m), defect);
  }

  static UnitaryMatrix identity(Eigen::Index d) {
    return UnitaryMatrix(ComplexMatrix::Identity(d, d), 0.0);
  }

  const ComplexMatrix& mat() const { return mat_; }
  ComplexMatrix adjoint() const { return mat_.adjoint(); }
  double unitarity_defect() const { return defect_; }
  Eigen::Index dim() const { return mat_.rows(); }

 private:
  UnitaryMatrix(ComplexMatrix m, double defect) : mat_(std::move(m)), defect_(defect) {}

  ComplexMatrix mat_;
  double defect_ = 0.0;
};

struct HermEig {
  RealVector values;       // ascending
  UnitaryMatrix vectors;   // columns are eigenvectors, certified unitary
};

// Gate: Hermiticity defect ||H - H^dagger||_F <= tol_herm_factor * ||H||_F.
// The solver then sees the symmetrized matrix, so V Lambda V^dagger
// reconstructs to solver accuracy.
inline HermEig herm_eig(const ComplexMatrix& h) {
  require_finite(h, "herm_eig");
  require_square(h, "herm_eig");
  const double scale = h.norm();
  const double defect = (h - h.adjoint()).norm();
  if (defect > defaults::tol_herm_factor * scale)
    throw NotHermitian("defect " + std::to_string(defect) + " exceeds " +
                       std::to_string(defaults::tol_herm_factor * scale));
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(0.5 * (h + h.adjoint()));
  if (solver.info() != Eigen::Success)
    throw NoConvergence("herm_eig: eigensolver did not converge");
  return HermEig{solver.eigenvalues(), UnitaryMatrix::certify(solver.eigenvectors())};
}

// exp(scale * H) for Hermitian H through the eigenbasis.
inline ComplexMatrix expm_hermitian(const ComplexMatrix& h, Complex scale) {
  HermEig eig = herm_eig(h);
  ComplexVector phases =
      (scale * eig.values.cast<Complex>().array()).exp().matrix();
  return eig.vectors.mat() * phases.asDiagonal() * eig.vectors.adjoint();
}

// exp(-i t H), certified unitary.
inline UnitaryMatrix expm_unitary(const ComplexMatrix& h, double t, double tol_scale = 1.0) {
  return UnitaryMatrix::certify(expm_hermitian(h, Complex(0.0, -t)), tol_scale);
}

// Polar projection A (A^dagger A)^{-1/2}, the nearest unitary to A.
inline ComplexMatrix closest_unitary(const ComplexMatrix& a) {
  require_finite(a, "closest_unitary");
  require_square(a, "closest_unitary");
  ComplexMatrix gram = a.adjoint() * a;
  gram = 0.5 * (gram + gram.adjoint()).eval();
  HermEig eig = herm_eig(gram);
  const double floor = 1e-12 * std::max(1.0, eig.values.maxCoeff());
  if (eig.values.minCoeff() <= floor)
    throw NotUnitary("closest_unitary: input is numerically rank-deficient");
  ComplexVector inv_sqrt =
      eig.values.array().sqrt().inverse().cast<Complex>().matrix();
  return a * (eig.vectors.mat() * inv_sqrt.asDiagonal() * eig.vectors.adjoint());
}

}  // namespace qmadiab
