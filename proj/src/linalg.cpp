#include "selftune/linalg.hpp"

#include <Eigen/Eigenvalues>

namespace selftune {

Vector least_squares(const Matrix& A, const Vector& y) {
  const Matrix gram = A.transpose() * A;
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() == Eigen::Success) {
    const Vector x = llt.solve(A.transpose() * y);
    if (x.allFinite()) return x;
  }
  return A.colPivHouseholderQr().solve(y);
}

double spectral_norm(const Matrix& A) {
  if (A.size() == 0) return 0.0;
  const Matrix gram = A.cols() <= A.rows() ? Matrix(A.transpose() * A)
                                           : Matrix(A * A.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

double relative_error(const Vector& x, const Vector& x_true) {
  return (x - x_true).norm() / x_true.norm();
}

}  // namespace selftune
