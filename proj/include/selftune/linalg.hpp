#pragma once

#include "selftune/types.hpp"

namespace selftune {

/// Least-squares solution of min ||A x - y|| via the normal equations, with a
/// QR fallback when A'A is numerically singular.
Vector least_squares(const Matrix& A, const Vector& y);

/// ||A||_2 (largest singular value).
double spectral_norm(const Matrix& A);

/// ||x - x_true|| / ||x_true||.
double relative_error(const Vector& x, const Vector& x_true);

}  // namespace selftune
