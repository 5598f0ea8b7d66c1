#pragma once

#include <Eigen/Dense>

namespace selftune {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace selftune
