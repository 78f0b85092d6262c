#pragma once

#include <Eigen/Dense>

namespace tsc {

/// Dense row-major 64-bit matrix used throughout the project.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace tsc
