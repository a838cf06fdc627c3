#pragma once

#include <Eigen/Dense>

namespace classify {

/// Dense row-major matrix; rows are samples.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace classify
