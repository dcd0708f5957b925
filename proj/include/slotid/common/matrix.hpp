#pragma once

#include <Eigen/Dense>

namespace slotid {

/// Row-major dynamic matrix; one sample per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace slotid
