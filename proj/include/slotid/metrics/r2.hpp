#pragma once

#include <algorithm>

#include "slotid/common/error.hpp"
#include "slotid/common/matrix.hpp"

namespace slotid::metrics {

/// A target dimension has zero variance, so R^2 is undefined.
class DegenerateTargetError : public Error {
 public:
  using Error::Error;
};

/// max(0, 1 - SS_res / SS_tot) per target column, averaged over columns.
inline double r2_score(const RowMatrix& truth, const RowMatrix& predicted) {
  if (truth.rows() != predicted.rows() || truth.cols() != predicted.cols()) {
    throw DimensionError("r2_score: shape mismatch");
  }
  if (truth.rows() < 2) throw InvalidArgument("r2_score: need at least two samples");
  if (truth.cols() == 0) throw InvalidArgument("r2_score: no target dimensions");
  double total = 0.0;
  for (Eigen::Index c = 0; c < truth.cols(); ++c) {
    const auto t = truth.col(c);
    const double mean = t.mean();
    const double ss_tot = (t.array() - mean).square().sum();
    if (!(ss_tot > 0.0)) throw DegenerateTargetError("r2_score: target has zero variance");
    const double ss_res = (t - predicted.col(c)).squaredNorm();
    total += std::max(0.0, 1.0 - ss_res / ss_tot);
  }
  return total / static_cast<double>(truth.cols());
}

}  // namespace slotid::metrics
