#pragma once

// Kernel ridge regression with a radial basis kernel
//   k(x, y) = exp(-|x - y|^2 / (2 h^2)),
// bandwidth h defaulting to the median pairwise distance of the (standardized)
// fit inputs. Targets are centered before solving (K + ridge I) a = y.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "slotid/common/error.hpp"
#include "slotid/common/matrix.hpp"

namespace slotid::metrics {

struct ReadoutConfig {
  double bandwidth = 0.0;  // 0 selects the median heuristic
  double ridge = 1e-3;
  std::size_t max_fit_samples = 2000;
};

/// Median of the pairwise Euclidean distances between rows.
inline double median_pairwise_distance(const RowMatrix& x) {
  const Eigen::Index n = x.rows();
  if (n < 2) throw InvalidArgument("median_pairwise_distance: need at least two rows");
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((x.row(i) - x.row(j)).norm());
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double m = *mid;
  if (d.size() % 2 == 0) m = 0.5 * (m + *std::max_element(d.begin(), mid));
  return m;
}

class ReadoutModel {
 public:
  static ReadoutModel fit(const RowMatrix& inputs, const RowMatrix& targets, double bandwidth = 0.0,
                          double ridge = 1e-3) {
    if (inputs.rows() < 2) throw InvalidArgument("fit_readout: need at least two samples");
    if (inputs.rows() != targets.rows()) throw DimensionError("fit_readout: input/target sample counts differ");
    if (!(ridge > 0.0)) throw InvalidArgument("fit_readout: ridge must be positive");
    if (!inputs.allFinite() || !targets.allFinite()) throw NonFiniteError("fit_readout: non-finite data");
    ReadoutModel m;
    m.ridge_ = ridge;
    m.in_mean_ = inputs.colwise().mean();
    m.in_scale_ = ((inputs.rowwise() - m.in_mean_).array().square().colwise().mean()).sqrt();
    for (Eigen::Index j = 0; j < m.in_scale_.size(); ++j) {
      if (!(m.in_scale_(j) > 1e-12)) m.in_scale_(j) = 1.0;
    }
    m.x_ = m.standardize(inputs);
    m.bandwidth_ = bandwidth > 0.0 ? bandwidth : median_pairwise_distance(m.x_);
    if (!(m.bandwidth_ > 0.0)) m.bandwidth_ = 1.0;  // all inputs identical
    m.y_mean_ = targets.colwise().mean();
    const Matrix y = (targets.rowwise() - m.y_mean_);
    Matrix gram = m.kernel(m.x_);
    gram.diagonal().array() += ridge;
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) throw NumericalError("fit_readout: kernel system is singular; increase ridge");
    m.alpha_ = llt.solve(y);
    if (!m.alpha_.allFinite()) throw NumericalError("fit_readout: kernel system is singular; increase ridge");
    return m;
  }

  [[nodiscard]] RowMatrix predict(const RowMatrix& inputs) const {
    if (inputs.cols() != x_.cols()) throw DimensionError("readout predict: input dimension mismatch");
    RowMatrix out = kernel(standardize(inputs)) * alpha_;
    out.rowwise() += y_mean_;
    return out;
  }

  [[nodiscard]] double bandwidth() const { return bandwidth_; }
  [[nodiscard]] double ridge() const { return ridge_; }
  [[nodiscard]] std::size_t sample_count() const { return static_cast<std::size_t>(x_.rows()); }
  [[nodiscard]] const Matrix& dual_coefficients() const { return alpha_; }

 private:
  [[nodiscard]] RowMatrix standardize(const RowMatrix& x) const {
    return (x.rowwise() - in_mean_).array().rowwise() / in_scale_.array();
  }

  // exp(-|a_i - x_j|^2 / (2 h^2)) for rows a_i of `a` and fit rows x_j
  [[nodiscard]] Matrix kernel(const RowMatrix& a) const {
    const Vector an = a.rowwise().squaredNorm();
    const Eigen::RowVectorXd xn = x_.rowwise().squaredNorm().transpose();
    Matrix d2 = -2.0 * (a * x_.transpose());
    d2.colwise() += an;
    d2.rowwise() += xn;
    const double c = -0.5 / (bandwidth_ * bandwidth_);
    return d2.array().max(0.0).unaryExpr([c](double v) { return std::exp(c * v); }).matrix();
  }

  RowMatrix x_;
  Matrix alpha_;
  Eigen::RowVectorXd in_mean_;
  Eigen::RowVectorXd in_scale_;
  Eigen::RowVectorXd y_mean_;
  double bandwidth_ = 1.0;
  double ridge_ = 1e-3;
};

inline ReadoutModel fit_readout(const RowMatrix& inputs, const RowMatrix& targets, double bandwidth = 0.0,
                                double ridge = 1e-3) {
  return ReadoutModel::fit(inputs, targets, bandwidth, ridge);
}

}  // namespace slotid::metrics
