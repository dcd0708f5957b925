#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "slotid/common/error.hpp"
#include "slotid/common/matrix.hpp"

namespace slotid::analysis {

/// Rank tolerance for exact constructions (generators, analytic maps).
inline constexpr double kAnalyticRankTolerance = 1e-8;
/// Rank tolerance for trained networks.
inline constexpr double kLearnedRankTolerance = 1e-4;

struct RankReport {
  std::vector<std::size_t> rows;  // pixel subset S (empty when the whole matrix was used)
  std::size_t slot = 0;
  std::size_t rank = 0;
  Vector singular_values;
  double tolerance = 0.0;
};

/// Singular values > rel_tolerance * largest singular value are counted.
inline RankReport rank_report(const Matrix& m, double rel_tolerance) {
  if (m.size() == 0) throw InvalidArgument("numerical_rank: empty matrix");
  if (!(rel_tolerance >= 0.0)) throw InvalidArgument("numerical_rank: tolerance must be non-negative");
  if (!m.allFinite()) throw NonFiniteError("numerical_rank: non-finite matrix entries");
  Eigen::JacobiSVD<Matrix> svd(m);
  RankReport r;
  r.singular_values = svd.singularValues();
  r.tolerance = rel_tolerance;
  if (!r.singular_values.allFinite()) throw NumericalError("numerical_rank: SVD did not converge");
  const double top = r.singular_values.size() > 0 ? r.singular_values(0) : 0.0;
  if (top == 0.0) return r;
  for (Eigen::Index i = 0; i < r.singular_values.size(); ++i) {
    if (r.singular_values(i) > rel_tolerance * top) ++r.rank;
  }
  return r;
}

inline std::size_t numerical_rank(const Matrix& m, double rel_tolerance) { return rank_report(m, rel_tolerance).rank; }

inline Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(m.rows())) throw DimensionError("select_rows: row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

/// Rank of the sub-matrix made of the given rows.
inline RankReport subset_rank(const Matrix& jac, std::span<const std::size_t> rows, double rel_tolerance) {
  RankReport r = rank_report(select_rows(jac, rows), rel_tolerance);
  r.rows.assign(rows.begin(), rows.end());
  return r;
}

enum class Independence { independent, dependent };

inline const char* to_string(Independence v) { return v == Independence::independent ? "independent" : "dependent"; }

struct IndependenceResult {
  Independence verdict = Independence::dependent;
  std::size_t rank_first = 0;
  std::size_t rank_second = 0;
  std::size_t rank_union = 0;
};

/// Two sub-mechanisms are independent iff the rank of their union equals
/// the sum of their ranks.
inline IndependenceResult check_independence(std::span<const std::size_t> first, std::span<const std::size_t> second,
                                             const Matrix& jac, double rel_tolerance) {
  if (first.empty() || second.empty()) throw InvalidArgument("check_independence: pixel sets must be nonempty");
  for (std::size_t a : first) {
    if (std::find(second.begin(), second.end(), a) != second.end()) {
      throw InvalidArgument("check_independence: pixel sets overlap at index " + std::to_string(a));
    }
  }
  std::vector<std::size_t> both(first.begin(), first.end());
  both.insert(both.end(), second.begin(), second.end());
  IndependenceResult r;
  r.rank_first = numerical_rank(select_rows(jac, first), rel_tolerance);
  r.rank_second = numerical_rank(select_rows(jac, second), rel_tolerance);
  r.rank_union = numerical_rank(select_rows(jac, both), rel_tolerance);
  r.verdict = r.rank_union == r.rank_first + r.rank_second ? Independence::independent : Independence::dependent;
  return r;
}

}  // namespace slotid::analysis
