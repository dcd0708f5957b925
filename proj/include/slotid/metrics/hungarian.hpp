#pragma once

// Kuhn-Munkres with row/column potentials, O(n^3).

#include <cmath>
#include <limits>
#include <vector>

#include "slotid/common/error.hpp"
#include "slotid/common/matrix.hpp"

namespace slotid::metrics {

struct Assignment {
  std::vector<std::size_t> permutation;  // row i is assigned column permutation[i]
  double total = 0.0;                    // sum of the original scores along the assignment
};

inline Assignment hungarian(const Matrix& score, bool maximize) {
  if (score.rows() != score.cols()) throw DimensionError("hungarian: score matrix must be square");
  if (!score.allFinite()) throw NonFiniteError("hungarian: non-finite score");
  const auto n = static_cast<std::size_t>(score.rows());
  Assignment out;
  if (n == 0) return out;
  const double inf = std::numeric_limits<double>::infinity();
  auto cost = [&](std::size_t i, std::size_t j) {
    const double s = score(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return maximize ? -s : s;
  };
  // 1-based potentials; p[j] = row matched to column j, 0 = none
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  out.permutation.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.permutation[p[j] - 1] = j - 1;
  for (std::size_t i = 0; i < n; ++i) {
    out.total += score(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(out.permutation[i]));
  }
  return out;
}

}  // namespace slotid::metrics
