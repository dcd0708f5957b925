#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "slotid/common/error.hpp"
#include "slotid/common/matrix.hpp"

namespace slotid::analysis {

/// Relative row-norm threshold for "non-zero gradient" on learned maps.
inline constexpr double kDefaultIndexThreshold = 1e-6;

/// Per-slot sets of pixels that functionally depend on the slot at one point.
struct IndexSets {
  std::vector<std::vector<std::size_t>> sets;
  double threshold = 0.0;
  bool degenerate = false;  // the Jacobian was identically zero
};

inline std::size_t slot_dimension(const Matrix& jac, std::size_t slots) {
  if (slots == 0 || jac.cols() % static_cast<Eigen::Index>(slots) != 0) {
    throw DimensionError("Jacobian with " + std::to_string(jac.cols()) + " columns cannot be split into " +
                         std::to_string(slots) + " slots");
  }
  return static_cast<std::size_t>(jac.cols()) / slots;
}

/// Splits an N x (K*M) Jacobian into K blocks of shape N x M.
inline std::vector<Matrix> split_slot_blocks(const Matrix& jac, std::size_t slots) {
  const std::size_t m = slot_dimension(jac, slots);
  std::vector<Matrix> blocks;
  blocks.reserve(slots);
  for (std::size_t k = 0; k < slots; ++k) {
    blocks.emplace_back(jac.middleCols(static_cast<Eigen::Index>(k * m), static_cast<Eigen::Index>(m)));
  }
  return blocks;
}

/// Pixel n belongs to I_k iff the norm of row n of block k exceeds
/// threshold * (largest row norm over all pixels and slots).
inline IndexSets pixel_index_sets(std::span<const Matrix> blocks, double threshold = kDefaultIndexThreshold) {
  if (!(threshold >= 0.0)) throw InvalidArgument("pixel_index_sets: threshold must be non-negative");
  IndexSets out;
  out.threshold = threshold;
  out.sets.resize(blocks.size());
  if (blocks.empty()) return out;
  const Eigen::Index rows = blocks.front().rows();
  double top = 0.0;
  for (const Matrix& b : blocks) {
    if (b.rows() != rows) throw DimensionError("pixel_index_sets: blocks disagree on pixel count");
    if (!b.allFinite()) throw NonFiniteError("pixel_index_sets: non-finite Jacobian entries");
    if (b.size() > 0) top = std::max(top, b.rowwise().norm().maxCoeff());
  }
  if (top == 0.0) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const Vector norms = blocks[k].rowwise().norm();
    for (Eigen::Index n = 0; n < rows; ++n) {
      if (norms(n) > threshold * top) out.sets[k].push_back(static_cast<std::size_t>(n));
    }
  }
  return out;
}

inline IndexSets pixel_index_sets(const Matrix& jac, std::size_t slots, double threshold = kDefaultIndexThreshold) {
  const auto blocks = split_slot_blocks(jac, slots);
  return pixel_index_sets(std::span<const Matrix>(blocks), threshold);
}

inline bool pairwise_disjoint(const IndexSets& s) {
  std::vector<int> seen;
  for (const auto& set : s.sets) {
    for (std::size_t n : set) {
      if (n >= seen.size()) seen.resize(n + 1, 0);
      if (seen[n]++ > 0) return false;
    }
  }
  return true;
}

/// Number of pixels that appear in more than one slot's set.
inline std::size_t overlapping_pixels(const IndexSets& s) {
  std::vector<int> count;
  for (const auto& set : s.sets) {
    for (std::size_t n : set) {
      if (n >= count.size()) count.resize(n + 1, 0);
      ++count[n];
    }
  }
  return static_cast<std::size_t>(std::count_if(count.begin(), count.end(), [](int c) { return c > 1; }));
}

}  // namespace slotid::analysis
