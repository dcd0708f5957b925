#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "slotid/analysis/contrast.hpp"
#include "slotid/analysis/index_sets.hpp"
#include "slotid/analysis/rank.hpp"
#include "slotid/common/hash.hpp"
#include "slotid/common/rng.hpp"

namespace slotid::analysis {

inline constexpr std::size_t kDefaultPartitionBudget = 200;

struct Bipartition {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
  IndependenceResult result;
};

struct IrreducibilityReport {
  std::string z_hash;
  std::size_t slot = 0;
  std::size_t pixel_count = 0;
  std::size_t tested = 0;
  bool exhaustive = false;
  bool irreducible = true;  // "so far": no tested bipartition was independent
  double tolerance = 0.0;
  std::vector<Bipartition> counterexamples;
};

namespace detail {

// Bipartitions of p >= 2 pixels, with pixel 0 pinned to the first part so each
// unordered split appears once. A mask over pixels 1..p-1 selects the second
// part; the all-zero mask is excluded.
inline Bipartition split_by_mask(const std::vector<std::size_t>& pixels, const std::vector<bool>& mask) {
  Bipartition b;
  b.first.push_back(pixels[0]);
  for (std::size_t i = 1; i < pixels.size(); ++i) (mask[i - 1] ? b.second : b.first).push_back(pixels[i]);
  return b;
}

inline std::vector<std::vector<bool>> bipartition_masks(std::size_t p, std::size_t budget, std::uint64_t seed,
                                                        bool& exhaustive) {
  std::vector<std::vector<bool>> masks;
  const std::size_t bits = p - 1;
  // 2^(p-1) - 1 splits in total
  const bool small = bits < 63 && ((std::uint64_t{1} << bits) - 1) <= budget;
  exhaustive = small;
  if (small) {
    const std::uint64_t total = (std::uint64_t{1} << bits) - 1;
    for (std::uint64_t m = 1; m <= total; ++m) {
      std::vector<bool> mask(bits);
      for (std::size_t i = 0; i < bits; ++i) mask[i] = ((m >> i) & 1u) != 0;
      masks.push_back(std::move(mask));
    }
    return masks;
  }
  Rng rng = make_rng(seed, streams::kPartitions);
  std::bernoulli_distribution coin(0.5);
  std::set<std::vector<bool>> seen;
  while (masks.size() < budget) {
    std::vector<bool> mask(bits);
    bool any = false;
    for (std::size_t i = 0; i < bits; ++i) {
      mask[i] = coin(rng);
      any = any || mask[i];
    }
    if (!any || !seen.insert(mask).second) continue;
    masks.push_back(std::move(mask));
  }
  return masks;
}

}  // namespace detail

/// Tests sampled bipartitions of I_k(z) for independence. The mechanism is
/// irreducible so far iff every tested split is dependent.
inline IrreducibilityReport check_irreducibility(const Matrix& jac, std::size_t slots, std::size_t slot,
                                                 std::size_t partition_budget, double rank_tolerance,
                                                 std::uint64_t seed,
                                                 double index_threshold = kDefaultIndexThreshold) {
  const IndexSets sets = pixel_index_sets(jac, slots, index_threshold);
  if (slot >= slots) throw InvalidArgument("check_irreducibility: slot index out of range");
  const std::vector<std::size_t>& pixels = sets.sets[slot];
  if (pixels.empty()) throw InvalidArgument("check_irreducibility: slot affects no pixels");
  IrreducibilityReport report;
  report.slot = slot;
  report.pixel_count = pixels.size();
  report.tolerance = rank_tolerance;
  Fnv1a h;
  for (Eigen::Index i = 0; i < jac.size(); ++i) h.add(jac.data()[i]);
  report.z_hash = h.hex();
  if (pixels.size() < 2) {
    report.exhaustive = true;
    return report;
  }
  bool exhaustive = false;
  const auto masks = detail::bipartition_masks(pixels.size(), partition_budget, seed + slot, exhaustive);
  report.exhaustive = exhaustive;
  for (const auto& mask : masks) {
    Bipartition b = detail::split_by_mask(pixels, mask);
    b.result = check_independence(b.first, b.second, jac, rank_tolerance);
    ++report.tested;
    if (b.result.verdict == Independence::independent) {
      report.irreducible = false;
      report.counterexamples.push_back(std::move(b));
    }
  }
  return report;
}

/// Same check for a generic map evaluated at z (see recorded_jacobian).
template <class Map>
IrreducibilityReport check_irreducibility(const Map& f, std::span<const double> z, std::size_t slots,
                                          std::size_t slot, std::size_t partition_budget, double rank_tolerance,
                                          std::uint64_t seed) {
  diff::Graph g;
  const Matrix jac = recorded_jacobian(g, f, z).values();
  IrreducibilityReport r = check_irreducibility(jac, slots, slot, partition_budget, rank_tolerance, seed);
  r.z_hash = hash_hex(z);
  return r;
}

/// One structured text record per report: hash, slot, sizes, ranks, verdict.
inline std::string to_record(const IrreducibilityReport& r) {
  std::ostringstream os;
  os << "z=" << r.z_hash << " slot=" << r.slot << " pixels=" << r.pixel_count << " tested=" << r.tested
     << " exhaustive=" << (r.exhaustive ? 1 : 0) << " tol=" << r.tolerance
     << " verdict=" << (r.irreducible ? "irreducible" : "reducible");
  for (const Bipartition& b : r.counterexamples) {
    os << "\n  z=" << r.z_hash << " slot=" << r.slot << " sizes=" << b.first.size() << "/" << b.second.size()
       << " ranks=" << b.result.rank_first << "+" << b.result.rank_second << " union=" << b.result.rank_union
       << " verdict=" << to_string(b.result.verdict);
  }
  return os.str();
}

}  // namespace slotid::analysis
