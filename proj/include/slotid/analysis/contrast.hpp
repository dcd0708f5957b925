#pragma once

// Compositional contrast: sum over pixels of the pairwise products of the
// per-slot gradient norms. It vanishes exactly when every pixel depends on at
// most one slot.

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "slotid/analysis/index_sets.hpp"
#include "slotid/common/error.hpp"
#include "slotid/common/matrix.hpp"
#include "slotid/diff/graph.hpp"
#include "slotid/diff/jacobian.hpp"

namespace slotid::analysis {

enum class ContrastVariant { raw, slot_normalized, gradient_normalized };

inline const char* to_string(ContrastVariant v) {
  switch (v) {
    case ContrastVariant::raw:
      return "raw";
    case ContrastVariant::slot_normalized:
      return "slot_normalized";
    case ContrastVariant::gradient_normalized:
      return "gradient_normalized";
  }
  return "?";
}

inline ContrastVariant contrast_variant_from_string(const std::string& s) {
  if (s == "raw") return ContrastVariant::raw;
  if (s == "slot_normalized") return ContrastVariant::slot_normalized;
  if (s == "gradient_normalized") return ContrastVariant::gradient_normalized;
  throw InvalidArgument("unknown contrast variant '" + s + "'");
}

struct ContrastValue {
  double value = 0.0;
  ContrastVariant variant = ContrastVariant::raw;
};

/// N x K matrix of ||d f_n / d z_k||.
inline Matrix slot_gradient_norms(const Matrix& jac, std::size_t slots) {
  const std::size_t m = slot_dimension(jac, slots);
  if (!jac.allFinite()) throw NonFiniteError("contrast: non-finite Jacobian entries");
  Matrix norms(jac.rows(), static_cast<Eigen::Index>(slots));
  for (std::size_t k = 0; k < slots; ++k) {
    norms.col(static_cast<Eigen::Index>(k)) =
        jac.middleCols(static_cast<Eigen::Index>(k * m), static_cast<Eigen::Index>(m)).rowwise().norm();
  }
  return norms;
}

namespace detail {

// Pairwise product sum for one pixel: sum_{k<j} a_k a_j.
inline double pair_sum(const double* a, std::size_t k) {
  double c = 0.0, prefix = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    c += a[i] * prefix;
    prefix += a[i];
  }
  return c;
}

inline double slot_pair_factor(std::size_t slots) {
  if (slots < 2) throw InvalidArgument("slot-normalized contrast needs at least 2 slots");
  const double k = static_cast<double>(slots);
  return k * k - k;
}

}  // namespace detail

/// Raw contrast from a Jacobian with `slots` equal column blocks.
inline double compositional_contrast(const Matrix& jac, std::size_t slots) {
  const Matrix norms = slot_gradient_norms(jac, slots);
  double c = 0.0;
  std::vector<double> row(slots);
  for (Eigen::Index n = 0; n < norms.rows(); ++n) {
    for (std::size_t k = 0; k < slots; ++k) row[k] = norms(n, static_cast<Eigen::Index>(k));
    c += detail::pair_sum(row.data(), slots);
  }
  return c;
}

inline ContrastValue contrast_slot_normalized(ContrastValue raw, std::size_t slots) {
  if (raw.variant != ContrastVariant::raw) throw InvalidArgument("contrast_slot_normalized: expects a raw contrast");
  return {raw.value / detail::slot_pair_factor(slots), ContrastVariant::slot_normalized};
}

/// Per pixel, slot norms are divided by their mean m_n over slots and the
/// pixel's term is weighted by m_n, i.e. the term is pair_sum(a) / m_n.
/// Pixels with m_n = 0 contribute nothing.
inline double contrast_gradient_normalized(const Matrix& jac, std::size_t slots) {
  const Matrix norms = slot_gradient_norms(jac, slots);
  double c = 0.0;
  std::vector<double> row(slots);
  for (Eigen::Index n = 0; n < norms.rows(); ++n) {
    double mean = 0.0;
    for (std::size_t k = 0; k < slots; ++k) {
      row[k] = norms(n, static_cast<Eigen::Index>(k));
      mean += row[k];
    }
    mean /= static_cast<double>(slots);
    if (mean > 0.0) c += detail::pair_sum(row.data(), slots) / mean;
  }
  return c;
}

inline double contrast(const Matrix& jac, std::size_t slots, ContrastVariant variant) {
  switch (variant) {
    case ContrastVariant::raw:
      return compositional_contrast(jac, slots);
    case ContrastVariant::slot_normalized:
      return compositional_contrast(jac, slots) / detail::slot_pair_factor(slots);
    case ContrastVariant::gradient_normalized:
      return contrast_gradient_normalized(jac, slots);
  }
  return 0.0;
}

/// Records the contrast of a Jacobian that lives on `g`. `entry(n, i)` gives
/// the node holding d f_n / d z_i. Returns a single node differentiable with
/// respect to everything the entries depend on.
inline diff::NodeId record_contrast(diff::Graph& g, std::size_t pixels, std::size_t slots, std::size_t slot_dim,
                                    const std::function<diff::NodeId(std::size_t, std::size_t)>& entry,
                                    ContrastVariant variant, std::span<const diff::NodeId> column_scales = {}) {
  using diff::NodeId;
  const bool scaled = !column_scales.empty();
  if (scaled && column_scales.size() != slots * slot_dim) throw DimensionError("record_contrast: scale count");
  std::vector<NodeId> norm_ids(pixels * slots);
  std::vector<double> norm_vals(pixels * slots);
  std::vector<NodeId> parents(scaled ? 2 * slot_dim : slot_dim);
  std::vector<double> partials(parents.size());
  for (std::size_t n = 0; n < pixels; ++n) {
    for (std::size_t k = 0; k < slots; ++k) {
      double sq = 0.0;
      for (std::size_t i = 0; i < slot_dim; ++i) {
        parents[i] = entry(n, k * slot_dim + i);
        double v = g.value(parents[i]);
        if (scaled) {
          parents[slot_dim + i] = column_scales[k * slot_dim + i];
          v *= g.value(parents[slot_dim + i]);
        }
        sq += v * v;
      }
      const double nrm = std::sqrt(sq);
      for (std::size_t i = 0; i < slot_dim; ++i) {
        const double j = g.value(parents[i]);
        if (!scaled) {
          partials[i] = nrm > 0.0 ? j / nrm : 0.0;
          continue;
        }
        const double c = g.value(parents[slot_dim + i]);
        partials[i] = nrm > 0.0 ? j * c * c / nrm : 0.0;
        partials[slot_dim + i] = nrm > 0.0 ? j * j * c / nrm : 0.0;
      }
      norm_ids[n * slots + k] = g.record(diff::Op::norm, std::span<const NodeId>(parents), nrm,
                                         std::span<const double>(partials));
      norm_vals[n * slots + k] = nrm;
    }
  }
  const double factor = variant == ContrastVariant::slot_normalized ? 1.0 / detail::slot_pair_factor(slots) : 1.0;
  std::vector<double> d(pixels * slots, 0.0);
  double total = 0.0;
  for (std::size_t n = 0; n < pixels; ++n) {
    const double* a = norm_vals.data() + n * slots;
    double s = 0.0;
    for (std::size_t k = 0; k < slots; ++k) s += a[k];
    const double p = detail::pair_sum(a, slots);
    if (variant == ContrastVariant::gradient_normalized) {
      const double mean = s / static_cast<double>(slots);
      if (mean == 0.0) continue;
      total += p / mean;
      for (std::size_t k = 0; k < slots; ++k) {
        d[n * slots + k] = (s - a[k]) / mean - p / (mean * mean * static_cast<double>(slots));
      }
    } else {
      total += factor * p;
      for (std::size_t k = 0; k < slots; ++k) d[n * slots + k] = factor * (s - a[k]);
    }
  }
  return g.record(diff::Op::custom, std::span<const NodeId>(norm_ids), total, std::span<const double>(d));
}

/// Differentiable contrast of a recorded Jacobian.
inline diff::Var compositional_contrast(const diff::JacobianMatrix& jac, std::size_t slots,
                                        ContrastVariant variant = ContrastVariant::raw) {
  if (jac.rows() == 0 || jac.cols() == 0) throw InvalidArgument("compositional_contrast: empty Jacobian");
  if (slots == 0 || jac.cols() % slots != 0) throw DimensionError("compositional_contrast: bad slot count");
  diff::Graph& g = *jac(0, 0).graph();
  const diff::NodeId id = record_contrast(
      g, jac.rows(), slots, jac.cols() / slots, [&](std::size_t n, std::size_t i) { return jac(n, i).id(); },
      variant);
  return {&g, id};
}

/// A decoder is any callable usable as `f(std::span<const S>) -> std::vector<S>`
/// for S in {double, diff::Tangent}.
template <class Decoder>
diff::JacobianMatrix recorded_jacobian(diff::Graph& g, const Decoder& decoder, std::span<const double> z_hat) {
  std::vector<diff::Var> in;
  in.reserve(z_hat.size());
  for (double v : z_hat) in.push_back(g.leaf(v));
  return diff::jacobian([&](std::span<const diff::Tangent> z) { return decoder(z); }, std::span<const diff::Var>(in));
}

/// Per-slot blocks d f / d z_k of a decoder at z_hat.
template <class Decoder>
std::vector<Matrix> slot_jacobian_blocks(const Decoder& decoder, std::span<const double> z_hat, std::size_t slots) {
  diff::Graph g;
  const Matrix jac = recorded_jacobian(g, decoder, z_hat).values();
  return split_slot_blocks(jac, slots);
}

template <class Decoder>
ContrastValue compositional_contrast(const Decoder& decoder, std::span<const double> z_hat, std::size_t slots) {
  diff::Graph g;
  const diff::JacobianMatrix jac = recorded_jacobian(g, decoder, z_hat);
  return {compositional_contrast(jac, slots).value(), ContrastVariant::raw};
}

template <class Decoder>
ContrastValue contrast_gradient_normalized(const Decoder& decoder, std::span<const double> z_hat,
                                           std::size_t slots) {
  diff::Graph g;
  const diff::JacobianMatrix jac = recorded_jacobian(g, decoder, z_hat);
  return {compositional_contrast(jac, slots, ContrastVariant::gradient_normalized).value(),
          ContrastVariant::gradient_normalized};
}

}  // namespace slotid::analysis
