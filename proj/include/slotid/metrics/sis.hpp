#pragma once

// Slot identifiability score.
//
// For every inferred slot j a kernel ridge readout predicts every
// ground-truth slot k. Readouts are fit on one split, ground-truth slots are
// matched to inferred slots by Hungarian matching on validation R^2, and the
// reported scores use the test split:
//   S1  = mean_k R2(k, pi(k))
//   S2  = mean_j max_{k : pi(k) != j} R2(k, j)
//   SIS = S1 - S2,  Slot MCC = S1.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "slotid/common/error.hpp"
#include "slotid/common/matrix.hpp"
#include "slotid/common/rng.hpp"
#include "slotid/metrics/hungarian.hpp"
#include "slotid/metrics/kernel_ridge.hpp"
#include "slotid/metrics/r2.hpp"

namespace slotid::metrics {

struct SisSplit {
  std::vector<std::size_t> fit;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Consecutive fit/val/test blocks with the given fractions of n rows.
inline SisSplit contiguous_split(std::size_t n, double fit_fraction = 0.4, double val_fraction = 0.3) {
  const auto nf = static_cast<std::size_t>(static_cast<double>(n) * fit_fraction);
  const auto nv = static_cast<std::size_t>(static_cast<double>(n) * val_fraction);
  if (nf < 2 || nv < 2 || n - nf - nv < 2) throw InvalidArgument("contiguous_split: too few samples");
  SisSplit s;
  for (std::size_t i = 0; i < n; ++i) (i < nf ? s.fit : i < nf + nv ? s.val : s.test).push_back(i);
  return s;
}

struct SisReport {
  std::size_t slots = 0;
  std::vector<double> matched_r2;             // per ground-truth slot, test split
  std::vector<std::size_t> permutation;       // ground-truth slot k -> inferred slot
  Matrix val_r2;                              // [ground truth][inferred]
  Matrix test_r2;                             // [ground truth][inferred]
  std::vector<bool> degenerate_inferred;      // zero-variance inferred slots
  std::vector<bool> degenerate_truth;         // zero-variance ground-truth slots
  double s1 = 0.0;
  double s2 = 0.0;
  double sis = 0.0;
  double slot_mcc = 0.0;
  std::size_t fit_count = 0;
  std::size_t val_count = 0;
  std::size_t test_count = 0;

  [[nodiscard]] std::string permutation_string() const {
    std::string s;
    for (std::size_t i = 0; i < permutation.size(); ++i) {
      if (i) s += ';';
      s += std::to_string(permutation[i]);
    }
    return s;
  }

  [[nodiscard]] std::string to_record() const {
    std::ostringstream os;
    os.precision(17);
    os << "K=" << slots << " s1=" << s1 << " s2=" << s2 << " sis=" << sis << " slot_mcc=" << slot_mcc
       << " permutation=" << permutation_string() << " fit=" << fit_count << " val=" << val_count
       << " test=" << test_count;
    for (std::size_t k = 0; k < matched_r2.size(); ++k) os << " r2_" << k << "=" << matched_r2[k];
    return os.str();
  }
};

namespace detail {

inline RowMatrix take_rows(const RowMatrix& m, const std::vector<std::size_t>& rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(m.rows())) throw DimensionError("sis: split index out of range");
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

inline RowMatrix slot_cols(const RowMatrix& m, std::size_t k, std::size_t dim) {
  return m.middleCols(static_cast<Eigen::Index>(k * dim), static_cast<Eigen::Index>(dim));
}

inline bool zero_variance(const RowMatrix& m) {
  if (m.rows() < 2) return true;
  const Eigen::RowVectorXd mean = m.colwise().mean();
  return ((m.rowwise() - mean).array().square().colwise().sum() <= 0.0).all();
}

}  // namespace detail

/// Core computation on pre-split data. Ground-truth and inferred latents both
/// have `slots` equal slot blocks (their slot dimensions may differ).
inline SisReport sis(const RowMatrix& fit_true, const RowMatrix& fit_hat, const RowMatrix& val_true,
                     const RowMatrix& val_hat, const RowMatrix& test_true, const RowMatrix& test_hat,
                     std::size_t slots, const ReadoutConfig& cfg = {}) {
  if (slots == 0) throw InvalidArgument("sis: need at least one slot");
  if (fit_true.rows() != fit_hat.rows() || val_true.rows() != val_hat.rows() || test_true.rows() != test_hat.rows()) {
    throw DimensionError("sis: ground-truth and inferred sample counts differ");
  }
  if (fit_true.cols() % static_cast<Eigen::Index>(slots) != 0 || fit_hat.cols() % static_cast<Eigen::Index>(slots) != 0) {
    throw DimensionError("sis: latent dimension not divisible by slot count");
  }
  const std::size_t dt = static_cast<std::size_t>(fit_true.cols()) / slots;
  const std::size_t dh = static_cast<std::size_t>(fit_hat.cols()) / slots;
  const auto ks = static_cast<Eigen::Index>(slots);

  SisReport r;
  r.slots = slots;
  r.fit_count = static_cast<std::size_t>(fit_true.rows());
  r.val_count = static_cast<std::size_t>(val_true.rows());
  r.test_count = static_cast<std::size_t>(test_true.rows());
  r.val_r2 = Matrix::Zero(ks, ks);
  r.test_r2 = Matrix::Zero(ks, ks);
  r.degenerate_inferred.assign(slots, false);
  r.degenerate_truth.assign(slots, false);
  for (std::size_t k = 0; k < slots; ++k) {
    r.degenerate_truth[k] = detail::zero_variance(detail::slot_cols(val_true, k, dt)) ||
                            detail::zero_variance(detail::slot_cols(test_true, k, dt));
  }

  for (std::size_t j = 0; j < slots; ++j) {
    const RowMatrix in_fit = detail::slot_cols(fit_hat, j, dh);
    if (detail::zero_variance(in_fit)) {
      r.degenerate_inferred[j] = true;
      continue;  // carries no information; R^2 stays 0
    }
    // one solve covers every ground-truth slot: the kernel depends only on j
    const ReadoutModel model = ReadoutModel::fit(in_fit, fit_true, cfg.bandwidth, cfg.ridge);
    const RowMatrix pred_val = model.predict(detail::slot_cols(val_hat, j, dh));
    const RowMatrix pred_test = model.predict(detail::slot_cols(test_hat, j, dh));
    for (std::size_t k = 0; k < slots; ++k) {
      if (r.degenerate_truth[k]) continue;
      r.val_r2(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
          r2_score(detail::slot_cols(val_true, k, dt), detail::slot_cols(pred_val, k, dt));
      r.test_r2(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
          r2_score(detail::slot_cols(test_true, k, dt), detail::slot_cols(pred_test, k, dt));
    }
  }

  r.permutation = hungarian(r.val_r2, true).permutation;
  r.matched_r2.assign(slots, 0.0);
  double s1 = 0.0;
  std::size_t n1 = 0;
  for (std::size_t k = 0; k < slots; ++k) {
    r.matched_r2[k] = r.test_r2(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(r.permutation[k]));
    if (r.degenerate_truth[k]) continue;
    s1 += r.matched_r2[k];
    ++n1;
  }
  r.s1 = n1 > 0 ? s1 / static_cast<double>(n1) : 0.0;

  double s2 = 0.0;
  std::size_t n2 = 0;
  for (std::size_t j = 0; j < slots; ++j) {
    if (r.degenerate_inferred[j]) continue;
    double best = 0.0;
    for (std::size_t k = 0; k < slots; ++k) {
      if (r.permutation[k] == j || r.degenerate_truth[k]) continue;
      best = std::max(best, r.test_r2(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)));
    }
    s2 += best;
    ++n2;
  }
  r.s2 = n2 > 0 ? s2 / static_cast<double>(n2) : 0.0;
  r.sis = r.s1 - r.s2;
  r.slot_mcc = r.s1;
  return r;
}

/// Index-split form: one pair of latent matrices and fit/val/test row sets.
/// The fit split is subsampled to cfg.max_fit_samples rows with `seed`.
inline SisReport sis(const RowMatrix& z_true, const RowMatrix& z_hat, std::size_t slots, SisSplit split,
                     const ReadoutConfig& cfg = {}, std::uint64_t seed = 0) {
  if (z_true.rows() != z_hat.rows()) throw DimensionError("sis: ground-truth and inferred sample counts differ");
  if (cfg.max_fit_samples > 0 && split.fit.size() > cfg.max_fit_samples) {
    Rng rng = make_rng(seed, streams::kReadoutSubsample);
    std::shuffle(split.fit.begin(), split.fit.end(), rng);
    split.fit.resize(cfg.max_fit_samples);
    std::sort(split.fit.begin(), split.fit.end());
  }
  return sis(detail::take_rows(z_true, split.fit), detail::take_rows(z_hat, split.fit),
             detail::take_rows(z_true, split.val), detail::take_rows(z_hat, split.val),
             detail::take_rows(z_true, split.test), detail::take_rows(z_hat, split.test), slots, cfg);
}

/// S1 alone, for latents whose slots are statistically dependent.
inline double slot_mcc(const RowMatrix& z_true, const RowMatrix& z_hat, std::size_t slots, const SisSplit& split,
                       const ReadoutConfig& cfg = {}, std::uint64_t seed = 0) {
  return sis(z_true, z_hat, slots, split, cfg, seed).s1;
}

}  // namespace slotid::metrics
