#pragma once

// Structure report for a decoder: contrast variants, index-set overlap,
// mechanism ranks and SIS on freshly sampled data.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "slotid/analysis/contrast.hpp"
#include "slotid/analysis/index_sets.hpp"
#include "slotid/analysis/rank.hpp"
#include "slotid/metrics/sis.hpp"
#include "slotid/synth/generator.hpp"
#include "slotid/synth/latents.hpp"
#include "slotid/train/autoencoder.hpp"
#include "slotid/train/checkpoint.hpp"

namespace slotid::experiments {

struct StructureReport {
  std::size_t slots = 0;
  std::size_t slot_dim = 0;
  std::size_t pixels = 0;
  std::size_t samples = 0;
  std::size_t probes = 0;  // latent points used for Jacobian statistics
  double contrast_raw = 0.0;
  double contrast_slot_normalized = 0.0;
  double contrast_gradient_normalized = 0.0;
  double overlap_fraction = 0.0;      // mean share of pixels in two or more index sets
  double max_overlap_fraction = 0.0;
  double disjoint_fraction = 0.0;     // share of probes with pairwise disjoint index sets
  double index_threshold = analysis::kDefaultIndexThreshold;
  double rank_tolerance = analysis::kLearnedRankTolerance;
  double mechanism_rank_mean = 0.0;
  std::size_t mechanism_rank_min = 0;
  std::size_t mechanism_rank_max = 0;
  double mechanism_rank_full_fraction = 0.0;  // share of (probe, slot) with rank M
  double rec_normalized = std::numeric_limits<double>::quiet_NaN();
  metrics::SisReport sis;

  [[nodiscard]] std::string to_text() const {
    std::ostringstream os;
    os.precision(10);
    os << "K=" << slots << " M=" << slot_dim << " N=" << pixels << " samples=" << samples << " probes=" << probes
       << "\n";
    os << "contrast raw=" << contrast_raw << " slot_normalized=" << contrast_slot_normalized
       << " gradient_normalized=" << contrast_gradient_normalized << "\n";
    os << "index_sets threshold=" << index_threshold << " overlap_fraction=" << overlap_fraction
       << " max_overlap_fraction=" << max_overlap_fraction << " disjoint_fraction=" << disjoint_fraction << "\n";
    os << "mechanism_rank tol=" << rank_tolerance << " mean=" << mechanism_rank_mean << " min=" << mechanism_rank_min
       << " max=" << mechanism_rank_max << " full_fraction=" << mechanism_rank_full_fraction << "\n";
    if (rec_normalized == rec_normalized) os << "reconstruction normalized=" << rec_normalized << "\n";
    os << "sis " << sis.to_record() << "\n";
    return os.str();
  }
};

struct AnalyzeOptions {
  std::size_t samples = 5000;
  std::size_t probes = 200;
  std::uint64_t seed = 0;
  double rank_tolerance = analysis::kLearnedRankTolerance;
  double index_threshold = analysis::kDefaultIndexThreshold;
  metrics::ReadoutConfig readout;
};

using JacobianFn = std::function<Matrix(std::span<const double>)>;

/// Jacobian statistics of `jac` at the first `probes` rows of `z_hat`, plus
/// SIS between `z_true` and `z_hat` on a 40/30/30 split.
inline StructureReport analyze_structure(const JacobianFn& jac, const RowMatrix& z_true, const RowMatrix& z_hat,
                                         std::size_t slots, std::size_t slot_dim, const AnalyzeOptions& opt) {
  if (z_true.rows() != z_hat.rows()) throw DimensionError("analyze: sample counts differ");
  StructureReport r;
  r.slots = slots;
  r.slot_dim = slot_dim;
  r.samples = static_cast<std::size_t>(z_true.rows());
  r.rank_tolerance = opt.rank_tolerance;
  r.index_threshold = opt.index_threshold;
  r.probes = std::min<std::size_t>(opt.probes, r.samples);
  if (r.probes == 0) throw InvalidArgument("analyze: need at least one probe");
  r.mechanism_rank_min = std::numeric_limits<std::size_t>::max();
  std::size_t rank_sum = 0;
  std::size_t full = 0;
  std::size_t disjoint = 0;
  for (std::size_t p = 0; p < r.probes; ++p) {
    const std::span<const double> z(z_hat.row(static_cast<Eigen::Index>(p)).data(), slots * slot_dim);
    const Matrix j = jac(z);
    if (!j.allFinite()) throw NonFiniteError("analyze: non-finite Jacobian");
    r.pixels = static_cast<std::size_t>(j.rows());
    r.contrast_raw += analysis::compositional_contrast(j, slots);
    r.contrast_gradient_normalized += analysis::contrast_gradient_normalized(j, slots);
    const analysis::IndexSets sets = analysis::pixel_index_sets(j, slots, opt.index_threshold);
    const double frac = static_cast<double>(analysis::overlapping_pixels(sets)) / static_cast<double>(j.rows());
    r.overlap_fraction += frac;
    r.max_overlap_fraction = std::max(r.max_overlap_fraction, frac);
    if (analysis::pairwise_disjoint(sets)) ++disjoint;
    for (std::size_t k = 0; k < slots; ++k) {
      const std::size_t rk =
          sets.sets[k].empty() ? 0 : analysis::subset_rank(j, sets.sets[k], opt.rank_tolerance).rank;
      rank_sum += rk;
      r.mechanism_rank_min = std::min(r.mechanism_rank_min, rk);
      r.mechanism_rank_max = std::max(r.mechanism_rank_max, rk);
      if (rk == slot_dim) ++full;
    }
  }
  const auto np = static_cast<double>(r.probes);
  r.contrast_raw /= np;
  r.contrast_gradient_normalized /= np;
  r.contrast_slot_normalized =
      slots >= 2 ? analysis::contrast_slot_normalized({r.contrast_raw, analysis::ContrastVariant::raw}, slots).value
                 : 0.0;
  r.overlap_fraction /= np;
  r.disjoint_fraction = static_cast<double>(disjoint) / np;
  r.mechanism_rank_mean = static_cast<double>(rank_sum) / (np * static_cast<double>(slots));
  r.mechanism_rank_full_fraction = static_cast<double>(full) / (np * static_cast<double>(slots));
  r.sis = metrics::sis(z_true, z_hat, slots, metrics::contiguous_split(r.samples), opt.readout, opt.seed);
  return r;
}

/// Trained model against fresh data from the generator it was trained on.
inline StructureReport analyze_checkpoint(const train::Checkpoint& ckpt, const synth::GeneratorSpec& gen,
                                          const synth::LatentDistribution& dist, const AnalyzeOptions& opt) {
  const train::AutoEncoderSpec& s = ckpt.spec;
  if (s.slots != gen.slots() || s.slot_dim != gen.slot_dim() || s.pixels != gen.output_dim()) {
    throw DimensionError("analyze: checkpoint (K=" + std::to_string(s.slots) + ", M=" + std::to_string(s.slot_dim) +
                         ", N=" + std::to_string(s.pixels) + ") does not match generator (K=" +
                         std::to_string(gen.slots()) + ", M=" + std::to_string(gen.slot_dim()) +
                         ", N=" + std::to_string(gen.output_dim()) + ")");
  }
  const train::AutoEncoder model(s);
  const std::vector<double>& p = ckpt.state.params;
  const synth::LatentBatch z = synth::sample_latents(opt.samples, dist, gen.slots(), opt.seed, streams::kTestLatents);
  const RowMatrix x = ckpt.scaler.apply(synth::render(gen, z).values);
  const RowMatrix z_hat = model.encode(p, x);
  StructureReport r = analyze_structure([&](std::span<const double> zh) { return model.decoder_jacobian(p, zh); },
                                        z.values, z_hat, gen.slots(), gen.slot_dim(), opt);
  r.rec_normalized = (model.decode(p, z_hat) - x).rowwise().squaredNorm().mean() / static_cast<double>(s.pixels);
  return r;
}

/// The ground-truth generator as decoder with the identity as encoder.
inline StructureReport analyze_generator(const synth::GeneratorSpec& gen, const synth::LatentDistribution& dist,
                                         const AnalyzeOptions& opt) {
  const synth::LatentBatch z = synth::sample_latents(opt.samples, dist, gen.slots(), opt.seed, streams::kTestLatents);
  StructureReport r = analyze_structure([&](std::span<const double> zz) { return gen.jacobian(zz); }, z.values,
                                        z.values, gen.slots(), gen.slot_dim(), opt);
  r.rec_normalized = 0.0;
  return r;
}

}  // namespace slotid::experiments
