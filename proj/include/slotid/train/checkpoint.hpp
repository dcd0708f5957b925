#pragma once

// Checkpoint layout (little-endian):
//   "SLOTAE01"
//   u32 K, u32 M, u32 N, u32 hidden, f64 leaky slope
//   u64 parameter count P
//   f64[P] parameters, f64[P] first moments, f64[P] second moments
//   u64 step, u64 epoch
//   u32 scaler flag; if set: f64[N] pixel means, f64[N] pixel scales

#include <filesystem>
#include <fstream>
#include <string>

#include "slotid/common/binary_io.hpp"
#include "slotid/common/error.hpp"
#include "slotid/common/matrix.hpp"
#include "slotid/train/adam.hpp"
#include "slotid/train/autoencoder.hpp"

namespace slotid::train {

/// Per-pixel affine standardization of observations. Being pixel-wise, it
/// maps compositional generators to compositional generators.
struct ObservationScaler {
  bool enabled = false;
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static ObservationScaler fit(const RowMatrix& x) {
    ObservationScaler s;
    s.enabled = true;
    s.mean = x.colwise().mean();
    s.scale = ((x.rowwise() - s.mean).array().square().colwise().mean()).sqrt();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
      if (!(s.scale(j) > 0.0)) s.scale(j) = 1.0;
    }
    return s;
  }

  [[nodiscard]] RowMatrix apply(const RowMatrix& x) const {
    if (!enabled) return x;
    if (x.cols() != mean.size()) throw DimensionError("scaler: pixel dimension mismatch");
    return (x.rowwise() - mean).array().rowwise() / scale.array();
  }
};

struct Checkpoint {
  AutoEncoderSpec spec;
  TrainState state;
  ObservationScaler scaler;
};

inline constexpr char kCheckpointMagic[9] = "SLOTAE01";

inline void save_checkpoint(const Checkpoint& c, std::ostream& os) {
  const std::size_t p = c.state.params.size();
  if (c.state.first_moment.size() != p || c.state.second_moment.size() != p) {
    throw DimensionError("save_checkpoint: moment vectors do not match parameter vector");
  }
  io::write_magic(os, kCheckpointMagic);
  io::write_u32(os, static_cast<std::uint32_t>(c.spec.slots));
  io::write_u32(os, static_cast<std::uint32_t>(c.spec.slot_dim));
  io::write_u32(os, static_cast<std::uint32_t>(c.spec.pixels));
  io::write_u32(os, static_cast<std::uint32_t>(c.spec.hidden));
  io::write_f64(os, c.spec.leaky_slope);
  io::write_u64(os, p);
  io::write_f64s(os, c.state.params);
  io::write_f64s(os, c.state.first_moment);
  io::write_f64s(os, c.state.second_moment);
  io::write_u64(os, c.state.step);
  io::write_u64(os, c.state.epoch);
  io::write_u32(os, c.scaler.enabled ? 1u : 0u);
  if (c.scaler.enabled) {
    io::write_f64s(os, std::span<const double>(c.scaler.mean.data(), static_cast<std::size_t>(c.scaler.mean.size())));
    io::write_f64s(os, std::span<const double>(c.scaler.scale.data(), static_cast<std::size_t>(c.scaler.scale.size())));
  }
}

inline Checkpoint load_checkpoint(std::istream& is) {
  io::expect_magic(is, kCheckpointMagic);
  Checkpoint c;
  c.spec.slots = io::read_u32(is, "K");
  c.spec.slot_dim = io::read_u32(is, "M");
  c.spec.pixels = io::read_u32(is, "N");
  c.spec.hidden = io::read_u32(is, "hidden");
  c.spec.leaky_slope = io::read_f64(is, "leaky slope");
  const std::uint64_t p = io::read_u64(is, "parameter count");
  if (c.spec.slots == 0 || c.spec.slot_dim == 0 || c.spec.pixels == 0 || c.spec.hidden == 0) {
    throw FormatError("checkpoint: zero dimension in header");
  }
  if (p != AutoEncoder(c.spec).parameter_count()) {
    throw FormatError("checkpoint: parameter count does not match architecture header");
  }
  c.state.params = io::read_f64s(is, p, "parameters");
  c.state.first_moment = io::read_f64s(is, p, "first moments");
  c.state.second_moment = io::read_f64s(is, p, "second moments");
  c.state.step = io::read_u64(is, "step counter");
  c.state.epoch = io::read_u64(is, "epoch counter");
  const std::uint32_t has_scaler = io::read_u32(is, "scaler flag");
  if (has_scaler > 1) throw FormatError("checkpoint: bad scaler flag");
  if (has_scaler == 1) {
    c.scaler.enabled = true;
    const auto mean = io::read_f64s(is, c.spec.pixels, "scaler means");
    const auto scale = io::read_f64s(is, c.spec.pixels, "scaler scales");
    c.scaler.mean = Eigen::Map<const Eigen::RowVectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    c.scaler.scale = Eigen::Map<const Eigen::RowVectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
  }
  return c;
}

/// Writes to a temporary sibling and renames, so readers never see a
/// partially written file.
inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    save_checkpoint(c, os);
    if (!os) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + path.string());
  return load_checkpoint(is);
}

/// Loads and checks the architecture against `expected`.
inline Checkpoint load_checkpoint(const std::filesystem::path& path, const AutoEncoderSpec& expected) {
  Checkpoint c = load_checkpoint(path);
  if (!(c.spec == expected)) {
    throw DimensionError("checkpoint architecture (K=" + std::to_string(c.spec.slots) + ", M=" +
                         std::to_string(c.spec.slot_dim) + ", N=" + std::to_string(c.spec.pixels) + ", hidden=" +
                         std::to_string(c.spec.hidden) + ") does not match the expected model");
  }
  return c;
}

}  // namespace slotid::train
