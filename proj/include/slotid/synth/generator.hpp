#pragma once

// Ground-truth generator: one small LeakyReLU MLP (M -> hidden -> slot_out)
// applied to every slot with shared weights; the observation is the
// concatenation of the slot outputs, so each pixel depends on exactly one slot.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slotid/common/binary_io.hpp"
#include "slotid/common/error.hpp"
#include "slotid/common/matrix.hpp"
#include "slotid/common/rng.hpp"
#include "slotid/nn/mlp.hpp"
#include "slotid/synth/latents.hpp"

namespace slotid::synth {

inline constexpr double kDefaultWeightRange = 10.0;

struct ObservationBatch {
  RowMatrix values;
  std::size_t slots = 0;
  std::size_t slot_out = 0;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
  [[nodiscard]] std::size_t pixels() const { return static_cast<std::size_t>(values.cols()); }
};

class GeneratorSpec {
 public:
  GeneratorSpec() = default;

  GeneratorSpec(std::size_t slots, std::size_t slot_dim, std::size_t slot_out, std::size_t hidden, double leaky_slope,
                std::vector<double> params)
      : slots_(slots), slot_dim_(slot_dim), slot_out_(slot_out), hidden_(hidden), slope_(leaky_slope),
        params_(std::move(params)) {
    if (slots_ == 0 || slot_dim_ == 0 || hidden_ == 0) throw InvalidArgument("generator: dimensions must be positive");
    if (slot_out_ <= slot_dim_) {
      throw InvalidArgument("generator: slot output dimension (" + std::to_string(slot_out_) +
                            ") must exceed slot dimension (" + std::to_string(slot_dim_) +
                            "); otherwise mechanisms are reducible");
    }
    mlp_ = nn::Mlp({slot_dim_, hidden_, slot_out_}, slope_);
    if (params_.size() != mlp_.parameter_count()) throw DimensionError("generator: wrong parameter count");
  }

  [[nodiscard]] std::size_t slots() const { return slots_; }
  [[nodiscard]] std::size_t slot_dim() const { return slot_dim_; }
  [[nodiscard]] std::size_t slot_out() const { return slot_out_; }
  [[nodiscard]] std::size_t hidden() const { return hidden_; }
  [[nodiscard]] double leaky_slope() const { return slope_; }
  [[nodiscard]] std::size_t latent_dim() const { return slots_ * slot_dim_; }
  [[nodiscard]] std::size_t output_dim() const { return slots_ * slot_out_; }
  [[nodiscard]] const std::vector<double>& params() const { return params_; }
  [[nodiscard]] const nn::Mlp& slot_mlp() const { return mlp_; }

  /// Renders one latent vector; usable with double and diff::Tangent.
  template <class S>
  std::vector<S> operator()(std::span<const S> z) const {
    if (z.size() != latent_dim()) throw DimensionError("generator: latent size mismatch");
    std::vector<S> out;
    out.reserve(output_dim());
    for (std::size_t k = 0; k < slots_; ++k) {
      auto block = mlp_.apply<S>(params_, z.subspan(k * slot_dim_, slot_dim_));
      out.insert(out.end(), block.begin(), block.end());
    }
    return out;
  }

  /// Block-diagonal Jacobian (output_dim x latent_dim) at z.
  [[nodiscard]] Matrix jacobian(std::span<const double> z) const {
    if (z.size() != latent_dim()) throw DimensionError("generator: latent size mismatch");
    Matrix jac = Matrix::Zero(static_cast<Eigen::Index>(output_dim()), static_cast<Eigen::Index>(latent_dim()));
    for (std::size_t k = 0; k < slots_; ++k) {
      jac.block(static_cast<Eigen::Index>(k * slot_out_), static_cast<Eigen::Index>(k * slot_dim_),
                static_cast<Eigen::Index>(slot_out_), static_cast<Eigen::Index>(slot_dim_)) =
          mlp_.jacobian(params_, z.subspan(k * slot_dim_, slot_dim_));
    }
    return jac;
  }

  friend bool operator==(const GeneratorSpec& a, const GeneratorSpec& b) {
    return a.slots_ == b.slots_ && a.slot_dim_ == b.slot_dim_ && a.slot_out_ == b.slot_out_ &&
           a.hidden_ == b.hidden_ && a.slope_ == b.slope_ && a.params_ == b.params_;
  }

 private:
  std::size_t slots_ = 0;
  std::size_t slot_dim_ = 0;
  std::size_t slot_out_ = 0;
  std::size_t hidden_ = 0;
  double slope_ = diff::kDefaultLeakySlope;
  std::vector<double> params_;
  nn::Mlp mlp_;
};

/// Samples the shared slot MLP with every weight and bias uniform on
/// [-weight_range, weight_range]. `hidden` = 0 means hidden = slot_out.
inline GeneratorSpec build_generator(std::size_t slots, std::size_t slot_dim, std::size_t slot_out, std::uint64_t seed,
                                     double weight_range = kDefaultWeightRange, std::size_t hidden = 0,
                                     double leaky_slope = diff::kDefaultLeakySlope) {
  if (slots < 1 || slot_dim < 1) throw InvalidArgument("build_generator: K and M must be at least 1");
  if (slot_out <= slot_dim) {
    throw InvalidArgument("build_generator: slot_out must be greater than M for irreducibility");
  }
  if (!(weight_range > 0.0)) throw InvalidArgument("build_generator: weight range must be positive");
  if (hidden == 0) hidden = slot_out;
  const nn::Mlp mlp({slot_dim, hidden, slot_out}, leaky_slope);
  std::vector<double> params(mlp.parameter_count());
  Rng rng = make_rng(seed, streams::kGeneratorWeights);
  mlp.initialize_uniform(params, weight_range, rng);
  return {slots, slot_dim, slot_out, hidden, leaky_slope, std::move(params)};
}

inline ObservationBatch render(const GeneratorSpec& gen, const RowMatrix& z) {
  if (static_cast<std::size_t>(z.cols()) != gen.latent_dim()) {
    throw DimensionError("render: latent batch has " + std::to_string(z.cols()) + " columns, expected " +
                         std::to_string(gen.latent_dim()));
  }
  ObservationBatch x;
  x.slots = gen.slots();
  x.slot_out = gen.slot_out();
  x.values.resize(z.rows(), static_cast<Eigen::Index>(gen.output_dim()));
  for (std::size_t k = 0; k < gen.slots(); ++k) {
    const RowMatrix block = z.middleCols(static_cast<Eigen::Index>(k * gen.slot_dim()),
                                         static_cast<Eigen::Index>(gen.slot_dim()));
    x.values.middleCols(static_cast<Eigen::Index>(k * gen.slot_out()), static_cast<Eigen::Index>(gen.slot_out())) =
        gen.slot_mlp().forward_batch(gen.params(), block);
  }
  return x;
}

inline ObservationBatch render(const GeneratorSpec& gen, const LatentBatch& z) {
  if (z.slots != gen.slots() || z.slot_dim != gen.slot_dim()) throw DimensionError("render: slot partition mismatch");
  return render(gen, z.values);
}

// ---------------------------------------------------------------------------
// Serialization: "SLOTGEN1", K, M, slot_out, hidden (u32 LE), leaky slope
// (f64 LE), then W1, b1, W2, b2 as row-major f64 LE.

inline constexpr char kGeneratorMagic[9] = "SLOTGEN1";

inline void save_generator(const GeneratorSpec& gen, std::ostream& os) {
  io::write_magic(os, kGeneratorMagic);
  io::write_u32(os, static_cast<std::uint32_t>(gen.slots()));
  io::write_u32(os, static_cast<std::uint32_t>(gen.slot_dim()));
  io::write_u32(os, static_cast<std::uint32_t>(gen.slot_out()));
  io::write_u32(os, static_cast<std::uint32_t>(gen.hidden()));
  io::write_f64(os, gen.leaky_slope());
  io::write_f64s(os, gen.params());
}

inline GeneratorSpec load_generator(std::istream& is) {
  io::expect_magic(is, kGeneratorMagic);
  const std::size_t k = io::read_u32(is, "K");
  const std::size_t m = io::read_u32(is, "M");
  const std::size_t out = io::read_u32(is, "slot_out");
  const std::size_t hidden = io::read_u32(is, "hidden");
  const double slope = io::read_f64(is, "leaky slope");
  if (k == 0 || m == 0 || hidden == 0 || out == 0 || k > 4096 || m > 4096 || out > 65536 || hidden > 65536) {
    throw FormatError("generator file: implausible dimensions");
  }
  const std::size_t count = hidden * m + hidden + out * hidden + out;
  auto params = io::read_f64s(is, count, "generator weights");
  return {k, m, out, hidden, slope, std::move(params)};
}

inline void save_generator(const GeneratorSpec& gen, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  save_generator(gen, os);
  if (!os) throw Error("failed writing " + path.string());
}

inline GeneratorSpec load_generator(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open generator file " + path.string());
  return load_generator(is);
}

/// Human-readable mirror of the binary file.
inline nlohmann::json generator_to_json(const GeneratorSpec& gen) {
  const nn::Mlp& mlp = gen.slot_mlp();
  nlohmann::json layers = nlohmann::json::array();
  for (const nn::DenseLayer& l : mlp.layers()) {
    nlohmann::json w = nlohmann::json::array();
    for (std::size_t r = 0; r < l.out; ++r) {
      w.push_back(std::vector<double>(gen.params().begin() + static_cast<std::ptrdiff_t>(l.weight_offset + r * l.in),
                                      gen.params().begin() + static_cast<std::ptrdiff_t>(l.weight_offset + (r + 1) * l.in)));
    }
    layers.push_back({{"weights", w},
                      {"bias", std::vector<double>(gen.params().begin() + static_cast<std::ptrdiff_t>(l.bias_offset),
                                                   gen.params().begin() + static_cast<std::ptrdiff_t>(l.bias_offset + l.out))}});
  }
  return {{"magic", "SLOTGEN1"},
          {"K", gen.slots()},
          {"M", gen.slot_dim()},
          {"slot_out", gen.slot_out()},
          {"hidden", gen.hidden()},
          {"leaky_slope", gen.leaky_slope()},
          {"layers", layers}};
}

}  // namespace slotid::synth
