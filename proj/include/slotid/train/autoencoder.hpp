#pragma once

#include <span>
#include <string>
#include <vector>

#include "slotid/common/error.hpp"
#include "slotid/common/matrix.hpp"
#include "slotid/nn/mlp.hpp"

namespace slotid::train {

inline constexpr std::size_t kDefaultHidden = 80;

/// Architecture of the inference model: encoder N -> h -> h -> K*M and
/// decoder K*M -> h -> h -> N, both with LeakyReLU between layers. The
/// parameter vector holds the encoder's parameters followed by the decoder's.
struct AutoEncoderSpec {
  std::size_t slots = 0;
  std::size_t slot_dim = 0;
  std::size_t pixels = 0;
  std::size_t hidden = kDefaultHidden;
  double leaky_slope = diff::kDefaultLeakySlope;

  [[nodiscard]] std::size_t latent_dim() const { return slots * slot_dim; }

  friend bool operator==(const AutoEncoderSpec&, const AutoEncoderSpec&) = default;
};

class AutoEncoder {
 public:
  AutoEncoder() = default;

  explicit AutoEncoder(const AutoEncoderSpec& spec)
      : spec_(spec),
        encoder_({spec.pixels, spec.hidden, spec.hidden, spec.latent_dim()}, spec.leaky_slope),
        decoder_({spec.latent_dim(), spec.hidden, spec.hidden, spec.pixels}, spec.leaky_slope) {
    if (spec.slots == 0 || spec.slot_dim == 0 || spec.pixels == 0 || spec.hidden == 0) {
      throw InvalidArgument("AutoEncoder: dimensions must be positive");
    }
  }

  [[nodiscard]] const AutoEncoderSpec& spec() const { return spec_; }
  [[nodiscard]] const nn::Mlp& encoder() const { return encoder_; }
  [[nodiscard]] const nn::Mlp& decoder() const { return decoder_; }
  [[nodiscard]] std::size_t parameter_count() const {
    return encoder_.parameter_count() + decoder_.parameter_count();
  }

  [[nodiscard]] std::span<const double> encoder_params(std::span<const double> p) const {
    check(p.size());
    return p.first(encoder_.parameter_count());
  }
  [[nodiscard]] std::span<const double> decoder_params(std::span<const double> p) const {
    check(p.size());
    return p.subspan(encoder_.parameter_count());
  }

  template <class Engine>
  void initialize(std::span<double> p, Engine& rng) const {
    check(p.size());
    encoder_.initialize_fan_in(p.first(encoder_.parameter_count()), rng);
    decoder_.initialize_fan_in(p.subspan(encoder_.parameter_count()), rng);
  }

  [[nodiscard]] RowMatrix encode(std::span<const double> p, const RowMatrix& x) const {
    return encoder_.forward_batch(encoder_params(p), x);
  }
  [[nodiscard]] RowMatrix decode(std::span<const double> p, const RowMatrix& z) const {
    return decoder_.forward_batch(decoder_params(p), z);
  }
  [[nodiscard]] Matrix decoder_jacobian(std::span<const double> p, std::span<const double> z) const {
    return decoder_.jacobian(decoder_params(p), z);
  }

 private:
  void check(std::size_t n) const {
    if (n != parameter_count()) {
      throw DimensionError("AutoEncoder: expected " + std::to_string(parameter_count()) + " parameters, got " +
                           std::to_string(n));
    }
  }

  AutoEncoderSpec spec_;
  nn::Mlp encoder_;
  nn::Mlp decoder_;
};

}  // namespace slotid::train
