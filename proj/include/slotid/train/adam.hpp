#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "slotid/common/error.hpp"

namespace slotid::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainState {
  std::vector<double> params;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;

  TrainState() = default;
  explicit TrainState(std::vector<double> p)
      : params(std::move(p)), first_moment(params.size(), 0.0), second_moment(params.size(), 0.0) {}
};

/// Bias-corrected Adam update.
inline void adam_step(TrainState& s, std::span<const double> grad, double lr, const AdamConfig& cfg = {}) {
  if (grad.size() != s.params.size() || s.first_moment.size() != s.params.size() ||
      s.second_moment.size() != s.params.size()) {
    throw DimensionError("adam_step: gradient/moment size mismatch");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw NonFiniteError("adam_step: non-finite gradient");
  }
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    double& m = s.first_moment[i];
    double& v = s.second_moment[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad[i];
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad[i] * grad[i];
    s.params[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.epsilon);
  }
}

/// Step decay: base_lr before decay_epoch, base_lr / factor from then on.
inline double lr_schedule(std::size_t epoch, double base_lr, std::size_t decay_epoch = 50, double factor = 10.0) {
  if (!(factor > 0.0)) throw InvalidArgument("lr_schedule: factor must be positive");
  return epoch < decay_epoch ? base_lr : base_lr / factor;
}

}  // namespace slotid::train
