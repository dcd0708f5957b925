#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "slotid/analysis/contrast.hpp"
#include "slotid/common/error.hpp"
#include "slotid/common/matrix.hpp"
#include "slotid/common/rng.hpp"
#include "slotid/metrics/sis.hpp"
#include "slotid/synth/generator.hpp"
#include "slotid/synth/latents.hpp"
#include "slotid/train/adam.hpp"
#include "slotid/train/autoencoder.hpp"
#include "slotid/train/checkpoint.hpp"
#include "slotid/train/objective.hpp"

namespace slotid::train {

struct TrainConfig {
  double lambda = 0.0;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::size_t decay_epoch = 50;
  double decay_factor = 10.0;
  std::size_t eval_period = 4;
  std::uint64_t seed = 0;
  analysis::ContrastVariant loss_variant = analysis::ContrastVariant::raw;
  bool latent_scaled_contrast = false;  // contrast term in batch-standardized latent coordinates
  std::size_t hidden = kDefaultHidden;
  double leaky_slope = diff::kDefaultLeakySlope;
  AdamConfig adam;
  std::size_t train_size = 75000;
  std::size_t val_size = 6000;
  std::size_t test_size = 5000;
  bool standardize = true;
  double divergence_threshold = 1e12;
  metrics::ReadoutConfig readout;
  std::size_t contrast_eval_samples = 1000;  // test rows used for the contrast metric; 0 = all

  void validate() const {
    if (!(lambda >= 0.0)) throw InvalidArgument("train config: lambda must be non-negative");
    if (eval_period < 1) throw InvalidArgument("train config: eval period must be at least 1");
    if (batch_size < 1) throw InvalidArgument("train config: batch size must be at least 1");
    if (!(learning_rate > 0.0)) throw InvalidArgument("train config: learning rate must be positive");
    if (!(decay_factor > 0.0)) throw InvalidArgument("train config: decay factor must be positive");
    if (train_size < 2 || val_size < 2 || test_size < 2) throw InvalidArgument("train config: split sizes too small");
  }
};

/// One evaluation on held-out data.
struct EvalRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double rec_raw = 0.0;         // mean |x_hat - x|^2 on the test split
  double rec_normalized = 0.0;  // rec_raw / N
  double contrast_raw = 0.0;
  double contrast_normalized = 0.0;  // raw / (K^2 - K)
  double sis = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  double wall_time_s = 0.0;
  std::string permutation;
};

struct Dataset {
  synth::LatentBatch z_train, z_val, z_test;
  RowMatrix x_train, x_val, x_test;  // standardized when a scaler is enabled
  ObservationScaler scaler;
};

inline Dataset make_dataset(const synth::GeneratorSpec& gen, const synth::LatentDistribution& dist,
                            const TrainConfig& cfg) {
  if (dist.dimension != gen.latent_dim()) throw DimensionError("dataset: latent distribution dimension mismatch");
  Dataset d;
  d.z_train = synth::sample_latents(cfg.train_size, dist, gen.slots(), cfg.seed, streams::kTrainLatents);
  d.z_val = synth::sample_latents(cfg.val_size, dist, gen.slots(), cfg.seed, streams::kValLatents);
  d.z_test = synth::sample_latents(cfg.test_size, dist, gen.slots(), cfg.seed, streams::kTestLatents);
  RowMatrix xt = synth::render(gen, d.z_train).values;
  if (cfg.standardize) d.scaler = ObservationScaler::fit(xt);
  d.x_train = d.scaler.apply(xt);
  d.x_val = d.scaler.apply(synth::render(gen, d.z_val).values);
  d.x_test = d.scaler.apply(synth::render(gen, d.z_test).values);
  return d;
}

/// Reconstruction, contrast and SIS of a model on a dataset. Readouts are fit
/// on a subsample of the training split, matched on validation and scored on
/// test.
inline EvalRecord evaluate_model(const AutoEncoder& model, std::span<const double> params, const Dataset& data,
                                 const metrics::ReadoutConfig& readout, std::size_t contrast_samples,
                                 std::uint64_t seed) {
  const AutoEncoderSpec& spec = model.spec();
  EvalRecord e;
  const RowMatrix zhat_test = model.encode(params, data.x_test);
  const RowMatrix xhat = model.decode(params, zhat_test);
  e.rec_raw = (xhat - data.x_test).rowwise().squaredNorm().mean();
  e.rec_normalized = e.rec_raw / static_cast<double>(spec.pixels);

  const Eigen::Index nc = contrast_samples == 0 ? zhat_test.rows()
                                                : std::min<Eigen::Index>(zhat_test.rows(), static_cast<Eigen::Index>(contrast_samples));
  double c = 0.0;
  for (Eigen::Index i = 0; i < nc; ++i) {
    const std::span<const double> z(zhat_test.row(i).data(), spec.latent_dim());
    c += analysis::compositional_contrast(model.decoder_jacobian(params, z), spec.slots);
  }
  e.contrast_raw = c / static_cast<double>(nc);
  e.contrast_normalized = spec.slots >= 2 ? e.contrast_raw / static_cast<double>(spec.slots * spec.slots - spec.slots) : 0.0;

  // fixed readout subsample of the training split
  std::vector<std::size_t> fit(static_cast<std::size_t>(data.x_train.rows()));
  std::iota(fit.begin(), fit.end(), std::size_t{0});
  if (readout.max_fit_samples > 0 && fit.size() > readout.max_fit_samples) {
    Rng rng = make_rng(seed, streams::kReadoutSubsample);
    std::shuffle(fit.begin(), fit.end(), rng);
    fit.resize(readout.max_fit_samples);
    std::sort(fit.begin(), fit.end());
  }
  RowMatrix fit_x(static_cast<Eigen::Index>(fit.size()), data.x_train.cols());
  RowMatrix fit_z(static_cast<Eigen::Index>(fit.size()), data.z_train.values.cols());
  for (std::size_t i = 0; i < fit.size(); ++i) {
    fit_x.row(static_cast<Eigen::Index>(i)) = data.x_train.row(static_cast<Eigen::Index>(fit[i]));
    fit_z.row(static_cast<Eigen::Index>(i)) = data.z_train.values.row(static_cast<Eigen::Index>(fit[i]));
  }
  if (!zhat_test.allFinite()) throw NonFiniteError("evaluate: non-finite encoder output");
  const metrics::SisReport r = metrics::sis(fit_z, model.encode(params, fit_x), data.z_val.values,
                                            model.encode(params, data.x_val), data.z_test.values, zhat_test,
                                            spec.slots, readout);
  e.sis = r.sis;
  e.s1 = r.s1;
  e.s2 = r.s2;
  e.permutation = r.permutation_string();
  return e;
}

struct TrainResult {
  AutoEncoder model;
  TrainState state;
  ObservationScaler scaler;
  std::vector<EvalRecord> history;
  bool diverged = false;
  std::string message;

  [[nodiscard]] Checkpoint checkpoint() const { return {model.spec(), state, scaler}; }
};

using EvalHook = std::function<void(const EvalRecord&)>;

/// Trains on a prepared dataset.
inline TrainResult train(const Dataset& data, std::size_t slots, std::size_t slot_dim, const TrainConfig& cfg,
                         const EvalHook& hook = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  AutoEncoderSpec spec{slots, slot_dim, static_cast<std::size_t>(data.x_train.cols()), cfg.hidden, cfg.leaky_slope};
  TrainResult res;
  res.model = AutoEncoder(spec);
  res.scaler = data.scaler;
  res.state = TrainState(std::vector<double>(res.model.parameter_count()));
  {
    Rng init = make_rng(cfg.seed, streams::kModelInit);
    res.model.initialize(res.state.params, init);
  }

  Objective objective(res.model, cfg.lambda, cfg.loss_variant);
  objective.set_report_contrast(false);
  objective.set_latent_scaled(cfg.latent_scaled_contrast);
  Rng shuffle = make_rng(cfg.seed, streams::kShuffle);
  const auto n = static_cast<std::size_t>(data.x_train.rows());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;
  RowMatrix batch;

  for (std::size_t epoch = 0; epoch < cfg.epochs && !res.diverged; ++epoch) {
    const double lr = lr_schedule(epoch, cfg.learning_rate, cfg.decay_epoch, cfg.decay_factor);
    std::shuffle(order.begin(), order.end(), shuffle);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, n - start);
      batch.resize(static_cast<Eigen::Index>(b), data.x_train.cols());
      for (std::size_t i = 0; i < b; ++i) {
        batch.row(static_cast<Eigen::Index>(i)) = data.x_train.row(static_cast<Eigen::Index>(order[start + i]));
      }
      try {
        const ObjectiveTerms t = objective.evaluate(res.state.params, batch, &grad);
        if (!std::isfinite(t.loss) || t.loss > cfg.divergence_threshold) {
          res.diverged = true;
          res.message = "loss " + std::to_string(t.loss) + " at epoch " + std::to_string(epoch + 1);
          break;
        }
        adam_step(res.state, grad, lr, cfg.adam);
      } catch (const NonFiniteError& ex) {
        res.diverged = true;
        res.message = std::string("non-finite values at epoch ") + std::to_string(epoch + 1) + ": " + ex.what();
        break;
      }
    }
    if (res.diverged) break;
    res.state.epoch = epoch + 1;
    if ((epoch + 1) % cfg.eval_period == 0) {
      EvalRecord e;
      try {
        e = evaluate_model(res.model, res.state.params, data, cfg.readout, cfg.contrast_eval_samples, cfg.seed);
      } catch (const NonFiniteError& ex) {
        res.diverged = true;
        res.message = std::string("non-finite evaluation at epoch ") + std::to_string(epoch + 1) + ": " + ex.what();
        break;
      }
      e.epoch = epoch + 1;
      e.lr = lr;
      e.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      res.history.push_back(e);
      if (hook) hook(e);
    }
  }
  return res;
}

/// Samples the splits from the generator and trains.
inline TrainResult train(const synth::GeneratorSpec& gen, const synth::LatentDistribution& dist,
                         const TrainConfig& cfg, const EvalHook& hook = {}) {
  cfg.validate();
  const Dataset data = make_dataset(gen, dist, cfg);
  return train(data, gen.slots(), gen.slot_dim(), cfg, hook);
}

}  // namespace slotid::train
