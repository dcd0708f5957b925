#pragma once

// Oracle pipeline: the decoder is frozen to the (standardized) ground-truth
// generator and only the encoder is fit, by supervised regression onto the
// true latents.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "slotid/analysis/contrast.hpp"
#include "slotid/common/error.hpp"
#include "slotid/common/matrix.hpp"
#include "slotid/common/rng.hpp"
#include "slotid/metrics/sis.hpp"
#include "slotid/nn/mlp.hpp"
#include "slotid/synth/generator.hpp"
#include "slotid/synth/latents.hpp"
#include "slotid/train/adam.hpp"
#include "slotid/train/autoencoder.hpp"
#include "slotid/train/checkpoint.hpp"

namespace slotid::train {

struct RegressionConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::size_t decay_epoch = 40;
  double decay_factor = 10.0;
  bool refit_last_layer = true;  // exact least squares on the last hidden features
  double refit_ridge = 1e-10;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

/// Mean squared error of `net` on (x, y), averaged over rows and outputs.
inline double regression_mse(const nn::Mlp& net, std::span<const double> p, const RowMatrix& x, const RowMatrix& y) {
  return (net.forward_batch(p, x) - y).array().square().mean();
}

namespace detail {

struct BatchCache {
  std::vector<RowMatrix> act;  // act[0] = input, act[l+1] = output of layer l
  std::vector<RowMatrix> pre;
};

inline void forward_cached(const nn::Mlp& net, std::span<const double> p, const RowMatrix& x, BatchCache& c) {
  const auto& layers = net.layers();
  c.act.resize(layers.size() + 1);
  c.pre.resize(layers.size());
  c.act[0] = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const nn::DenseLayer& d = layers[l];
    Eigen::Map<const RowMatrix> w(p.data() + d.weight_offset, static_cast<Eigen::Index>(d.out),
                                  static_cast<Eigen::Index>(d.in));
    Eigen::Map<const Eigen::RowVectorXd> b(p.data() + d.bias_offset, static_cast<Eigen::Index>(d.out));
    c.pre[l] = c.act[l] * w.transpose();
    c.pre[l].rowwise() += b;
    c.act[l + 1] = d.activated
                       ? RowMatrix(c.pre[l].unaryExpr([s = net.leaky_slope()](double v) { return diff::leaky_relu(v, s); }))
                       : c.pre[l];
  }
}

/// Gradient of the batch MSE with respect to all parameters.
inline void mse_gradient(const nn::Mlp& net, std::span<const double> p, const BatchCache& c, const RowMatrix& y,
                         std::span<double> grad) {
  const auto& layers = net.layers();
  RowMatrix delta = (c.act.back() - y) * (2.0 / static_cast<double>(y.size()));
  for (std::size_t l = layers.size(); l-- > 0;) {
    const nn::DenseLayer& d = layers[l];
    if (d.activated) {
      delta.array() *=
          c.pre[l].unaryExpr([s = net.leaky_slope()](double v) { return diff::leaky_relu_slope(v, s); }).array();
    }
    Eigen::Map<RowMatrix> gw(grad.data() + d.weight_offset, static_cast<Eigen::Index>(d.out),
                             static_cast<Eigen::Index>(d.in));
    Eigen::Map<Eigen::RowVectorXd> gb(grad.data() + d.bias_offset, static_cast<Eigen::Index>(d.out));
    gw = delta.transpose() * c.act[l];
    gb = delta.colwise().sum();
    if (l > 0) {
      Eigen::Map<const RowMatrix> w(p.data() + d.weight_offset, static_cast<Eigen::Index>(d.out),
                                    static_cast<Eigen::Index>(d.in));
      delta = delta * w;
    }
  }
}

}  // namespace detail

/// Fits `net` to map x onto y with minibatch Adam on the mean squared error,
/// optionally followed by a least-squares solve for the last layer.
inline std::vector<double> fit_regression(const nn::Mlp& net, const RowMatrix& x, const RowMatrix& y,
                                          const RegressionConfig& cfg) {
  if (x.rows() != y.rows() || x.rows() == 0) throw DimensionError("fit_regression: row counts differ or are zero");
  if (static_cast<std::size_t>(x.cols()) != net.input_dim() || static_cast<std::size_t>(y.cols()) != net.output_dim()) {
    throw DimensionError("fit_regression: data does not match network widths");
  }
  if (cfg.batch_size == 0) throw InvalidArgument("fit_regression: batch size must be positive");
  Rng init = make_rng(cfg.seed, streams::kModelInit);
  TrainState st(std::vector<double>(net.parameter_count()));
  net.initialize_fan_in(st.params, init);
  Rng shuffle = make_rng(cfg.seed, streams::kShuffle);
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(st.params.size());
  detail::BatchCache cache;
  RowMatrix bx, by;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle);
    const double lr = lr_schedule(epoch, cfg.learning_rate, cfg.decay_epoch, cfg.decay_factor);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t m = std::min(cfg.batch_size, n - start);
      bx.resize(static_cast<Eigen::Index>(m), x.cols());
      by.resize(static_cast<Eigen::Index>(m), y.cols());
      for (std::size_t i = 0; i < m; ++i) {
        bx.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(order[start + i]));
        by.row(static_cast<Eigen::Index>(i)) = y.row(static_cast<Eigen::Index>(order[start + i]));
      }
      detail::forward_cached(net, st.params, bx, cache);
      detail::mse_gradient(net, st.params, cache, by, grad);
      adam_step(st, grad, lr, cfg.adam);
    }
  }
  if (cfg.refit_last_layer) {
    detail::forward_cached(net, st.params, x, cache);
    const RowMatrix& h = cache.act[cache.act.size() - 2];
    RowMatrix a(h.rows(), h.cols() + 1);
    a << h, RowMatrix::Ones(h.rows(), 1);
    Matrix gram = a.transpose() * a;
    gram.diagonal().array() += cfg.refit_ridge * static_cast<double>(a.rows());
    const Matrix sol = gram.ldlt().solve(Matrix(a.transpose() * y));
    if (sol.allFinite()) {
      const nn::DenseLayer& d = net.layers().back();
      for (std::size_t o = 0; o < d.out; ++o) {
        for (std::size_t i = 0; i < d.in; ++i) {
          st.params[d.weight_offset + o * d.in + i] = sol(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o));
        }
        st.params[d.bias_offset + o] = sol(static_cast<Eigen::Index>(d.in), static_cast<Eigen::Index>(o));
      }
    }
  }
  return st.params;
}

struct OracleConfig {
  std::size_t train = 10000;
  std::size_t test = 5000;
  std::size_t hidden = kDefaultHidden;
  std::size_t contrast_probes = 200;
  RegressionConfig regression;
  metrics::ReadoutConfig readout;
  std::uint64_t seed = 0;
};

struct OracleReport {
  double latent_mse = 0.0;
  double rec_normalized = 0.0;
  double contrast_raw = 0.0;
  double contrast_normalized = 0.0;
  metrics::SisReport sis;
};

/// Encoder fit onto z, decoder = standardization after the generator. All
/// metrics are computed on a held-out test set.
inline OracleReport run_oracle(const synth::GeneratorSpec& gen, const synth::LatentDistribution& dist,
                               const OracleConfig& cfg) {
  const std::size_t k = gen.slots();
  const synth::LatentBatch z_train = synth::sample_latents(cfg.train, dist, k, cfg.seed, streams::kTrainLatents);
  const synth::LatentBatch z_test = synth::sample_latents(cfg.test, dist, k, cfg.seed, streams::kTestLatents);
  const RowMatrix raw_train = synth::render(gen, z_train).values;
  const ObservationScaler scaler = ObservationScaler::fit(raw_train);
  const RowMatrix x_train = scaler.apply(raw_train);
  const RowMatrix x_test = scaler.apply(synth::render(gen, z_test).values);

  const nn::Mlp encoder({gen.output_dim(), cfg.hidden, cfg.hidden, gen.latent_dim()}, diff::kDefaultLeakySlope);
  RegressionConfig rc = cfg.regression;
  rc.seed = cfg.seed;
  const std::vector<double> p = fit_regression(encoder, x_train, z_train.values, rc);

  OracleReport r;
  const RowMatrix z_hat = encoder.forward_batch(p, x_test);
  r.latent_mse = (z_hat - z_test.values).array().square().mean();
  const RowMatrix x_rec = scaler.apply(synth::render(gen, z_hat).values);
  r.rec_normalized = (x_rec - x_test).array().square().mean();

  const std::size_t probes = std::min<std::size_t>(cfg.contrast_probes, cfg.test);
  for (std::size_t i = 0; i < probes; ++i) {
    const std::span<const double> zi(z_hat.row(static_cast<Eigen::Index>(i)).data(), gen.latent_dim());
    Matrix jac = gen.jacobian(zi);
    for (Eigen::Index row = 0; row < jac.rows(); ++row) jac.row(row) /= scaler.scale(row);
    r.contrast_raw += analysis::compositional_contrast(jac, k);
  }
  if (probes > 0) r.contrast_raw /= static_cast<double>(probes);
  r.contrast_normalized = k >= 2 ? r.contrast_raw / analysis::detail::slot_pair_factor(k) : 0.0;
  r.sis = metrics::sis(z_test.values, z_hat, k, metrics::contiguous_split(cfg.test), cfg.readout, cfg.seed);
  return r;
}

}  // namespace slotid::train
