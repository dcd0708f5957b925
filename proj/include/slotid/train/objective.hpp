#pragma once

// Per-sample loss  |f(g(x)) - x|^2 + lambda * C(f, g(x)),  averaged over the
// batch, where C is the compositional contrast of the decoder f evaluated at
// the encoder output. The decoder Jacobian is recorded column by column so
// the contrast term is differentiated through the Jacobian itself.

#include <cmath>
#include <span>
#include <vector>

#include "slotid/analysis/contrast.hpp"
#include "slotid/common/error.hpp"
#include "slotid/common/matrix.hpp"
#include "slotid/diff/graph.hpp"
#include "slotid/train/autoencoder.hpp"

namespace slotid::train {

struct ObjectiveTerms {
  double loss = 0.0;
  double reconstruction = 0.0;  // batch mean of |x_hat - x|^2
  double contrast = 0.0;        // batch mean of the contrast variant in use
};

class Objective {
 public:
  Objective(const AutoEncoder& model, double lambda,
            analysis::ContrastVariant variant = analysis::ContrastVariant::raw)
      : model_(&model), lambda_(lambda), variant_(variant) {
    if (!(lambda >= 0.0)) throw InvalidArgument("objective: lambda must be non-negative");
  }

  /// When lambda is 0 the contrast is not part of the loss; it is still
  /// computed (without a graph) if this is set.
  void set_report_contrast(bool on) { report_contrast_ = on; }

  /// Evaluates the contrast term in batch-standardized latent coordinates:
  /// Jacobian column i is multiplied by the batch standard deviation of
  /// latent i. Needs batches of at least two samples; smaller batches fall
  /// back to unscaled columns.
  void set_latent_scaled(bool on) { latent_scaled_ = on; }

  [[nodiscard]] double lambda() const { return lambda_; }

  ObjectiveTerms evaluate(std::span<const double> params, const RowMatrix& batch,
                          std::vector<double>* gradient = nullptr) {
    using diff::NodeId;
    const AutoEncoder& ae = *model_;
    const AutoEncoderSpec& spec = ae.spec();
    if (params.size() != ae.parameter_count()) throw DimensionError("objective: parameter count mismatch");
    if (static_cast<std::size_t>(batch.cols()) != spec.pixels) throw DimensionError("objective: batch pixel dimension");
    if (batch.rows() == 0) throw InvalidArgument("objective: empty batch");
    if (!batch.allFinite()) throw NonFiniteError("objective: non-finite observations");

    const std::size_t n_pix = spec.pixels;
    const std::size_t d = spec.latent_dim();
    const bool record_contrast = lambda_ > 0.0;

    graph_.clear();
    const NodeId enc_first = graph_.leaves(params);
    const NodeId dec_first = enc_first + static_cast<NodeId>(ae.encoder().parameter_count());

    const auto rows = static_cast<std::size_t>(batch.rows());
    std::vector<nn::Mlp::Trace> enc(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      enc[r] = ae.encoder().record_constant_input(graph_, enc_first,
                                                  std::span<const double>(batch.row(static_cast<Eigen::Index>(r)).data(), n_pix));
    }
    std::vector<NodeId> scales;
    if (record_contrast && latent_scaled_ && rows >= 2) scales = record_latent_scales(enc, d);

    std::vector<NodeId> sample_loss;
    sample_loss.reserve(rows);
    std::vector<NodeId> parents(n_pix);
    std::vector<double> partials(n_pix);
    std::vector<NodeId> columns(d);
    ObjectiveTerms terms;

    for (std::size_t r = 0; r < rows; ++r) {
      const std::span<const double> x(batch.row(static_cast<Eigen::Index>(r)).data(), n_pix);
      const auto dec = ae.decoder().record(graph_, dec_first, enc[r].output_first);
      double rec = 0.0;
      for (std::size_t n = 0; n < n_pix; ++n) {
        parents[n] = dec.output_first + static_cast<NodeId>(n);
        const double e = graph_.value(parents[n]) - x[n];
        rec += e * e;
        partials[n] = 2.0 * e;
      }
      NodeId loss = graph_.record(diff::Op::sum, std::span<const NodeId>(parents), rec,
                                  std::span<const double>(partials));
      terms.reconstruction += rec;
      if (record_contrast) {
        for (std::size_t i = 0; i < d; ++i) columns[i] = ae.decoder().record_jacobian_column(graph_, dec_first, dec, i);
        const NodeId c = analysis::record_contrast(
            graph_, n_pix, spec.slots, spec.slot_dim,
            [&](std::size_t n, std::size_t i) { return columns[i] + static_cast<NodeId>(n); }, variant_,
            std::span<const NodeId>(scales));
        terms.contrast += graph_.value(c);
        loss = graph_.binary(diff::Op::add, loss, c, rec + lambda_ * graph_.value(c), 1.0, lambda_);
      } else if (report_contrast_) {
        std::vector<double> z(d);
        for (std::size_t i = 0; i < d; ++i) z[i] = graph_.value(enc[r].output_first + static_cast<NodeId>(i));
        terms.contrast += analysis::contrast(ae.decoder_jacobian(params, z), spec.slots, variant_);
      }
      sample_loss.push_back(loss);
    }

    const double inv = 1.0 / static_cast<double>(batch.rows());
    double total = 0.0;
    for (NodeId id : sample_loss) total += graph_.value(id);
    const std::vector<double> w(sample_loss.size(), inv);
    const NodeId out = graph_.record(diff::Op::sum, std::span<const NodeId>(sample_loss), total * inv,
                                     std::span<const double>(w));
    terms.loss = graph_.value(out);
    terms.reconstruction *= inv;
    terms.contrast *= inv;

    if (gradient != nullptr) {
      graph_.adjoints(out, adjoint_);
      gradient->assign(adjoint_.begin(), adjoint_.begin() + static_cast<std::ptrdiff_t>(params.size()));
    }
    return terms;
  }

 private:
  // One node per latent coordinate: the population standard deviation over
  // the batch, differentiable in every encoder output.
  std::vector<diff::NodeId> record_latent_scales(const std::vector<nn::Mlp::Trace>& enc, std::size_t d) {
    using diff::NodeId;
    const std::size_t b = enc.size();
    std::vector<NodeId> out(d);
    std::vector<NodeId> parents(b);
    std::vector<double> partials(b);
    for (std::size_t i = 0; i < d; ++i) {
      double mean = 0.0;
      for (std::size_t r = 0; r < b; ++r) {
        parents[r] = enc[r].output_first + static_cast<NodeId>(i);
        mean += graph_.value(parents[r]);
      }
      mean /= static_cast<double>(b);
      double var = 0.0;
      for (std::size_t r = 0; r < b; ++r) {
        const double c = graph_.value(parents[r]) - mean;
        var += c * c;
      }
      var /= static_cast<double>(b);
      const double sd = std::sqrt(var);
      for (std::size_t r = 0; r < b; ++r) {
        partials[r] = sd > 0.0 ? (graph_.value(parents[r]) - mean) / (static_cast<double>(b) * sd) : 0.0;
      }
      out[i] = graph_.record(diff::Op::custom, std::span<const NodeId>(parents), sd, std::span<const double>(partials));
    }
    return out;
  }

  const AutoEncoder* model_;
  double lambda_;
  analysis::ContrastVariant variant_;
  bool report_contrast_ = true;
  bool latent_scaled_ = false;
  diff::Graph graph_;
  std::vector<double> adjoint_;
};

}  // namespace slotid::train
