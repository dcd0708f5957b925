#pragma once

// Fully connected LeakyReLU network over a flat parameter vector.
//
// Parameter layout, per layer in order: weight matrix (out x in, row-major)
// followed by the bias vector. Every layer except the last is followed by a
// LeakyReLU. The network object holds only the architecture; parameters are
// passed in, so one flat vector can hold several networks back to back.

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "slotid/common/error.hpp"
#include "slotid/common/matrix.hpp"
#include "slotid/diff/graph.hpp"

namespace slotid::nn {

using diff::Graph;
using diff::NodeId;

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
  bool activated = false;
};

class Mlp {
 public:
  /// Recording of one forward pass: id of the first output node, plus the
  /// LeakyReLU derivative at every activated unit (empty for the last layer).
  struct Trace {
    NodeId output_first = diff::kNoNode;
    std::vector<std::vector<double>> slopes;
  };

  Mlp() = default;

  /// `widths` = {input, hidden..., output}; at least two entries.
  Mlp(std::vector<std::size_t> widths, double leaky_slope = diff::kDefaultLeakySlope)
      : widths_(std::move(widths)), slope_(leaky_slope) {
    if (widths_.size() < 2) throw InvalidArgument("Mlp: need at least input and output widths");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      if (widths_[l] == 0 || widths_[l + 1] == 0) throw InvalidArgument("Mlp: zero layer width");
      DenseLayer layer;
      layer.in = widths_[l];
      layer.out = widths_[l + 1];
      layer.weight_offset = off;
      off += layer.in * layer.out;
      layer.bias_offset = off;
      off += layer.out;
      layer.activated = l + 2 < widths_.size();
      layers_.push_back(layer);
    }
    param_count_ = off;
  }

  [[nodiscard]] const std::vector<std::size_t>& widths() const { return widths_; }
  [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }
  [[nodiscard]] std::size_t input_dim() const { return widths_.front(); }
  [[nodiscard]] std::size_t output_dim() const { return widths_.back(); }
  [[nodiscard]] std::size_t parameter_count() const { return param_count_; }
  [[nodiscard]] double leaky_slope() const { return slope_; }

  /// Weights and biases uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  template <class Engine>
  void initialize_fan_in(std::span<double> params, Engine& rng) const {
    check_params(params.size());
    for (const DenseLayer& l : layers_) {
      const double r = 1.0 / std::sqrt(static_cast<double>(l.in));
      std::uniform_real_distribution<double> u(-r, r);
      for (std::size_t i = 0; i < l.in * l.out + l.out; ++i) params[l.weight_offset + i] = u(rng);
    }
  }

  /// Every weight and bias uniform on [-range, range].
  template <class Engine>
  void initialize_uniform(std::span<double> params, double range, Engine& rng) const {
    check_params(params.size());
    std::uniform_real_distribution<double> u(-range, range);
    for (double& p : params) p = u(rng);
  }

  [[nodiscard]] std::vector<double> forward(std::span<const double> params, std::span<const double> x) const {
    check_params(params.size());
    check_input(x.size());
    std::vector<double> cur(x.begin(), x.end());
    std::vector<double> next;
    for (const DenseLayer& l : layers_) {
      next.assign(l.out, 0.0);
      for (std::size_t j = 0; j < l.out; ++j) {
        const double* w = params.data() + l.weight_offset + j * l.in;
        double s = params[l.bias_offset + j];
        for (std::size_t i = 0; i < l.in; ++i) s += w[i] * cur[i];
        next[j] = l.activated ? diff::leaky_relu(s, slope_) : s;
      }
      cur.swap(next);
    }
    return cur;
  }

  /// Row-wise forward pass over a batch.
  [[nodiscard]] RowMatrix forward_batch(std::span<const double> params, const RowMatrix& x) const {
    check_params(params.size());
    check_input(static_cast<std::size_t>(x.cols()));
    RowMatrix cur = x;
    for (const DenseLayer& l : layers_) {
      Eigen::Map<const RowMatrix> w(params.data() + l.weight_offset, static_cast<Eigen::Index>(l.out),
                                    static_cast<Eigen::Index>(l.in));
      Eigen::Map<const Eigen::RowVectorXd> b(params.data() + l.bias_offset, static_cast<Eigen::Index>(l.out));
      RowMatrix next = cur * w.transpose();
      next.rowwise() += b;
      if (l.activated) next = next.unaryExpr([s = slope_](double v) { return diff::leaky_relu(v, s); });
      cur = std::move(next);
    }
    return cur;
  }

  /// d output / d input at x (output_dim x input_dim).
  [[nodiscard]] Matrix jacobian(std::span<const double> params, std::span<const double> x) const {
    check_params(params.size());
    check_input(x.size());
    Vector cur = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
    Matrix jac = Matrix::Identity(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(x.size()));
    for (const DenseLayer& l : layers_) {
      Eigen::Map<const RowMatrix> w(params.data() + l.weight_offset, static_cast<Eigen::Index>(l.out),
                                    static_cast<Eigen::Index>(l.in));
      Eigen::Map<const Vector> b(params.data() + l.bias_offset, static_cast<Eigen::Index>(l.out));
      Vector pre = w * cur + b;
      jac = w * jac;
      if (l.activated) {
        for (Eigen::Index j = 0; j < pre.size(); ++j) {
          const double s = diff::leaky_relu_slope(pre(j), slope_);
          jac.row(j) *= s;
          pre(j) = diff::leaky_relu(pre(j), slope_);
        }
      }
      cur = std::move(pre);
    }
    return jac;
  }

  /// Forward pass over any scalar type supporting S*double, S+S, S+double
  /// and leaky_relu(S, slope); weights enter as constants.
  template <class S>
  [[nodiscard]] std::vector<S> apply(std::span<const double> params, std::span<const S> x) const {
    check_params(params.size());
    check_input(x.size());
    std::vector<S> cur(x.begin(), x.end());
    for (const DenseLayer& l : layers_) {
      std::vector<S> next;
      next.reserve(l.out);
      for (std::size_t j = 0; j < l.out; ++j) {
        const double* w = params.data() + l.weight_offset + j * l.in;
        S s = cur[0] * w[0];
        for (std::size_t i = 1; i < l.in; ++i) s = s + cur[i] * w[i];
        s = s + params[l.bias_offset + j];
        if (l.activated) {
          using diff::leaky_relu;
          s = leaky_relu(s, slope_);
        }
        next.push_back(s);
      }
      cur = std::move(next);
    }
    return cur;
  }

  /// Records the forward pass. Parameters are the contiguous nodes starting
  /// at `params_first`; the input is the contiguous range at `input_first`.
  Trace record(Graph& g, NodeId params_first, NodeId input_first) const {
    return record_impl(g, params_first, input_first, {});
  }

  /// Same as record() with a constant (non-node) input vector.
  Trace record_constant_input(Graph& g, NodeId params_first, std::span<const double> x) const {
    check_input(x.size());
    return record_impl(g, params_first, diff::kNoNode, x);
  }

  /// Records column i of d output / d input for a recorded pass. The entries
  /// are differentiable with respect to the parameters. Returns the first of
  /// output_dim() contiguous nodes.
  NodeId record_jacobian_column(Graph& g, NodeId params_first, const Trace& trace, std::size_t i) const {
    if (i >= input_dim()) throw DimensionError("record_jacobian_column: input index out of range");
    NodeId prev = diff::kNoNode;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const DenseLayer& l = layers_[li];
      NodeId first = diff::kNoNode;
      for (std::size_t j = 0; j < l.out; ++j) {
        const double s = l.activated ? trace.slopes[li][j] : 1.0;
        NodeId id;
        if (li == 0) {
          const NodeId w = params_first + static_cast<NodeId>(l.weight_offset + j * l.in + i);
          id = g.unary(diff::Op::scale, w, s * g.value(w), s);
        } else {
          id = g.dot(params_first + static_cast<NodeId>(l.weight_offset + j * l.in), prev,
                     static_cast<std::uint32_t>(l.in), diff::kNoNode, s);
        }
        if (j == 0) first = id;
      }
      prev = first;
    }
    return prev;
  }

 private:
  void check_params(std::size_t n) const {
    if (n != param_count_) {
      throw DimensionError("Mlp: expected " + std::to_string(param_count_) + " parameters, got " +
                           std::to_string(n));
    }
  }

  void check_input(std::size_t n) const {
    if (n != input_dim()) {
      throw DimensionError("Mlp: expected input of size " + std::to_string(input_dim()) + ", got " +
                           std::to_string(n));
    }
  }

  Trace record_impl(Graph& g, NodeId params_first, NodeId input_first, std::span<const double> const_input) const {
    Trace trace;
    trace.slopes.resize(layers_.size());
    NodeId in = input_first;
    const std::uint32_t x_block = in == diff::kNoNode ? g.constants(const_input) : 0;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const DenseLayer& l = layers_[li];
      NodeId pre_first = diff::kNoNode;
      for (std::size_t j = 0; j < l.out; ++j) {
        const NodeId w = params_first + static_cast<NodeId>(l.weight_offset + j * l.in);
        const NodeId b = params_first + static_cast<NodeId>(l.bias_offset + j);
        const auto n_in = static_cast<std::uint32_t>(l.in);
        const NodeId id = (li == 0 && in == diff::kNoNode) ? g.affine(w, x_block, n_in, b)
                                                            : g.dot(w, in, n_in, b);
        if (j == 0) pre_first = id;
      }
      NodeId out_first = pre_first;
      if (l.activated) {
        auto& slopes = trace.slopes[li];
        slopes.resize(l.out);
        for (std::size_t j = 0; j < l.out; ++j) {
          const NodeId pre = pre_first + static_cast<NodeId>(j);
          const double v = g.value(pre);
          slopes[j] = diff::leaky_relu_slope(v, slope_);
          const NodeId id = g.unary(diff::Op::leaky_relu, pre, diff::leaky_relu(v, slope_), slopes[j]);
          if (j == 0) out_first = id;
        }
      }
      in = out_first;
    }
    trace.output_first = in;
    return trace;
  }

  std::vector<std::size_t> widths_;
  std::vector<DenseLayer> layers_;
  std::size_t param_count_ = 0;
  double slope_ = diff::kDefaultLeakySlope;
};

}  // namespace slotid::nn
