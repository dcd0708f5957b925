#pragma once

// Reverse-mode differentiation over an append-only recording of scalar nodes.
//
// Every node stores its value and enough information to recover the local
// partial derivative with respect to each parent. Besides the general
// "explicit parent list" node there are two range kinds that exist purely so
// that dense layers do not pay for an explicit edge list:
//
//   affine:  sum_i c_i * x[first + i] (+ x[bias]) (+ constant)
//   dot:     scale * sum_i x[a + i] * x[b + i] (+ x[bias])
//
// Both are differentiable in all their node operands. Because the partials of
// a dot node are node *values*, a dot whose operands are themselves
// derivatives gives a second-order recording for free.
//
// A Graph is confined to one thread at a time. It holds no thread-local state,
// so handing it to another thread between uses is fine.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slotid/common/error.hpp"

namespace slotid::diff {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xffffffffu;

/// Operation tag kept with each node (diagnostics and introspection only).
enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  div,
  neg,
  scale,
  exp,
  log,
  sin,
  cos,
  tanh,
  sqrt,
  square,
  leaky_relu,
  norm,
  sum,
  affine,
  dot,
  custom,
};

class Graph;

/// Handle to a node on a Graph. Cheap to copy; does not own anything.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, NodeId id) : graph_(graph), id_(id) {}

  [[nodiscard]] double value() const;
  [[nodiscard]] NodeId id() const { return id_; }
  [[nodiscard]] Graph* graph() const { return graph_; }
  [[nodiscard]] bool valid() const { return graph_ != nullptr && id_ != kNoNode; }

 private:
  Graph* graph_ = nullptr;
  NodeId id_ = kNoNode;
};

class Graph {
 public:
  Graph() : id_(next_id()) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  // Moving keeps node data but invalidates outstanding Var handles.
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  [[nodiscard]] std::uint64_t id() const { return id_; }
  /// Bumped whenever nodes are discarded.
  [[nodiscard]] std::uint64_t generation() const { return generation_; }
  [[nodiscard]] std::size_t size() const { return value_.size(); }
  [[nodiscard]] double value(NodeId n) const { return value_[n]; }
  [[nodiscard]] Op op(NodeId n) const { return rec_[n].op; }
  [[nodiscard]] const std::vector<double>& values() const { return value_; }

  void reserve(std::size_t nodes, std::size_t edges) {
    value_.reserve(nodes);
    rec_.reserve(nodes);
    edge_parent_.reserve(edges);
    edge_partial_.reserve(edges);
  }

  /// Discards every node with id >= n.
  void truncate(std::size_t n) {
    if (n >= size()) return;
    const std::uint32_t edges = rec_[n].off;
    value_.resize(n);
    rec_.resize(n);
    edge_parent_.resize(edges);
    edge_partial_.resize(edges);
    ++generation_;
  }

  void clear() { truncate(0); }

  Var leaf(double v) { return {this, push(Op::leaf, Kind::leaf, v, 0, kNoNode, kNoNode, kNoNode)}; }

  /// Appends consecutive leaves; returns the id of the first.
  NodeId leaves(std::span<const double> v) {
    const auto first = static_cast<NodeId>(size());
    for (double x : v) push(Op::leaf, Kind::leaf, x, 0, kNoNode, kNoNode, kNoNode);
    return first;
  }

  /// General node: `value` with local partials d(value)/d(operand_i).
  Var record(Op op, std::span<const Var> operands, double value, std::span<const double> partials) {
    if (operands.size() != partials.size()) {
      throw DimensionError("record: " + std::to_string(operands.size()) + " operands but " +
                           std::to_string(partials.size()) + " partials");
    }
    check_finite(value, "record: non-finite value");
    const auto off = static_cast<std::uint32_t>(edge_parent_.size());
    for (std::size_t i = 0; i < operands.size(); ++i) {
      if (operands[i].graph() != this) {
        edge_parent_.resize(off);
        edge_partial_.resize(off);
        throw InvalidArgument("record: operand belongs to a different graph");
      }
      if (!std::isfinite(partials[i])) {
        edge_parent_.resize(off);
        edge_partial_.resize(off);
        throw NonFiniteError("record: non-finite partial");
      }
      edge_parent_.push_back(operands[i].id());
      edge_partial_.push_back(partials[i]);
    }
    return {this, push_with_edges(op, Kind::general, value, static_cast<std::uint32_t>(operands.size()),
                                  kNoNode, kNoNode, kNoNode, off)};
  }

  /// General node over raw ids (no cross-graph check needed).
  NodeId record(Op op, std::span<const NodeId> parents, double value, std::span<const double> partials) {
    if (parents.size() != partials.size()) throw DimensionError("record: parent/partial count mismatch");
    check_finite(value, "record: non-finite value");
    const auto off = static_cast<std::uint32_t>(edge_parent_.size());
    for (std::size_t i = 0; i < parents.size(); ++i) {
      if (!std::isfinite(partials[i])) {
        edge_parent_.resize(off);
        edge_partial_.resize(off);
        throw NonFiniteError("record: non-finite partial");
      }
      edge_parent_.push_back(parents[i]);
      edge_partial_.push_back(partials[i]);
    }
    return push_with_edges(op, Kind::general, value, static_cast<std::uint32_t>(parents.size()), kNoNode,
                           kNoNode, kNoNode, off);
  }

  NodeId unary(Op op, NodeId x, double value, double partial) {
    const NodeId p[1] = {x};
    const double d[1] = {partial};
    return record(op, std::span<const NodeId>(p), value, std::span<const double>(d));
  }

  NodeId binary(Op op, NodeId a, NodeId b, double value, double da, double db) {
    const NodeId p[2] = {a, b};
    const double d[2] = {da, db};
    return record(op, std::span<const NodeId>(p), value, std::span<const double>(d));
  }

  /// Stores a block of constant coefficients for use by affine nodes;
  /// returns its handle.
  std::uint32_t constants(std::span<const double> coeffs) {
    for (double c : coeffs) check_finite(c, "affine: non-finite coefficient");
    const auto off = static_cast<std::uint32_t>(edge_partial_.size());
    edge_partial_.insert(edge_partial_.end(), coeffs.begin(), coeffs.end());
    edge_parent_.resize(edge_partial_.size(), kNoNode);
    return off;
  }

  /// sum_i c[i] * x[first + i] + x[bias] + constant, with c a stored block.
  NodeId affine(NodeId first, std::uint32_t coeffs, std::uint32_t n, NodeId bias = kNoNode,
                double constant = 0.0) {
    const double* c = edge_partial_.data() + coeffs;
    const double* x = value_.data() + first;
    double acc[4] = {constant, 0.0, 0.0, 0.0};
    std::uint32_t i = 0;
    for (; i + 4 <= n; i += 4) {
      acc[0] += c[i] * x[i];
      acc[1] += c[i + 1] * x[i + 1];
      acc[2] += c[i + 2] * x[i + 2];
      acc[3] += c[i + 3] * x[i + 3];
    }
    for (; i < n; ++i) acc[0] += c[i] * x[i];
    double v = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    if (bias != kNoNode) v += value_[bias];
    check_finite(v, "affine: non-finite value");
    return push_with_edges(Op::affine, Kind::affine, v, n, first, coeffs, bias,
                           static_cast<std::uint32_t>(edge_partial_.size()));
  }

  /// sum_i coeffs[i] * x[first + i] + x[bias] + constant.
  NodeId affine(NodeId first, std::span<const double> coeffs, NodeId bias = kNoNode, double constant = 0.0) {
    const std::uint32_t off = constants(coeffs);
    return affine(first, off, static_cast<std::uint32_t>(coeffs.size()), bias, constant);
  }

  /// scale * sum_i x[a + i] * x[b + i] + x[bias].
  NodeId dot(NodeId a, NodeId b, std::uint32_t n, NodeId bias = kNoNode, double scale = 1.0) {
    const double* va = value_.data() + a;
    const double* vb = value_.data() + b;
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    std::uint32_t i = 0;
    for (; i + 4 <= n; i += 4) {
      acc[0] += va[i] * vb[i];
      acc[1] += va[i + 1] * vb[i + 1];
      acc[2] += va[i + 2] * vb[i + 2];
      acc[3] += va[i + 3] * vb[i + 3];
    }
    for (; i < n; ++i) acc[0] += va[i] * vb[i];
    double v = scale * ((acc[0] + acc[1]) + (acc[2] + acc[3]));
    if (bias != kNoNode) v += scale * value_[bias];
    check_finite(v, "dot: non-finite value");
    check_finite(scale, "dot: non-finite scale");
    const auto off = static_cast<std::uint32_t>(edge_partial_.size());
    edge_partial_.push_back(scale);
    edge_parent_.push_back(kNoNode);
    return push_with_edges(Op::dot, Kind::dot, v, n, a, b, bias, off);
  }

  /// Parents of a node, in the order matching partials().
  [[nodiscard]] std::vector<NodeId> parents(NodeId n) const {
    const Rec& r = rec_[n];
    std::vector<NodeId> out;
    switch (r.kind) {
      case Kind::leaf:
        break;
      case Kind::general:
        out.assign(edge_parent_.begin() + r.off, edge_parent_.begin() + r.off + r.n);
        break;
      case Kind::affine:
        for (std::uint32_t i = 0; i < r.n; ++i) out.push_back(r.a + i);
        break;
      case Kind::dot:
        for (std::uint32_t i = 0; i < r.n; ++i) out.push_back(r.a + i);
        for (std::uint32_t i = 0; i < r.n; ++i) out.push_back(r.b + i);
        break;
    }
    if (r.bias != kNoNode) out.push_back(r.bias);
    return out;
  }

  /// Local partials of a node with respect to parents(n).
  [[nodiscard]] std::vector<double> partials(NodeId n) const {
    const Rec& r = rec_[n];
    std::vector<double> out;
    switch (r.kind) {
      case Kind::leaf:
        break;
      case Kind::general:
        out.assign(edge_partial_.begin() + r.off, edge_partial_.begin() + r.off + r.n);
        break;
      case Kind::affine:
        out.assign(edge_partial_.begin() + r.b, edge_partial_.begin() + r.b + r.n);
        break;
      case Kind::dot: {
        const double s = edge_partial_[r.off];
        for (std::uint32_t i = 0; i < r.n; ++i) out.push_back(s * value_[r.b + i]);
        for (std::uint32_t i = 0; i < r.n; ++i) out.push_back(s * value_[r.a + i]);
        break;
      }
    }
    if (r.bias != kNoNode) out.push_back(r.kind == Kind::dot ? edge_partial_[r.off] : 1.0);
    return out;
  }

  /// Reverse sweep from `output`: on return adj[i] = d output / d node i for
  /// every i <= output. Each node is visited once.
  void adjoints(NodeId output, std::vector<double>& adj) const {
    adj.assign(static_cast<std::size_t>(output) + 1, 0.0);
    adj[output] = 1.0;
    double* g = adj.data();
    const double* val = value_.data();
    for (std::int64_t i = output; i >= 0; --i) {
      const double gi = g[i];
      if (gi == 0.0) continue;
      const Rec& r = rec_[static_cast<std::size_t>(i)];
      switch (r.kind) {
        case Kind::leaf:
          break;
        case Kind::general: {
          const NodeId* p = edge_parent_.data() + r.off;
          const double* d = edge_partial_.data() + r.off;
          for (std::uint32_t e = 0; e < r.n; ++e) g[p[e]] += d[e] * gi;
          break;
        }
        case Kind::affine: {
          const double* __restrict d = edge_partial_.data() + r.b;
          double* __restrict ga = g + r.a;
          for (std::uint32_t e = 0; e < r.n; ++e) ga[e] += d[e] * gi;
          if (r.bias != kNoNode) g[r.bias] += gi;
          break;
        }
        case Kind::dot: {
          const double s = edge_partial_[r.off] * gi;
          const double* va = val + r.a;
          const double* vb = val + r.b;
          if (r.a == r.b) {
            double* ga = g + r.a;
            for (std::uint32_t e = 0; e < r.n; ++e) ga[e] += 2.0 * s * va[e];
          } else if (r.a + r.n <= r.b || r.b + r.n <= r.a) {
            axpy(g + r.a, vb, s, r.n);
            axpy(g + r.b, va, s, r.n);
          } else {
            double* ga = g + r.a;
            double* gb = g + r.b;
            for (std::uint32_t e = 0; e < r.n; ++e) {
              ga[e] += s * vb[e];
              gb[e] += s * va[e];
            }
          }
          if (r.bias != kNoNode) g[r.bias] += s;
          break;
        }
      }
    }
  }

  /// d output / d wrt_i for each requested node.
  [[nodiscard]] std::vector<double> backward(Var output, std::span<const Var> wrt) const {
    if (output.graph() != this) throw InvalidArgument("backward: output belongs to a different graph");
    for (const Var& w : wrt) {
      if (w.graph() != this) throw InvalidArgument("backward: wrt node belongs to a different graph");
    }
    std::vector<double> adj;
    adjoints(output.id(), adj);
    std::vector<double> out;
    out.reserve(wrt.size());
    for (const Var& w : wrt) out.push_back(w.id() <= output.id() ? adj[w.id()] : 0.0);
    return out;
  }

 private:
  enum class Kind : std::uint8_t { leaf, general, affine, dot };

  struct Rec {
    Op op;
    Kind kind;
    std::uint32_t n;
    NodeId a;
    NodeId b;
    NodeId bias;
    std::uint32_t off;  // first edge slot
  };

  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
  }

  static void axpy(double* __restrict y, const double* __restrict x, double a, std::uint32_t n) {
    for (std::uint32_t e = 0; e < n; ++e) y[e] += a * x[e];
  }

  static void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw NonFiniteError(what);
  }

  NodeId push(Op op, Kind kind, double v, std::uint32_t n, NodeId a, NodeId b, NodeId bias) {
    check_finite(v, "leaf: non-finite value");
    return push_with_edges(op, kind, v, n, a, b, bias, static_cast<std::uint32_t>(edge_parent_.size()));
  }

  NodeId push_with_edges(Op op, Kind kind, double v, std::uint32_t n, NodeId a, NodeId b, NodeId bias,
                         std::uint32_t off) {
    if (value_.size() >= kNoNode) throw Error("graph: node capacity exhausted");
    const auto id = static_cast<NodeId>(value_.size());
    value_.push_back(v);
    rec_.push_back(Rec{op, kind, n, a, b, bias, off});
    return id;
  }

  std::uint64_t id_;
  std::uint64_t generation_ = 0;
  std::vector<double> value_;
  std::vector<Rec> rec_;
  std::vector<NodeId> edge_parent_;
  std::vector<double> edge_partial_;
};

inline double Var::value() const { return graph_->value(id_); }

// ---------------------------------------------------------------------------
// Scalar operators on Var

namespace detail {

inline Graph& common_graph(const Var& a, const Var& b) {
  if (a.graph() == nullptr || a.graph() != b.graph()) {
    throw InvalidArgument("operands belong to different graphs");
  }
  return *a.graph();
}

inline Var unary(const Var& x, Op op, double value, double partial) {
  Graph& g = *x.graph();
  return {&g, g.unary(op, x.id(), value, partial)};
}

}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
  Graph& g = detail::common_graph(a, b);
  return {&g, g.binary(Op::add, a.id(), b.id(), a.value() + b.value(), 1.0, 1.0)};
}

inline Var operator-(const Var& a, const Var& b) {
  Graph& g = detail::common_graph(a, b);
  return {&g, g.binary(Op::sub, a.id(), b.id(), a.value() - b.value(), 1.0, -1.0)};
}

inline Var operator*(const Var& a, const Var& b) {
  Graph& g = detail::common_graph(a, b);
  return {&g, g.binary(Op::mul, a.id(), b.id(), a.value() * b.value(), b.value(), a.value())};
}

inline Var operator/(const Var& a, const Var& b) {
  Graph& g = detail::common_graph(a, b);
  const double bv = b.value();
  const double q = a.value() / bv;
  return {&g, g.binary(Op::div, a.id(), b.id(), q, 1.0 / bv, -q / bv)};
}

inline Var operator-(const Var& a) { return detail::unary(a, Op::neg, -a.value(), -1.0); }

inline Var operator+(const Var& a, double c) { return detail::unary(a, Op::add, a.value() + c, 1.0); }
inline Var operator+(double c, const Var& a) { return a + c; }
inline Var operator-(const Var& a, double c) { return detail::unary(a, Op::sub, a.value() - c, 1.0); }
inline Var operator-(double c, const Var& a) { return detail::unary(a, Op::sub, c - a.value(), -1.0); }
inline Var operator*(const Var& a, double c) { return detail::unary(a, Op::scale, a.value() * c, c); }
inline Var operator*(double c, const Var& a) { return a * c; }
inline Var operator/(const Var& a, double c) { return detail::unary(a, Op::scale, a.value() / c, 1.0 / c); }
inline Var operator/(double c, const Var& a) {
  const double v = a.value();
  return detail::unary(a, Op::div, c / v, -c / (v * v));
}

inline Var exp(const Var& x) {
  const double e = std::exp(x.value());
  return detail::unary(x, Op::exp, e, e);
}

inline Var log(const Var& x) { return detail::unary(x, Op::log, std::log(x.value()), 1.0 / x.value()); }
inline Var sin(const Var& x) { return detail::unary(x, Op::sin, std::sin(x.value()), std::cos(x.value())); }
inline Var cos(const Var& x) { return detail::unary(x, Op::cos, std::cos(x.value()), -std::sin(x.value())); }

inline Var tanh(const Var& x) {
  const double t = std::tanh(x.value());
  return detail::unary(x, Op::tanh, t, 1.0 - t * t);
}

inline Var sqrt(const Var& x) {
  const double s = std::sqrt(x.value());
  return detail::unary(x, Op::sqrt, s, 0.5 / s);
}

inline Var square(const Var& x) {
  const double v = x.value();
  return detail::unary(x, Op::square, v * v, 2.0 * v);
}

/// LeakyReLU slope used everywhere unless configured otherwise.
inline constexpr double kDefaultLeakySlope = 0.2;

/// Derivative of LeakyReLU; the kink at 0 takes the negative-side slope.
inline double leaky_relu_slope(double x, double slope) { return x > 0.0 ? 1.0 : slope; }
inline double leaky_relu(double x, double slope = kDefaultLeakySlope) { return x > 0.0 ? x : slope * x; }

inline Var leaky_relu(const Var& x, double slope = kDefaultLeakySlope) {
  const double v = x.value();
  return detail::unary(x, Op::leaky_relu, leaky_relu(v, slope), leaky_relu_slope(v, slope));
}

/// Euclidean norm. The gradient at the origin is taken to be zero.
inline Var norm(std::span<const Var> xs) {
  if (xs.empty()) throw InvalidArgument("norm: empty operand list");
  Graph& g = *xs.front().graph();
  double s = 0.0;
  for (const Var& x : xs) s += x.value() * x.value();
  const double n = std::sqrt(s);
  std::vector<double> d(xs.size(), 0.0);
  if (n > 0.0) {
    for (std::size_t i = 0; i < xs.size(); ++i) d[i] = xs[i].value() / n;
  }
  return g.record(Op::norm, xs, n, d);
}

inline Var sum(std::span<const Var> xs) {
  if (xs.empty()) throw InvalidArgument("sum: empty operand list");
  Graph& g = *xs.front().graph();
  double s = 0.0;
  for (const Var& x : xs) s += x.value();
  std::vector<double> d(xs.size(), 1.0);
  return g.record(Op::sum, xs, s, d);
}

}  // namespace slotid::diff
