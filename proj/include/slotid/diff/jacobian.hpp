#pragma once

// Differentiable Jacobians.
//
// jacobian() evaluates a generic function once per input coordinate with
// Tangent scalars: each Tangent carries a value node and a directional
// derivative node, both recorded on the same Graph. The resulting Jacobian
// entries are ordinary nodes, so scalars built from them can be passed to
// Graph::backward again.

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "slotid/common/matrix.hpp"
#include "slotid/diff/graph.hpp"

namespace slotid::diff {

/// Value node plus an optional tangent node; an absent tangent is zero.
struct Tangent {
  Var value;
  std::optional<Var> tangent;

  Tangent() = default;
  explicit Tangent(Var v) : value(v) {}
  Tangent(Var v, std::optional<Var> t) : value(v), tangent(t) {}

  [[nodiscard]] Graph& graph() const { return *value.graph(); }
};

namespace detail {

inline std::optional<Var> add_tangents(const std::optional<Var>& a, const std::optional<Var>& b) {
  if (a && b) return *a + *b;
  return a ? a : b;
}

inline std::optional<Var> scaled(const std::optional<Var>& t, const Var& by) {
  if (!t) return std::nullopt;
  return *t * by;
}

inline std::optional<Var> scaled(const std::optional<Var>& t, double by) {
  if (!t) return std::nullopt;
  return *t * by;
}

}  // namespace detail

inline Tangent operator+(const Tangent& a, const Tangent& b) {
  return {a.value + b.value, detail::add_tangents(a.tangent, b.tangent)};
}

inline Tangent operator-(const Tangent& a, const Tangent& b) {
  std::optional<Var> nb = b.tangent ? std::optional<Var>(-*b.tangent) : std::nullopt;
  return {a.value - b.value, detail::add_tangents(a.tangent, nb)};
}

inline Tangent operator*(const Tangent& a, const Tangent& b) {
  return {a.value * b.value,
          detail::add_tangents(detail::scaled(a.tangent, b.value), detail::scaled(b.tangent, a.value))};
}

inline Tangent operator/(const Tangent& a, const Tangent& b) {
  const Var q = a.value / b.value;
  // (a' - q b') / b
  std::optional<Var> num = detail::add_tangents(
      a.tangent, b.tangent ? std::optional<Var>(-(*b.tangent * q)) : std::nullopt);
  return {q, num ? std::optional<Var>(*num / b.value) : std::nullopt};
}

inline Tangent operator-(const Tangent& a) {
  return {-a.value, a.tangent ? std::optional<Var>(-*a.tangent) : std::nullopt};
}

inline Tangent operator+(const Tangent& a, double c) { return {a.value + c, a.tangent}; }
inline Tangent operator+(double c, const Tangent& a) { return a + c; }
inline Tangent operator-(const Tangent& a, double c) { return {a.value - c, a.tangent}; }
inline Tangent operator-(double c, const Tangent& a) { return c + (-a); }
inline Tangent operator*(const Tangent& a, double c) { return {a.value * c, detail::scaled(a.tangent, c)}; }
inline Tangent operator*(double c, const Tangent& a) { return a * c; }
inline Tangent operator/(const Tangent& a, double c) { return a * (1.0 / c); }

inline Tangent exp(const Tangent& x) {
  const Var e = exp(x.value);
  return {e, detail::scaled(x.tangent, e)};
}

inline Tangent log(const Tangent& x) {
  return {log(x.value), x.tangent ? std::optional<Var>(*x.tangent / x.value) : std::nullopt};
}

inline Tangent sin(const Tangent& x) { return {sin(x.value), detail::scaled(x.tangent, cos(x.value))}; }
inline Tangent cos(const Tangent& x) { return {cos(x.value), detail::scaled(x.tangent, -sin(x.value))}; }

inline Tangent tanh(const Tangent& x) {
  const Var t = tanh(x.value);
  return {t, detail::scaled(x.tangent, 1.0 - t * t)};
}

inline Tangent sqrt(const Tangent& x) {
  const Var s = sqrt(x.value);
  return {s, x.tangent ? std::optional<Var>(*x.tangent / (2.0 * s)) : std::nullopt};
}

inline Tangent square(const Tangent& x) { return x * x; }

inline Tangent leaky_relu(const Tangent& x, double slope = kDefaultLeakySlope) {
  return {leaky_relu(x.value, slope), detail::scaled(x.tangent, leaky_relu_slope(x.value.value(), slope))};
}

/// N x D grid of differentiable Jacobian entries, row-major.
class JacobianMatrix {
 public:
  JacobianMatrix() = default;
  JacobianMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), entries_(rows * cols) {}

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] const Var& operator()(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }
  Var& operator()(std::size_t r, std::size_t c) { return entries_[r * cols_ + c]; }

  /// Current numerical values.
  [[nodiscard]] Matrix values() const {
    Matrix m(rows_, cols_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) m(r, c) = (*this)(r, c).value();
    return m;
  }

  /// Columns [k*slot_dim, (k+1)*slot_dim): derivatives with respect to slot k.
  [[nodiscard]] Matrix slot_block_values(std::size_t k, std::size_t slot_dim) const {
    if ((k + 1) * slot_dim > cols_) throw DimensionError("slot block out of range");
    return values().middleCols(static_cast<Eigen::Index>(k * slot_dim), static_cast<Eigen::Index>(slot_dim));
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Var> entries_;
};

/// Jacobian of `fn` at `input`, with entries recorded on the input's graph.
///
/// `fn` is called with a std::span<const Tangent> and must return a
/// std::vector<Tangent>. It is recorded once per input coordinate.
template <class Fn>
JacobianMatrix jacobian(Fn&& fn, std::span<const Var> input, std::vector<Var>* outputs = nullptr) {
  if (input.empty()) throw InvalidArgument("jacobian: empty input");
  Graph& g = *input.front().graph();
  for (const Var& v : input) {
    if (v.graph() != &g) throw InvalidArgument("jacobian: inputs live on different graphs");
  }
  const std::size_t d = input.size();
  JacobianMatrix jac;
  std::vector<Tangent> args(d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) args[j] = Tangent(input[j]);
    args[i].tangent = g.leaf(1.0);
    const std::vector<Tangent> out = fn(std::span<const Tangent>(args));
    if (i == 0) {
      jac = JacobianMatrix(out.size(), d);
      if (outputs != nullptr) {
        outputs->clear();
        for (const Tangent& t : out) outputs->push_back(t.value);
      }
    } else if (out.size() != jac.rows()) {
      throw DimensionError("jacobian: output size changed between evaluations");
    }
    for (std::size_t n = 0; n < out.size(); ++n) jac(n, i) = out[n].tangent ? *out[n].tangent : g.leaf(0.0);
  }
  return jac;
}

/// Central differences (fn(x + h e_i) - fn(x - h e_i)) / 2h.
inline Matrix finite_difference_jacobian(const std::function<std::vector<double>(std::span<const double>)>& fn,
                                         std::span<const double> x, double step) {
  if (!(step > 0.0)) throw InvalidArgument("finite_difference_jacobian: step must be positive");
  std::vector<double> p(x.begin(), x.end());
  Matrix jac;
  for (std::size_t i = 0; i < x.size(); ++i) {
    p[i] = x[i] + step;
    const std::vector<double> up = fn(p);
    p[i] = x[i] - step;
    const std::vector<double> down = fn(p);
    p[i] = x[i];
    if (up.size() != down.size()) throw DimensionError("finite_difference_jacobian: output size changed");
    if (i == 0) jac.resize(static_cast<Eigen::Index>(up.size()), static_cast<Eigen::Index>(x.size()));
    for (std::size_t n = 0; n < up.size(); ++n) {
      if (!std::isfinite(up[n]) || !std::isfinite(down[n])) {
        throw NonFiniteError("finite_difference_jacobian: non-finite output at perturbed point");
      }
      jac(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i)) = (up[n] - down[n]) / (2.0 * step);
    }
  }
  return jac;
}

/// Central-difference gradient of a scalar function.
inline std::vector<double> finite_difference_gradient(const std::function<double(std::span<const double>)>& fn,
                                                      std::span<const double> x, double step) {
  if (!(step > 0.0)) throw InvalidArgument("finite_difference_gradient: step must be positive");
  std::vector<double> p(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    p[i] = x[i] + step;
    const double up = fn(p);
    p[i] = x[i] - step;
    const double down = fn(p);
    p[i] = x[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace slotid::diff
