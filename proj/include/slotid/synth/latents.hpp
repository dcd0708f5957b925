#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "slotid/common/error.hpp"
#include "slotid/common/matrix.hpp"
#include "slotid/common/rng.hpp"

namespace slotid::synth {

/// Wishart(I, dof) sample of size dim x dim via the Bartlett decomposition:
/// A is lower triangular with A_ii ~ chi(dof - i) and A_ij ~ N(0, 1) below
/// the diagonal; the sample is A A^T.
inline Matrix sample_wishart_covariance(std::size_t dim, std::size_t dof, std::uint64_t seed) {
  if (dim == 0) throw InvalidArgument("sample_wishart_covariance: dimension must be positive");
  if (dof < dim) {
    throw InvalidArgument("sample_wishart_covariance: dof (" + std::to_string(dof) + ") < dim (" +
                          std::to_string(dim) + ")");
  }
  Rng rng = make_rng(seed, streams::kWishart);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(dim);
  Matrix a = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::chi_squared_distribution<double> chi2(static_cast<double>(dof) - static_cast<double>(i));
    a(i, i) = std::sqrt(chi2(rng));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = normal(rng);
  }
  Matrix s(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      double v = 0.0;
      for (Eigen::Index k = 0; k <= j; ++k) v += a(i, k) * a(j, k);
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return s;
}

/// Symmetric and all eigenvalues >= -1e-10 * largest eigenvalue.
inline bool is_symmetric_psd(const Matrix& s) {
  if (s.rows() != s.cols() || s.rows() == 0) return false;
  if (!(s.array() == s.transpose().array()).all()) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
  const Vector ev = eig.eigenvalues();
  const double top = std::max(ev.maxCoeff(), 0.0);
  return ev.minCoeff() >= -1e-10 * top;
}

enum class LatentKind { independent, correlated };

inline const char* to_string(LatentKind k) { return k == LatentKind::independent ? "independent" : "correlated"; }

inline LatentKind latent_kind_from_string(const std::string& s) {
  if (s == "independent") return LatentKind::independent;
  if (s == "correlated" || s == "dependent") return LatentKind::correlated;
  throw InvalidArgument("unknown latent distribution kind '" + s + "'");
}

/// Zero-mean Gaussian over the concatenated latent vector.
struct LatentDistribution {
  LatentKind kind = LatentKind::independent;
  std::size_t dimension = 0;
  Matrix covariance;

  static LatentDistribution independent(std::size_t dim) {
    return {LatentKind::independent, dim, Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))};
  }

  /// Covariance ~ Wishart(I, dim).
  static LatentDistribution correlated(std::size_t dim, std::uint64_t seed) {
    return {LatentKind::correlated, dim, sample_wishart_covariance(dim, dim, seed)};
  }
};

/// Samples with the slot partition they were drawn for.
struct LatentBatch {
  RowMatrix values;
  std::size_t slots = 0;
  std::size_t slot_dim = 0;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
  /// Columns [k*M, (k+1)*M).
  [[nodiscard]] RowMatrix slot(std::size_t k) const {
    return values.middleCols(static_cast<Eigen::Index>(k * slot_dim), static_cast<Eigen::Index>(slot_dim));
  }
};

/// n rows from N(0, covariance), using the Cholesky factor of the covariance.
inline LatentBatch sample_latents(std::size_t n, const LatentDistribution& dist, std::size_t slots,
                                  std::uint64_t seed, std::uint64_t stream = streams::kTrainLatents) {
  if (n == 0) throw InvalidArgument("sample_latents: need at least one sample");
  if (slots == 0 || dist.dimension % slots != 0) throw DimensionError("sample_latents: dimension not divisible by slots");
  if (dist.covariance.rows() != static_cast<Eigen::Index>(dist.dimension) ||
      dist.covariance.cols() != static_cast<Eigen::Index>(dist.dimension)) {
    throw DimensionError("sample_latents: covariance shape does not match dimension");
  }
  Eigen::LLT<Matrix> llt(dist.covariance);
  if (llt.info() != Eigen::Success) throw NumericalError("sample_latents: Cholesky failed; covariance not positive definite");
  const Matrix l = llt.matrixL();
  Rng rng = make_rng(seed, stream);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(dist.dimension);
  RowMatrix g(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < d; ++j) g(i, j) = normal(rng);
  LatentBatch batch;
  batch.values = dist.kind == LatentKind::independent ? g : RowMatrix(g * l.transpose());
  batch.slots = slots;
  batch.slot_dim = dist.dimension / slots;
  batch.seed = seed;
  return batch;
}

}  // namespace slotid::synth
