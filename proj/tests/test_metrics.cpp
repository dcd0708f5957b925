#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "slotid/metrics/hungarian.hpp"
#include "slotid/metrics/kernel_ridge.hpp"
#include "slotid/metrics/r2.hpp"
#include "slotid/metrics/sis.hpp"
#include "slotid/synth/latents.hpp"

using namespace slotid;
using namespace slotid::metrics;

namespace {

RowMatrix gaussian(std::size_t n, std::size_t d, std::uint64_t seed) {
  return synth::sample_latents(n, synth::LatentDistribution::independent(d), 1, seed).values;
}

double brute_force_best(const Matrix& s) {
  std::vector<int> perm(static_cast<std::size_t>(s.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = -std::numeric_limits<double>::infinity();
  do {
    double t = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) t += s(static_cast<Eigen::Index>(i), perm[i]);
    best = std::max(best, t);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

RowMatrix swap_slots(const RowMatrix& z, std::size_t m) {
  RowMatrix out(z.rows(), z.cols());
  const auto mm = static_cast<Eigen::Index>(m);
  out << z.rightCols(mm), z.leftCols(mm);
  return out;
}

}  // namespace

TEST(R2, Examples) {
  const RowMatrix t{{1.0}, {2.0}, {3.0}};
  EXPECT_DOUBLE_EQ(r2_score(t, t), 1.0);
  EXPECT_DOUBLE_EQ(r2_score(t, RowMatrix::Constant(3, 1, 2.0)), 0.0);
  EXPECT_DOUBLE_EQ(r2_score(t, RowMatrix{{1.0}, {2.0}, {4.0}}), 0.5);
  // negative R^2 is clamped
  EXPECT_DOUBLE_EQ(r2_score(t, RowMatrix{{3.0}, {2.0}, {1.0}}), 0.0);
  EXPECT_THROW(r2_score(RowMatrix::Ones(3, 1), t), DegenerateTargetError);
  EXPECT_THROW(r2_score(t, RowMatrix::Ones(2, 1)), DimensionError);
}

TEST(Readout, SmoothInvertibleMap) {
  const RowMatrix x = gaussian(3000, 1, 1);
  const RowMatrix y = x.array().tanh() + 0.3 * x.array();
  const ReadoutModel m = fit_readout(x.topRows(2000), y.topRows(2000));
  EXPECT_GT(r2_score(y.bottomRows(1000), m.predict(x.bottomRows(1000))), 0.99);
  EXPECT_GT(m.bandwidth(), 0.0);
  EXPECT_EQ(m.sample_count(), 2000u);
}

TEST(Readout, ZeroTargets) {
  const RowMatrix x = gaussian(200, 2, 2);
  const ReadoutModel m = fit_readout(x, RowMatrix::Zero(200, 1));
  EXPECT_LT(m.predict(x).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(r2_score(RowMatrix::Zero(200, 1), m.predict(x)), DegenerateTargetError);
}

TEST(Readout, DuplicateRowsStaySolvable) {
  RowMatrix x(6, 1);
  x << 1, 1, 1, 2, 2, 3;
  const RowMatrix y = 2.0 * x;
  const ReadoutModel m = fit_readout(x, y, 1.0, 1e-3);
  EXPECT_TRUE(m.dual_coefficients().allFinite());
  EXPECT_NEAR(m.predict(RowMatrix{{2.0}})(0, 0), 4.0, 0.1);
}

TEST(Readout, SmallRidgeApproachesInterpolation) {
  const RowMatrix x = gaussian(50, 2, 3);
  const RowMatrix y = x.col(0).array().sin().matrix();
  const ReadoutModel m = fit_readout(x, y, 0.0, 1e-10);
  EXPECT_LT((m.predict(x) - y).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Hungarian, Examples) {
  const Assignment id = hungarian(Matrix{{1, 0}, {0, 1}}, true);
  EXPECT_EQ(id.permutation, (std::vector<std::size_t>{0, 1}));
  EXPECT_DOUBLE_EQ(id.total, 2.0);
  const Assignment anti = hungarian(Matrix{{1, 2}, {2, 1}}, true);
  EXPECT_EQ(anti.permutation, (std::vector<std::size_t>{1, 0}));
  EXPECT_DOUBLE_EQ(anti.total, 4.0);
  const Assignment min = hungarian(Matrix{{1, 2}, {2, 1}}, false);
  EXPECT_DOUBLE_EQ(min.total, 2.0);
  EXPECT_THROW(hungarian(Matrix::Zero(2, 3), true), DimensionError);
  EXPECT_THROW(hungarian(Matrix{{1, std::nan("")}, {0, 1}}, true), NonFiniteError);
}

TEST(Hungarian, MatchesBruteForce) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index k = 1; k <= 6; ++k) {
    for (int t = 0; t < 100; ++t) {
      Matrix s(k, k);
      for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = u(rng);
      const Assignment a = hungarian(s, true);
      std::vector<std::size_t> sorted = a.permutation;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < sorted.size(); ++i) ASSERT_EQ(sorted[i], i);
      double along = 0.0;
      for (Eigen::Index i = 0; i < k; ++i) along += s(i, static_cast<Eigen::Index>(a.permutation[static_cast<std::size_t>(i)]));
      EXPECT_NEAR(a.total, along, 1e-12);
      EXPECT_NEAR(a.total, brute_force_best(s), 1e-12);
    }
  }
}

TEST(Sis, IdentityEncoder) {
  const RowMatrix z = gaussian(5000, 6, 7);
  const SisReport r = sis(z, z, 2, contiguous_split(5000));
  EXPECT_GE(r.sis, 0.99);
  EXPECT_EQ(r.permutation, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(r.slot_mcc, r.s1);
  EXPECT_GE(slot_mcc(z, z, 2, contiguous_split(5000)), 0.99);
  EXPECT_EQ(r.fit_count, 2000u);
  EXPECT_EQ(r.test_count, 1500u);
}

TEST(Sis, PermutedSlotsRecoverPermutation) {
  const RowMatrix z = gaussian(5000, 6, 8);
  const RowMatrix zp = swap_slots(z, 3);
  const SisReport r = sis(z, zp, 2, contiguous_split(5000));
  EXPECT_GE(r.sis, 0.99);
  EXPECT_EQ(r.permutation, (std::vector<std::size_t>{1, 0}));
  EXPECT_NE(r.to_record().find("permutation=1;0"), std::string::npos);
}

TEST(Sis, PermutationInvariance) {
  const RowMatrix z = gaussian(3000, 6, 9);
  RowMatrix z_hat = z;
  z_hat.col(0) += 0.5 * z.col(4);
  const SisReport a = sis(z, z_hat, 2, contiguous_split(3000), {}, 3);
  const SisReport b = sis(z, swap_slots(z_hat, 3), 2, contiguous_split(3000), {}, 3);
  EXPECT_EQ(a.sis, b.sis);
  EXPECT_EQ(a.s1, b.s1);
}

TEST(Sis, DenseRotationLeaksAcrossSlots) {
  const RowMatrix z = gaussian(5000, 6, 10);
  Matrix rot = Matrix::Identity(6, 6);
  // rotation by 45 degrees between coordinate i of slot 1 and coordinate i of slot 2
  const double c = std::sqrt(0.5);
  for (int i = 0; i < 3; ++i) {
    rot(i, i) = c;
    rot(i, i + 3) = -c;
    rot(i + 3, i) = c;
    rot(i + 3, i + 3) = c;
  }
  const RowMatrix z_hat = z * rot.transpose();
  const SisReport r = sis(z, z_hat, 2, contiguous_split(5000));
  EXPECT_GT(r.s2, 0.2);
  EXPECT_LT(r.sis, r.s1);
  EXPECT_LT(r.sis, 0.7);
}

TEST(Sis, PerSlotReparameterization) {
  const RowMatrix z = gaussian(5000, 6, 11);
  RowMatrix z_hat(5000, 6);
  z_hat.leftCols(3) = z.leftCols(3).array().tanh();
  // invertible linear mix within slot 2 only
  const Matrix a{{1.0, 0.5, 0.0}, {0.0, 1.0, 0.3}, {0.2, 0.0, 1.0}};
  z_hat.rightCols(3) = z.rightCols(3) * a.transpose();
  const SisReport base = sis(z, z, 2, contiguous_split(5000));
  const SisReport r = sis(z, z_hat, 2, contiguous_split(5000));
  EXPECT_LT(std::abs(r.sis - base.sis), 0.05);
}

TEST(Sis, NoiseEncoder) {
  const RowMatrix z = gaussian(5000, 6, 12);
  const RowMatrix noise = gaussian(5000, 6, 13);
  const SisReport r = sis(z, noise, 2, contiguous_split(5000));
  EXPECT_LT(r.slot_mcc, 0.1);
  EXPECT_GE(r.s1, 0.0);
  EXPECT_GE(r.s2, 0.0);
}

TEST(Sis, DegenerateInferredSlotIsFlagged) {
  const RowMatrix z = gaussian(1000, 4, 14);
  RowMatrix z_hat = z;
  z_hat.rightCols(2).setZero();
  const SisReport r = sis(z, z_hat, 2, contiguous_split(1000));
  EXPECT_TRUE(r.degenerate_inferred[1]);
  EXPECT_FALSE(r.degenerate_inferred[0]);
  EXPECT_TRUE(std::isfinite(r.sis));
  EXPECT_LE(r.sis, r.s1);
}

TEST(Sis, Errors) {
  const RowMatrix z = gaussian(100, 4, 15);
  EXPECT_THROW(sis(z, z.topRows(50), 2, contiguous_split(100)), DimensionError);
  EXPECT_THROW(sis(z, z, 3, contiguous_split(100)), DimensionError);
  EXPECT_THROW(contiguous_split(5), InvalidArgument);
}

TEST(Sis, FitSubsampleIsSeeded) {
  const RowMatrix z = gaussian(6000, 4, 16);
  RowMatrix z_hat = z;
  z_hat.col(0) += 0.3 * z.col(3);
  ReadoutConfig cfg;
  cfg.max_fit_samples = 500;
  const SisSplit split = contiguous_split(6000);
  EXPECT_EQ(sis(z, z_hat, 2, split, cfg, 1).sis, sis(z, z_hat, 2, split, cfg, 1).sis);
  EXPECT_EQ(sis(z, z_hat, 2, split, cfg, 1).fit_count, 500u);
}
