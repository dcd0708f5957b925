#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "slotid/analysis/contrast.hpp"
#include "slotid/analysis/index_sets.hpp"
#include "slotid/analysis/irreducibility.hpp"
#include "slotid/analysis/rank.hpp"
#include "slotid/diff/jacobian.hpp"
#include "slotid/nn/mlp.hpp"
#include "slotid/synth/generator.hpp"
#include "slotid/synth/latents.hpp"

using namespace slotid;
using namespace slotid::analysis;

namespace {

template <class S>
using Vec = std::vector<S>;

auto diag_map = [](auto z) {
  using S = std::remove_cv_t<typename decltype(z)::element_type>;
  return Vec<S>{2.0 * z[0], 3.0 * z[1]};
};
auto sum_map = [](auto z) {
  using S = std::remove_cv_t<typename decltype(z)::element_type>;
  return Vec<S>{z[0] + z[1]};
};
auto mixed_map = [](auto z) {
  using S = std::remove_cv_t<typename decltype(z)::element_type>;
  return Vec<S>{z[0] + z[1], z[0]};
};
auto product_map = [](auto z) {
  using S = std::remove_cv_t<typename decltype(z)::element_type>;
  return Vec<S>{z[0] * z[1]};
};

std::vector<double> row_of(const RowMatrix& m, Eigen::Index r) { return {m.row(r).begin(), m.row(r).end()}; }

Matrix random_invertible(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  for (;;) {
    Matrix a(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
    Eigen::JacobiSVD<Matrix> svd(a);
    const Vector s = svd.singularValues();
    if (s(s.size() - 1) / s(0) > 0.1) return a;
  }
}

std::vector<std::size_t> random_subset(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  const std::size_t size = std::uniform_int_distribution<std::size_t>(1, n)(rng);
  all.resize(size);
  return all;
}

}  // namespace

TEST(SlotBlocks, DiagonalLinear) {
  const std::vector<double> z{0.3, -1.0};
  const auto b = slot_jacobian_blocks(diag_map, z, 2);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0], (Matrix{{2.0}, {0.0}}));
  EXPECT_EQ(b[1], (Matrix{{0.0}, {3.0}}));
}

TEST(SlotBlocks, MixingSum) {
  const std::vector<double> z{1.0, 2.0};
  const auto b = slot_jacobian_blocks(sum_map, z, 2);
  EXPECT_EQ(b[0], Matrix::Constant(1, 1, 1.0));
  EXPECT_EQ(b[1], Matrix::Constant(1, 1, 1.0));
}

TEST(SlotBlocks, MlpMatchesFiniteDifferences) {
  const nn::Mlp net({4, 6, 5}, 0.2);
  std::vector<double> p(net.parameter_count());
  Rng rng(3);
  net.initialize_uniform(p, 1.0, rng);
  const std::vector<double> z{0.4, -0.7, 1.1, 0.2};
  const auto blocks = slot_jacobian_blocks([&](auto v) { return net.apply(p, v); }, z, 2);
  Matrix joined(5, 4);
  joined << blocks[0], blocks[1];
  const Matrix fd =
      diff::finite_difference_jacobian([&](std::span<const double> v) { return net.forward(p, v); }, z, 1e-6);
  EXPECT_LT((joined - fd).norm() / fd.norm(), 1e-5);
}

TEST(SlotBlocks, RejectsNonFinite) {
  const Matrix j{{1.0, std::nan("")}};
  EXPECT_THROW(compositional_contrast(j, 2), NonFiniteError);
}

TEST(IndexSetsTest, DisjointDiagonal) {
  const std::vector<Matrix> blocks{Matrix{{2.0}, {0.0}}, Matrix{{0.0}, {3.0}}};
  const IndexSets s = pixel_index_sets(blocks);
  EXPECT_EQ(s.sets[0], std::vector<std::size_t>{0});
  EXPECT_EQ(s.sets[1], std::vector<std::size_t>{1});
  EXPECT_TRUE(pairwise_disjoint(s));
  EXPECT_FALSE(s.degenerate);
}

TEST(IndexSetsTest, Overlap) {
  const std::vector<Matrix> blocks{Matrix{{1.0}, {1.0}}, Matrix{{1.0}, {1.0}}};
  const IndexSets s = pixel_index_sets(blocks);
  EXPECT_EQ(s.sets[0], (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(s.sets[1], (std::vector<std::size_t>{0, 1}));
  EXPECT_FALSE(pairwise_disjoint(s));
  EXPECT_EQ(overlapping_pixels(s), 2u);
}

TEST(IndexSetsTest, ZeroJacobianIsDegenerate) {
  const IndexSets s = pixel_index_sets(Matrix::Zero(3, 4), 2);
  EXPECT_TRUE(s.degenerate);
  EXPECT_TRUE(s.sets[0].empty());
  EXPECT_TRUE(s.sets[1].empty());
}

TEST(IndexSetsTest, RelativeThreshold) {
  const IndexSets s = pixel_index_sets(Matrix{{1.0, 1e-8}, {0.0, 5.0}}, 2);
  EXPECT_EQ(s.sets[0], std::vector<std::size_t>{0});
  EXPECT_EQ(s.sets[1], std::vector<std::size_t>{1});
  EXPECT_EQ(pixel_index_sets(Matrix{{1.0, 1e-8}, {0.0, 5.0}}, 2, 1e-10).sets[1], (std::vector<std::size_t>{0, 1}));
}

TEST(Rank, Examples) {
  EXPECT_EQ(numerical_rank(Matrix::Identity(3, 3), 1e-8), 3u);
  EXPECT_EQ(numerical_rank(Matrix{{1, 2}, {2, 4}}, 1e-8), 1u);
  EXPECT_EQ(numerical_rank(Matrix::Zero(3, 2), 1e-8), 0u);
  EXPECT_THROW(numerical_rank(Matrix(0, 0), 1e-8), InvalidArgument);
}

TEST(Rank, BoundedByShape) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int t = 0; t < 50; ++t) {
    const int r = 1 + static_cast<int>(rng() % 6), c = 1 + static_cast<int>(rng() % 6);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    const RankReport rep = rank_report(m, 1e-8);
    EXPECT_EQ(rep.rank, static_cast<std::size_t>(std::min(r, c)));
    EXPECT_EQ(rep.tolerance, 1e-8);
  }
}

TEST(Independence, Examples) {
  const std::vector<std::size_t> a{0}, b{1};
  EXPECT_EQ(check_independence(a, b, Matrix{{1, 0}, {0, 1}}, 1e-8).verdict, Independence::independent);
  const IndependenceResult dep = check_independence(a, b, Matrix{{1, 0}, {1, 0}}, 1e-8);
  EXPECT_EQ(dep.verdict, Independence::dependent);
  EXPECT_EQ(dep.rank_union, 1u);
  EXPECT_EQ(dep.rank_first + dep.rank_second, 2u);
  const std::vector<std::size_t> both{0, 1};
  EXPECT_THROW(check_independence(a, both, Matrix{{1, 0}, {0, 1}}, 1e-8), InvalidArgument);
  EXPECT_THROW(check_independence({}, b, Matrix{{1, 0}, {0, 1}}, 1e-8), InvalidArgument);
}

TEST(Independence, FirstPixelVersusRestIsDependent) {
  const synth::GeneratorSpec gen = synth::build_generator(2, 3, 20, 0);
  const auto z = synth::sample_latents(20, synth::LatentDistribution::independent(6), 2, 1);
  for (Eigen::Index r = 0; r < z.values.rows(); ++r) {
    const Matrix j = gen.jacobian(row_of(z.values, r));
    const IndexSets s = pixel_index_sets(j, 2);
    for (const auto& pixels : s.sets) {
      const std::vector<std::size_t> first{pixels[0]};
      const std::vector<std::size_t> rest(pixels.begin() + 1, pixels.end());
      EXPECT_EQ(check_independence(first, rest, j, kAnalyticRankTolerance).verdict, Independence::dependent);
    }
  }
}

TEST(Independence, AcrossSlotsOfCompositionalMap) {
  const synth::GeneratorSpec gen = synth::build_generator(3, 3, 20, 4);
  const auto z = synth::sample_latents(10, synth::LatentDistribution::independent(9), 3, 2);
  std::mt19937_64 rng(7);
  for (Eigen::Index r = 0; r < z.values.rows(); ++r) {
    const Matrix j = gen.jacobian(row_of(z.values, r));
    const IndexSets s = pixel_index_sets(j, 3);
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<std::size_t> own = s.sets[k];
      std::shuffle(own.begin(), own.end(), rng);
      own.resize(1 + rng() % own.size());
      std::vector<std::size_t> other;
      for (std::size_t n = 0; n < 60; ++n) {
        if (std::find(s.sets[k].begin(), s.sets[k].end(), n) == s.sets[k].end() && rng() % 2) other.push_back(n);
      }
      if (other.empty()) continue;
      EXPECT_EQ(check_independence(own, other, j, kAnalyticRankTolerance).verdict, Independence::independent);
      // sub-mechanisms of one slot never exceed rank M
      EXPECT_LE(subset_rank(j, own, kAnalyticRankTolerance).rank, 3u);
    }
  }
}

TEST(Irreducibility, DuplicatedPixelIsIrreducible) {
  auto f = [](auto z) {
    using S = std::remove_cv_t<typename decltype(z)::element_type>;
    return Vec<S>{z[0], z[0]};
  };
  const std::vector<double> z{0.5};
  const IrreducibilityReport r = check_irreducibility(f, z, 1, 0, 200, 1e-8, 0);
  EXPECT_TRUE(r.irreducible);
  EXPECT_EQ(r.tested, 1u);
  EXPECT_TRUE(r.exhaustive);
}

TEST(Irreducibility, IdentityOnTwoDimsIsReducible) {
  auto f = [](auto z) {
    using S = std::remove_cv_t<typename decltype(z)::element_type>;
    return Vec<S>{z[0], z[1]};
  };
  const std::vector<double> z{0.5, -0.2};
  const IrreducibilityReport r = check_irreducibility(f, z, 1, 0, 200, 1e-8, 0);
  EXPECT_FALSE(r.irreducible);
  ASSERT_EQ(r.counterexamples.size(), 1u);
  EXPECT_EQ(r.counterexamples[0].first, std::vector<std::size_t>{0});
  EXPECT_EQ(r.counterexamples[0].second, std::vector<std::size_t>{1});
  EXPECT_NE(to_record(r).find("verdict=reducible"), std::string::npos);
}

TEST(Irreducibility, PaperGeneratorAcrossSampledSplits) {
  const synth::GeneratorSpec gen = synth::build_generator(2, 3, 20, 0);
  const auto z = synth::sample_latents(3, synth::LatentDistribution::independent(6), 2, 5);
  for (Eigen::Index r = 0; r < z.values.rows(); ++r) {
    const Matrix j = gen.jacobian(row_of(z.values, r));
    for (std::size_t k = 0; k < 2; ++k) {
      const IrreducibilityReport rep = check_irreducibility(j, 2, k, 200, kAnalyticRankTolerance, 11);
      EXPECT_TRUE(rep.irreducible) << to_record(rep);
      EXPECT_EQ(rep.tested, 200u);
      EXPECT_FALSE(rep.exhaustive);
    }
  }
}

TEST(Irreducibility, EmptySlotIsAnError) {
  EXPECT_THROW(check_irreducibility(Matrix{{1.0, 0.0}}, 2, 1, 10, 1e-8, 0), InvalidArgument);
}

TEST(Contrast, Examples) {
  EXPECT_EQ(compositional_contrast(diag_map, std::vector<double>{1.0, 1.0}, 2).value, 0.0);
  EXPECT_DOUBLE_EQ(compositional_contrast(mixed_map, std::vector<double>{0.1, 0.2}, 2).value, 1.0);
  EXPECT_DOUBLE_EQ(compositional_contrast(product_map, std::vector<double>{2.0, 3.0}, 2).value, 6.0);
}

TEST(Contrast, SlotNormalized) {
  EXPECT_DOUBLE_EQ(contrast_slot_normalized({6.0, ContrastVariant::raw}, 2).value, 3.0);
  EXPECT_DOUBLE_EQ(contrast_slot_normalized({0.0, ContrastVariant::raw}, 4).value, 0.0);
  EXPECT_DOUBLE_EQ(contrast_slot_normalized({20.0, ContrastVariant::raw}, 5).value, 1.0);
  EXPECT_THROW(contrast_slot_normalized({1.0, ContrastVariant::raw}, 1), InvalidArgument);
}

TEST(Contrast, GradientNormalized) {
  EXPECT_EQ(contrast_gradient_normalized(diag_map, std::vector<double>{1.0, 1.0}, 2).value, 0.0);
  for (double c : {0.5, 1.0, 2.0, 4.0}) {
    auto f = [c](auto z) {
      using S = std::remove_cv_t<typename decltype(z)::element_type>;
      return Vec<S>{c * z[0] + c * z[1]};
    };
    EXPECT_NEAR(contrast_gradient_normalized(f, std::vector<double>{0.3, 0.4}, 2).value, c, 1e-12);
  }
  // second pixel has zero gradient everywhere
  EXPECT_DOUBLE_EQ(contrast_gradient_normalized(Matrix{{1.0, 1.0}, {0.0, 0.0}}, 2), 1.0);
}

TEST(Contrast, DifferentiableMatchesPlain) {
  const nn::Mlp net({4, 5, 3}, 0.2);
  std::vector<double> p(net.parameter_count());
  Rng rng(9);
  net.initialize_uniform(p, 1.0, rng);
  const std::vector<double> z{0.1, 0.7, -0.4, 1.2};
  const Matrix j = net.jacobian(p, z);
  auto dec = [&](auto v) { return net.apply(p, v); };
  EXPECT_NEAR(compositional_contrast(dec, z, 2).value, compositional_contrast(j, 2), 1e-12);
  EXPECT_NEAR(contrast_gradient_normalized(dec, z, 2).value, contrast_gradient_normalized(j, 2), 1e-12);
}

TEST(Contrast, InvariantToPixelOrder) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  Matrix j(7, 6);
  for (Eigen::Index i = 0; i < j.size(); ++i) j.data()[i] = n(rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(7);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 7, rng);
  const Matrix jp = perm * j;
  for (auto v : {ContrastVariant::raw, ContrastVariant::slot_normalized, ContrastVariant::gradient_normalized}) {
    EXPECT_NEAR(contrast(j, 3, v), contrast(jp, 3, v), 1e-12);
  }
  EXPECT_NEAR(contrast(2.0 * j, 3, ContrastVariant::slot_normalized),
              4.0 * contrast(j, 3, ContrastVariant::slot_normalized), 1e-10);
}

TEST(Lemma, ZeroIffCompositional) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const synth::GeneratorSpec gen = synth::build_generator(3, 3, 20, seed);
    const auto z = synth::sample_latents(20, synth::LatentDistribution::independent(9), 3, seed);
    for (Eigen::Index r = 0; r < z.values.rows(); ++r) {
      const Matrix j = gen.jacobian(row_of(z.values, r));
      ASSERT_TRUE(pairwise_disjoint(pixel_index_sets(j, 3)));
      EXPECT_LE(compositional_contrast(j, 3), 1e-12);
    }
  }
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  for (int t = 0; t < 100; ++t) {
    Matrix j(5, 4);
    for (Eigen::Index i = 0; i < j.size(); ++i) j.data()[i] = n(rng);
    const Matrix norms = slot_gradient_norms(j, 2);
    if ((norms.array() > 1e-6).rowwise().all().any()) EXPECT_GT(compositional_contrast(j, 2), 0.0);
  }
}

TEST(Lemma, RankInvariantUnderInvertibleLatentMap) {
  std::mt19937_64 rng(8);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const synth::GeneratorSpec gen = synth::build_generator(2, 3, 20, seed);
    const Matrix a = random_invertible(6, rng);
    const Matrix a_inv = a.inverse();
    const auto z = synth::sample_latents(5, synth::LatentDistribution::independent(6), 2, seed);
    for (Eigen::Index r = 0; r < z.values.rows(); ++r) {
      const std::vector<double> zr = row_of(z.values, r);
      // f_hat = f o A^{-1} evaluated at z_hat = A z
      const Vector z_hat = a * Eigen::Map<const Vector>(zr.data(), 6);
      auto f_hat = [&](auto v) {
        using S = std::remove_cv_t<typename decltype(v)::element_type>;
        std::vector<S> back;
        for (int i = 0; i < 6; ++i) {
          S acc = a_inv(i, 0) * v[0];
          for (std::size_t k = 1; k < 6; ++k) acc = acc + a_inv(i, static_cast<Eigen::Index>(k)) * v[k];
          back.push_back(acc);
        }
        return gen(std::span<const S>(back));
      };
      diff::Graph g;
      const std::vector<double> zh(z_hat.data(), z_hat.data() + 6);
      const Matrix j_hat = recorded_jacobian(g, f_hat, zh).values();
      const Matrix j = gen.jacobian(zr);
      for (int t = 0; t < 30; ++t) {
        const auto rows = random_subset(40, rng);
        EXPECT_EQ(subset_rank(j, rows, 1e-6).rank, subset_rank(j_hat, rows, 1e-6).rank);
      }
    }
  }
}
