#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"

using namespace pscn;
using pscn::testing::random_tensor;

namespace {

std::vector<Conv2dLayer> make_g(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
  return {Conv2dLayer::create(in, hidden, Activation::relu, rng),
          Conv2dLayer::create(hidden, out, Activation::none, rng)};
}

// Direct cell-by-cell evaluation of pool_j relu(g(concat(s_ij, p_ij))).
std::vector<double> nested_loop_reduce(const Tensor& s, const Tensor& p, const std::vector<Conv2dLayer>& g) {
  const std::size_t m = s.dim(0), n = s.dim(1), cs = s.dim(2), cp = p.dim(2);
  const std::size_t out = g.back().out_channels();
  std::vector<double> result(m * out, -INFINITY);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> v;
      for (std::size_t c = 0; c < cs; ++c) v.push_back(s[(i * n + j) * cs + c]);
      for (std::size_t c = 0; c < cp; ++c) v.push_back(p[(i * n + j) * cp + c]);
      for (const auto& layer : g) {
        const std::size_t in = layer.in_channels(), o = layer.out_channels();
        std::vector<double> next(o);
        for (std::size_t b = 0; b < o; ++b) {
          double acc = layer.bias[b];
          for (std::size_t a = 0; a < in; ++a) acc += v[a] * layer.kernel[a * o + b];
          next[b] = layer.activation == Activation::relu ? std::max(acc, 0.0) : acc;
        }
        v = std::move(next);
      }
      for (std::size_t b = 0; b < out; ++b) result[i * out + b] = std::max(result[i * out + b], std::max(v[b], 0.0));
    }
  }
  return result;
}

}  // namespace

TEST(PairwiseFusion, SingleCellExample) {
  const auto t = pairwise_fusion(Tensor({1, 2}, {1, 2}), Tensor({1, 2}, {3, 4}));
  EXPECT_EQ(t.grid.shape(), (Shape{1, 1, 4}));
  EXPECT_EQ(std::vector<double>(t.grid.data().begin(), t.grid.data().end()), (std::vector<double>{1, 2, 3, 4}));
}

TEST(PairwiseFusion, SelfFusionDiagonal) {
  std::mt19937_64 rng(41);
  const Tensor x = random_tensor({4, 3}, rng, false);
  const auto t = pairwise_fusion(x, x);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(t.grid[(i * 4 + i) * 6 + c], x[i * 3 + c]);
      EXPECT_EQ(t.grid[(i * 4 + i) * 6 + 3 + c], x[i * 3 + c]);
    }
}

TEST(PairwiseFusion, EveryCellIsDirectConcatenation) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng() % 5, n = 1 + rng() % 5, c = 1 + rng() % 4;
    const Tensor x = random_tensor({m, c}, rng, false);
    const Tensor y = random_tensor({n, c}, rng, false);
    const auto t = pairwise_fusion(x, y);
    ASSERT_EQ(t.grid.shape(), (Shape{m, n, 2 * c}));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < c; ++k) {
          ASSERT_EQ(t.grid[(i * n + j) * 2 * c + k], x[i * c + k]);
          ASSERT_EQ(t.grid[(i * n + j) * 2 * c + c + k], y[j * c + k]);
        }
  }
}

TEST(PairwiseFusion, ChannelMismatchIsDimensionError) {
  EXPECT_THROW(pairwise_fusion(Tensor::zeros({2, 3}), Tensor::zeros({2, 4})), DimensionError);
}

TEST(PairwiseFusion, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(43);
  Tensor x = random_tensor({3, 2}, rng);
  Tensor y = random_tensor({2, 2}, rng);
  const Tensor w = random_tensor({3, 2, 4}, rng, false);
  EXPECT_LT(pscn::testing::finite_difference_error(
                [&] { return pscn::testing::weighted_sum(pairwise_fusion(x, y).grid, w); }, {x, y}),
            1e-4);
}

TEST(Correlate, PaperScaleShapes) {
  std::mt19937_64 rng(44);
  const EmbeddedCloud e{random_tensor({256, 3}, rng, false), random_tensor({256, 192}, rng, false), {}};
  const SkeletonCloud s{random_tensor({64, 3}, rng, false), random_tensor({64, 192}, rng, false), {}};
  const Correlation c = correlate(e, s);
  EXPECT_EQ(c.structure.grid.shape(), (Shape{256, 64, 384}));
  EXPECT_EQ(c.position.grid.shape(), (Shape{256, 64, 6}));
  EXPECT_EQ(correlation_elements(256, 64, 192), 256u * 64 * 384 + 256u * 64 * 6);
}

TEST(Correlate, SkeletonOfOneGivesWidthOne) {
  std::mt19937_64 rng(45);
  const EmbeddedCloud e{random_tensor({5, 3}, rng, false), random_tensor({5, 4}, rng, false), {}};
  const SkeletonCloud s{random_tensor({1, 3}, rng, false), random_tensor({1, 4}, rng, false), {}};
  const Correlation c = correlate(e, s);
  EXPECT_EQ(c.structure.grid.shape(), (Shape{5, 1, 8}));
  EXPECT_EQ(c.position.grid.shape(), (Shape{5, 1, 6}));
}

TEST(Correlate, CellsMatchPairwiseFusion) {
  std::mt19937_64 rng(46);
  const EmbeddedCloud e{random_tensor({6, 3}, rng, false), random_tensor({6, 4}, rng, false), {}};
  const SkeletonCloud s{random_tensor({3, 3}, rng, false), random_tensor({3, 4}, rng, false), {}};
  const Correlation c = correlate(e, s);
  const auto ps = pairwise_fusion(e.features, s.features);
  const auto pp = pairwise_fusion(e.positions, s.positions);
  for (std::size_t i = 0; i < ps.grid.numel(); ++i) EXPECT_EQ(c.structure.grid[i], ps.grid[i]);
  for (std::size_t i = 0; i < pp.grid.numel(); ++i) EXPECT_EQ(c.position.grid[i], pp.grid[i]);
}

TEST(ReduceCorrelation, ZeroWeightsGiveZeros) {
  std::mt19937_64 rng(47);
  const CorrelationTensor s{random_tensor({4, 3, 8}, rng, false), {}};
  const CorrelationTensor p{random_tensor({4, 3, 6}, rng, false), {}};
  const std::vector<Conv2dLayer> g{{Tensor::zeros({1, 1, 14, 4}), Tensor::zeros({4}), Activation::none}};
  const Tensor y = reduce_correlation(s, p, g);
  EXPECT_EQ(y.shape(), (Shape{4, 4}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(ReduceCorrelation, SingleSkeletonPointPoolIsIdentity) {
  std::mt19937_64 rng(48);
  const CorrelationTensor s{random_tensor({4, 1, 8}, rng, false), {}};
  const CorrelationTensor p{random_tensor({4, 1, 6}, rng, false), {}};
  const auto g = make_g(14, 5, 4, rng);
  const Tensor y = reduce_correlation(s, p, g);
  Tensor direct = concat({s.grid, p.grid}, 2);
  for (const auto& layer : g) direct = apply(direct, layer);
  direct = relu(direct);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], direct[i]);
}

TEST(ReduceCorrelation, MatchesNestedLoopOracle) {
  std::mt19937_64 rng(49);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 4, n = 3, c = 2 + rng() % 3;
    const CorrelationTensor s{random_tensor({m, n, 2 * c}, rng, false), {}};
    const CorrelationTensor p{random_tensor({m, n, 6}, rng, false), {}};
    const auto g = make_g(2 * c + 6, 5, c, rng);
    const Tensor y = reduce_correlation(s, p, g);
    const auto oracle = nested_loop_reduce(s.grid, p.grid, g);
    ASSERT_EQ(y.numel(), oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_NEAR(y[i], oracle[i], 1e-12);
  }
}

TEST(ReduceCorrelation, InvariantToSkeletonPermutation) {
  std::mt19937_64 rng(50);
  const EmbeddedCloud e{random_tensor({5, 3}, rng, false), random_tensor({5, 4}, rng, false), {}};
  const SkeletonCloud s{random_tensor({6, 3}, rng, false), random_tensor({6, 4}, rng, false), {}};
  const auto perm = pscn::testing::random_permutation(6, rng);
  const SkeletonCloud sp{gather_rows(s.positions, perm), gather_rows(s.features, perm), {}};
  const auto g = make_g(14, 6, 4, rng);
  const Correlation a = correlate(e, s), b = correlate(e, sp);
  const Tensor ya = reduce_correlation(a.structure, a.position, g);
  const Tensor yb = reduce_correlation(b.structure, b.position, g);
  for (std::size_t i = 0; i < ya.numel(); ++i) EXPECT_EQ(ya[i], yb[i]);
}

TEST(ReduceCorrelation, RowDependsOnlyOnItsOwnRegion) {
  std::mt19937_64 rng(51);
  EmbeddedCloud e{random_tensor({5, 3}, rng, false), random_tensor({5, 4}, rng, false), {}};
  const SkeletonCloud s{random_tensor({3, 3}, rng, false), random_tensor({3, 4}, rng, false), {}};
  const auto g = make_g(14, 6, 4, rng);
  const Correlation a = correlate(e, s);
  const Tensor before = reduce_correlation(a.structure, a.position, g);
  for (std::size_t k = 0; k < 4; ++k) e.features.mutable_data()[2 * 4 + k] += 0.5;
  const Correlation b = correlate(e, s);
  const Tensor after = reduce_correlation(b.structure, b.position, g);
  for (std::size_t i = 0; i < 5; ++i) {
    if (i == 2) continue;
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(before[i * 4 + k], after[i * 4 + k]);
  }
}

TEST(ReduceCorrelation, MismatchedGridsAreDimensionErrors) {
  std::mt19937_64 rng(52);
  const auto g = make_g(14, 4, 4, rng);
  const CorrelationTensor s{Tensor::zeros({4, 3, 8}), {}};
  const CorrelationTensor p{Tensor::zeros({4, 2, 6}), {}};
  EXPECT_THROW(reduce_correlation(s, p, g), DimensionError);
  const CorrelationTensor p2{Tensor::zeros({4, 3, 5}), {}};
  EXPECT_THROW(reduce_correlation(s, p2, g), DimensionError);
}

TEST(ReduceCorrelation, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(53);
  CorrelationTensor s{random_tensor({3, 2, 4}, rng), {}};
  const CorrelationTensor p{random_tensor({3, 2, 6}, rng, false), {}};
  auto g = make_g(10, 4, 3, rng);
  const Tensor w = random_tensor({3, 3}, rng, false);
  std::vector<Tensor> inputs{s.grid};
  for (auto& l : g) {
    inputs.push_back(l.kernel);
    inputs.push_back(l.bias);
  }
  EXPECT_LT(pscn::testing::finite_difference_error(
                [&] { return pscn::testing::weighted_sum(reduce_correlation(s, p, g), w); }, inputs),
            1e-4);
}

TEST(SkipFuse, Examples) {
  std::mt19937_64 rng(54);
  const EmbeddedCloud e{random_tensor({4, 3}, rng, false), random_tensor({4, 5}, rng, false), {}};
  const Tensor zero = Tensor::zeros({4, 5});
  const FusedFeature f0 = skip_fuse(e, zero);
  ASSERT_EQ(f0.values.shape(), (Shape{4, 8}));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(f0.values[i * 8 + c], e.features[i * 5 + c]);
    for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(f0.values[i * 8 + 5 + a], e.positions[i * 3 + a]);
  }
  const EmbeddedCloud ez{e.positions, Tensor::zeros({4, 5}), {}};
  const FusedFeature fz = skip_fuse(ez, zero);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(fz.values[i * 8 + c], 0.0);
  const Tensor x_cs = random_tensor({4, 5}, rng, false);
  const FusedFeature f = skip_fuse(e, x_cs);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(f.values[i * 8 + c], e.features[i * 5 + c] + x_cs[i * 5 + c]);
    for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(f.values[i * 8 + 5 + a], e.positions[i * 3 + a]);
  }
}

TEST(SkipFuse, ShapeMismatchIsDimensionError) {
  const EmbeddedCloud e{Tensor::zeros({4, 3}), Tensor::zeros({4, 5}), {}};
  EXPECT_THROW(skip_fuse(e, Tensor::zeros({4, 6})), DimensionError);
  EXPECT_THROW(skip_fuse(e, Tensor::zeros({3, 5})), DimensionError);
}
