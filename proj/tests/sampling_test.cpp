#include <gtest/gtest.h>

#include <random>
#include <set>

#include "test_util.hpp"

using namespace pscn;
using pscn::testing::lattice_cloud;
using pscn::testing::permuted;
using pscn::testing::random_cloud;
using pscn::testing::random_permutation;

namespace {

// Quadratic-per-step FPS: recomputes every min-distance from scratch.
std::vector<std::size_t> brute_force_fps(const PointCloud& c, std::size_t k) {
  const PointCloud unit = normalize_unit_cube(c);
  std::vector<std::uint64_t> code(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const GridCoord g = quantize(unit.positions[i], kDefaultMortonDepth);
    std::uint64_t v = 0;
    for (int t = kDefaultMortonDepth - 1; t >= 0; --t)
      for (int a = 0; a < 3; ++a) v = (v << 1) | ((g[a] >> t) & 1u);
    code[i] = v;
  }
  auto key = [&](std::size_t i) { return std::tie(code[i], c.positions[i], i); };
  std::vector<std::size_t> picked;
  std::size_t seed = 0;
  for (std::size_t i = 1; i < c.size(); ++i)
    if (key(i) < key(seed)) seed = i;
  picked.push_back(seed);
  while (picked.size() < k) {
    std::size_t best = c.size();
    double best_d = -1.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (std::find(picked.begin(), picked.end(), i) != picked.end()) continue;
      double d = INFINITY;
      for (std::size_t j : picked) d = std::min(d, squared_distance(c.positions[i], c.positions[j]));
      if (d > best_d || (d == best_d && key(i) < key(best))) {
        best = i;
        best_d = d;
      }
    }
    picked.push_back(best);
  }
  return picked;
}

std::vector<Vec3> positions_of(const PointCloud& c, const std::vector<std::size_t>& idx) {
  std::vector<Vec3> out;
  for (std::size_t i : idx) out.push_back(c.positions[i]);
  return out;
}

PointCloud line_cloud(std::initializer_list<double> xs) {
  PointCloud c;
  for (double x : xs) c.positions.push_back({x, 0, 0});
  return c;
}

}  // namespace

TEST(Fps, AllPointsWhenKEqualsN) {
  std::mt19937_64 rng(21);
  const PointCloud c = random_cloud(17, rng);
  auto idx = fps(c, 17);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < 17; ++i) EXPECT_EQ(idx[i], i);
}

TEST(Fps, CollinearExample) {
  const PointCloud c = line_cloud({10, 0, 1});
  EXPECT_EQ(fps(c, 2), (std::vector<std::size_t>{1, 0}));
}

TEST(Fps, MatchesBruteForceOracleOnRandomClouds) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 64;
    const std::size_t k = 1 + rng() % n;
    const PointCloud c = trial % 2 ? random_cloud(n, rng, -3, 3) : lattice_cloud(n, 3, rng);
    ASSERT_EQ(fps(c, k), brute_force_fps(c, k)) << "trial " << trial;
  }
}

TEST(Fps, DistinctAndPermutationInvariant) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const PointCloud c = trial % 2 ? random_cloud(60, rng) : lattice_cloud(60, 4, rng);
    const auto idx = fps(c, 20);
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 20u);
    const auto perm = random_permutation(60, rng);
    const PointCloud p = permuted(c, perm);
    EXPECT_EQ(positions_of(p, fps(p, 20)), positions_of(c, idx));
  }
}

TEST(Fps, InvalidCountIsInputError) {
  const PointCloud c = line_cloud({0, 1});
  EXPECT_THROW(fps(c, 3), InputError);
  EXPECT_THROW(fps(c, 0), InputError);
}

TEST(BallQuery, LargeRadiusGroupsEverything) {
  std::mt19937_64 rng(24);
  const PointCloud c = random_cloud(10, rng);
  const std::vector<std::size_t> centers{0, 5};
  for (const auto& g : ball_query(c, centers, 10.0, 12)) {
    std::set<std::size_t> members;
    for (std::size_t s = 0; s < 12; ++s)
      if (g.valid[s]) members.insert(g.members[s]);
    EXPECT_EQ(members.size(), 10u);
    EXPECT_EQ(g.members[0], g.center);
  }
}

TEST(BallQuery, TinyRadiusKeepsOnlyCenter) {
  const PointCloud c = line_cloud({0, 1, 2});
  const std::vector<std::size_t> centers{1};
  const auto groups = ball_query(c, centers, 0.5, 4);
  EXPECT_EQ(groups[0].members, (std::vector<std::size_t>{1, 1, 1, 1}));
  EXPECT_EQ(groups[0].valid, (std::vector<char>{1, 0, 0, 0}));
  for (const auto& r : groups[0].relative) EXPECT_EQ(r, (Vec3{0, 0, 0}));
}

TEST(BallQuery, DirectDistanceExample) {
  const PointCloud c = line_cloud({0, 0.3, 1.0});
  const std::vector<std::size_t> centers{0};
  const auto g = ball_query(c, centers, 0.5, 3)[0];
  EXPECT_EQ(g.members, (std::vector<std::size_t>{0, 1, 0}));
  EXPECT_EQ(g.valid, (std::vector<char>{1, 1, 0}));
  EXPECT_EQ(g.relative[1], (Vec3{0.3, 0, 0}));
}

TEST(BallQuery, RadiusIsStrict) {
  const PointCloud c = line_cloud({0, 0.5});
  const std::vector<std::size_t> centers{0};
  EXPECT_EQ(ball_query(c, centers, 0.5, 2)[0].valid, (std::vector<char>{1, 0}));
}

TEST(BallQuery, NearestFirstAndTruncatedToK) {
  const PointCloud c = line_cloud({0, 0.4, -0.1, 0.2, 0.3});
  const std::vector<std::size_t> centers{0};
  const auto g = ball_query(c, centers, 1.0, 3)[0];
  EXPECT_EQ(g.members, (std::vector<std::size_t>{0, 2, 3}));
}

TEST(BallQuery, MembersSatisfyRadiusPredicateAndMaskMarksReplicas) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    const PointCloud c = random_cloud(80, rng);
    const auto centers = fps(c, 10);
    for (const auto& g : ball_query(c, centers, 0.25, 16)) {
      EXPECT_EQ(g.members[0], g.center);
      for (std::size_t s = 0; s < 16; ++s) {
        if (g.valid[s]) {
          EXPECT_LT(squared_distance(c.positions[g.members[s]], c.positions[g.center]), 0.25 * 0.25);
        } else {
          EXPECT_EQ(g.members[s], g.center);
          EXPECT_EQ(g.relative[s], (Vec3{0, 0, 0}));
        }
      }
    }
  }
}

TEST(BallQuery, BadArgumentsAreInputErrors) {
  const PointCloud c = line_cloud({0, 1});
  const std::vector<std::size_t> none, one{0}, bad{2};
  EXPECT_THROW(ball_query(c, none, 1.0, 2), InputError);
  EXPECT_THROW(ball_query(c, one, 0.0, 2), InputError);
  EXPECT_THROW(ball_query(c, one, 1.0, 0), InputError);
  EXPECT_THROW(ball_query(c, bad, 1.0, 2), InputError);
}

TEST(SetAbstraction, ZeroWeightMlpExposesMaxRelativeCoordinates) {
  std::mt19937_64 rng(26);
  const PointCloud c = random_cloud(30, rng);
  const std::vector<DenseLayer> mlp{{Tensor::zeros({3, 4}), Tensor::zeros({4}), Activation::relu}};
  SetAbstractionParams p;
  p.centers = 5;
  p.radius = 0.4;
  p.group_size = 8;
  const EmbeddedCloud e = set_abstraction(c, p, mlp);
  ASSERT_EQ(e.features.shape(), (Shape{5, 7}));
  ASSERT_EQ(e.positions.shape(), (Shape{5, 3}));
  const auto groups = ball_query(c, e.centers, p.radius, p.group_size);
  for (std::size_t g = 0; g < 5; ++g) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(e.features[g * 7 + j], 0.0);
    for (int a = 0; a < 3; ++a) {
      double mx = -INFINITY;
      for (const auto& r : groups[g].relative) mx = std::max(mx, r[a]);
      EXPECT_EQ(e.features[g * 7 + 4 + a], mx);
      EXPECT_EQ(e.positions[g * 3 + a], c.positions[e.centers[g]][a]);
    }
  }
}

TEST(SetAbstraction, PermutingInputLeavesOutputUnchanged) {
  std::mt19937_64 rng(27);
  const auto mlp = make_mlp(3, std::vector<std::size_t>{8, 13}, rng);
  SetAbstractionParams p;
  p.centers = 12;
  p.radius = 0.3;
  p.group_size = 10;
  for (int trial = 0; trial < 5; ++trial) {
    const PointCloud c = random_cloud(64, rng);
    const EmbeddedCloud a = set_abstraction(c, p, mlp);
    const EmbeddedCloud b = set_abstraction(permuted(c, random_permutation(64, rng)), p, mlp);
    for (std::size_t i = 0; i < a.features.numel(); ++i) EXPECT_NEAR(a.features[i], b.features[i], 1e-12);
    for (std::size_t i = 0; i < a.positions.numel(); ++i) EXPECT_EQ(a.positions[i], b.positions[i]);
  }
}

TEST(SetAbstraction, SinglePointCloud) {
  std::mt19937_64 rng(28);
  PointCloud c;
  c.positions = {{0.2, 0.4, 0.6}};
  const auto mlp = make_mlp(3, std::vector<std::size_t>{5}, rng);
  SetAbstractionParams p;
  p.centers = 1;
  p.group_size = 4;
  const EmbeddedCloud e = set_abstraction(c, p, mlp);
  EXPECT_EQ(e.features.shape(), (Shape{1, 8}));
  EXPECT_EQ(e.centers, std::vector<std::size_t>{0});
  for (int a = 0; a < 3; ++a) EXPECT_EQ(e.features[5 + a], 0.0);
}

TEST(SetAbstraction, NormalsAddInputChannels) {
  std::mt19937_64 rng(29);
  PointCloud c = random_cloud(20, rng);
  c.normals = std::vector<Vec3>(20, Vec3{0, 0, 1});
  const auto mlp = make_mlp(6, std::vector<std::size_t>{5}, rng);
  SetAbstractionParams p;
  p.centers = 4;
  p.use_normals = true;
  EXPECT_EQ(set_abstraction(c, p, mlp).features.shape(), (Shape{4, 8}));
  c.normals.reset();
  EXPECT_THROW(set_abstraction(c, p, mlp), InputError);
}

TEST(SetAbstraction, GradientsReachMlpWeights) {
  std::mt19937_64 rng(30);
  const PointCloud c = random_cloud(25, rng);
  auto mlp = make_mlp(3, std::vector<std::size_t>{4, 6}, rng);
  SetAbstractionParams p;
  p.centers = 5;
  p.radius = 0.5;
  p.group_size = 6;
  std::vector<Tensor> params;
  for (auto& l : mlp) {
    params.push_back(l.weight);
    params.push_back(l.bias);
  }
  const Tensor w = pscn::testing::random_tensor({5, 9}, rng, false);
  EXPECT_LT(pscn::testing::finite_difference_error(
                [&] { return pscn::testing::weighted_sum(set_abstraction(c, p, mlp).features, w); }, params),
            1e-4);
}
