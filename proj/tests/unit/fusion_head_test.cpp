#include <gtest/gtest.h>

#include <algorithm>

#include "../common/oracles.hpp"
#include "../common/test_util.hpp"
#include "dsnet/fusion_head.hpp"

using namespace dsnet;

namespace {

WeightVector vec(std::array<double, kPyramidLevels> v) { return WeightVector{v}; }

TEST(BranchReliability, Examples) {
  const BranchReliability even = branch_reliability(vec({.5, .5, .5, .5, .5}), vec({.5, .5, .5, .5, .5}));
  EXPECT_EQ(even.eps_s, 0.5);
  EXPECT_EQ(even.eps_t, 0.5);
  const BranchReliability r = branch_reliability(vec({.9, .7, .5, .5, .4}), vec({.1, .3, .5, .5, .6}));
  EXPECT_NEAR(r.eps_s, 0.6, 1e-12);
  EXPECT_NEAR(r.eps_t, 0.4, 1e-12);
  const double d = 1e-9;
  const BranchReliability dom = branch_reliability(vec({1 - d, 1 - d, 1 - d, 1 - d, 1 - d}), vec({d, d, d, d, d}));
  EXPECT_NEAR(dom.eps_s, 1.0, 1e-8);
}

TEST(BranchReliability, SumsToOneAndGrowsWithSpatialWeights) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    WeightVector s, t;
    for (std::size_t k = 0; k < kPyramidLevels; ++k) {
      const GatePair v = cross_normalize(rng.uniform(-5, 5), rng.uniform(-5, 5));
      s.values[k] = v.spatial;
      t.values[k] = v.temporal;
    }
    const BranchReliability r = branch_reliability(s, t);
    EXPECT_NEAR(r.eps_s + r.eps_t, 1.0, 1e-12);
    WeightVector s2 = s;
    s2.values[i % kPyramidLevels] += 0.01;
    EXPECT_GT(branch_reliability(s2, t).eps_s, r.eps_s);
  }
}

TEST(BranchReliability, GraphFormMatches) {
  Tensor pair(Shape{1, 2, kPyramidLevels, 1});
  const double s[] = {.9, .7, .5, .5, .4};
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    pair.at(0, 0, k, 0) = s[k];
    pair.at(0, 1, k, 0) = 1.0 - s[k];
  }
  const Tensor eps = branch_reliability(Var::constant(pair)).value();
  EXPECT_NEAR(eps[0], 0.6, 1e-12);
  EXPECT_NEAR(eps[1], 0.4, 1e-12);
}

TEST(FuseCoarseMaps, Examples) {
  Rng rng(2);
  const Shape sh{1, 1, 8, 8};
  const Tensor a = oracle::random_tensor(rng, sh, 0.0, 1.0);
  const Tensor b = oracle::random_tensor(rng, sh, 0.0, 1.0);
  EXPECT_LE(oracle::max_abs_diff(fuse_coarse_maps(a, a, {0.3, 0.7}), a), 1e-15);
  EXPECT_TRUE(bit_identical(fuse_coarse_maps(a, b, {1.0, 0.0}), a));
  const Tensor c = fuse_coarse_maps(a, b, {0.6, 0.4});
  EXPECT_LE(oracle::max_abs_diff(c, oracle::weighted_sum(a, 0.6, b, 0.4)), 1e-12);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_GE(c[i], std::min(a[i], b[i]));
    EXPECT_LE(c[i], std::max(a[i], b[i]));
  }
  EXPECT_THROW(fuse_coarse_maps(a, Tensor(Shape{1, 1, 8, 7}), {0.5, 0.5}), ShapeError);
}

TEST(FuseCoarseMaps, SumVariantIsClamped) {
  const Var s = fuse_coarse_maps_sum(Var::constant(Tensor(Shape{1, 1, 2, 2}, 0.75)),
                                     Var::constant(Tensor(Shape{1, 1, 2, 2}, 0.5)));
  EXPECT_TRUE(testutil::all_equal(s.value(), 1.0));
  const Var t = fuse_coarse_maps_sum(Var::constant(Tensor(Shape{1, 1, 2, 2}, 0.25)),
                                     Var::constant(Tensor(Shape{1, 1, 2, 2}, 0.5)));
  EXPECT_TRUE(testutil::all_equal(t.value(), 0.75));
}

TEST(SpatialAttention, Examples) {
  Rng rng(3);
  const Tensor f = oracle::random_tensor(rng, Shape{1, 4, 6, 6});
  EXPECT_TRUE(bit_identical(apply_spatial_attention(f, Tensor(Shape{1, 1, 6, 6}, 0.0)), f));
  EXPECT_LE(oracle::max_abs_diff(apply_spatial_attention(f, Tensor(Shape{1, 1, 3, 3}, 1.0)),
                                 oracle::weighted_sum(f, 2.0, f, 0.0)),
            1e-15);
  const Tensor s = oracle::random_tensor(rng, Shape{1, 1, 6, 6}, 0.0, 1.0);
  const Tensor y = apply_spatial_attention(f, s);
  double worst = 0.0;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        worst = std::max(worst, std::fabs(y.at(0, c, i, j) - f.at(0, c, i, j) * (1.0 + s.at(0, 0, i, j))));
  EXPECT_LE(worst, 1e-12);
  const Tensor g = apply_spatial_attention(Var::constant(f), Var::constant(s)).value();
  EXPECT_TRUE(bit_identical(g, y));
}

}  // namespace
