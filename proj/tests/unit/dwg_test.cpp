#include <gtest/gtest.h>

#include "../common/oracles.hpp"
#include "../common/test_util.hpp"
#include "dsnet/dwg.hpp"

using namespace dsnet;

namespace {

const std::array<int, kPyramidLevels> kChannels{3, 4, 5, 6, 6};

FeaturePyramid pyramid(std::uint64_t seed, double scale = 1.0, std::size_t n = 2) {
  Rng rng(seed);
  const std::size_t sizes[] = {8, 4, 2, 1, 1};
  FeaturePyramid p;
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    Tensor t = oracle::random_tensor(rng, Shape{n, static_cast<std::size_t>(kChannels[i]), sizes[i], sizes[i]});
    for (double& v : t.values()) v *= scale;
    p.levels[i] = Var::constant(t);
  }
  return p;
}

FeaturePyramid zero_pyramid() {
  FeaturePyramid p = pyramid(1);
  for (auto& l : p.levels) l = Var::constant(Tensor(l.shape()));
  return p;
}

class DwgKinds : public ::testing::TestWithParam<WeightGenKind> {};

TEST_P(DwgKinds, OutputIsFiveScalarsPerSample) {
  ParamStore store(1);
  WeightGenerator g(store, "dwg", GetParam(), kChannels);
  EXPECT_EQ(g.generate(pyramid(2)).shape(), (Shape{2, kPyramidLevels, 1, 1}));
}

TEST_P(DwgKinds, ZeroPyramidZeroParamsGivesZeroVector) {
  ParamStore store(1);
  WeightGenerator g(store, "dwg", GetParam(), kChannels);
  testutil::zero_params(store);
  EXPECT_TRUE(testutil::all_equal(g.generate(zero_pyramid()).value(), 0.0));
}

TEST_P(DwgKinds, DoublingInputDoublesOutputWithoutBias) {
  ParamStore store(3);
  WeightGenerator g(store, "dwg", GetParam(), kChannels);
  testutil::zero_biases(store);
  const Tensor a = g.generate(pyramid(4)).value();
  const Tensor b = g.generate(pyramid(4, 2.0)).value();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(b[i], 2.0 * a[i]);
}

TEST_P(DwgKinds, ZeroOutputLayerStartsAtZero) {
  ParamStore store(3);
  WeightGenerator g(store, "dwg", GetParam(), kChannels, true);
  EXPECT_TRUE(testutil::all_equal(g.generate(pyramid(5)).value(), 0.0));
}

INSTANTIATE_TEST_SUITE_P(All, DwgKinds,
                         ::testing::Values(WeightGenKind::proposed, WeightGenKind::separate,
                                           WeightGenKind::fully_connected));

FeaturePyramid perturb_level(const FeaturePyramid& p, std::size_t level) {
  FeaturePyramid q = p;
  Tensor t = p.levels[level].value();
  for (double& v : t.values()) v += 0.25;
  q.levels[level] = Var::constant(t);
  return q;
}

TEST(Dwg, SeparateComponentsAreIndependent) {
  ParamStore store(6);
  WeightGenerator g(store, "dwg", WeightGenKind::separate, kChannels);
  const FeaturePyramid p = pyramid(7);
  const Tensor base = g.generate(p).value();
  for (std::size_t level = 0; level < kPyramidLevels; ++level) {
    const Tensor moved = g.generate(perturb_level(p, level)).value();
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t i = 0; i < kPyramidLevels; ++i) {
        const std::size_t k = n * kPyramidLevels + i;
        if (i == level) {
          EXPECT_NE(moved[k], base[k]);
        } else {
          EXPECT_EQ(moved[k], base[k]) << "level " << level << " leaked into component " << i;
        }
      }
    }
  }
}

TEST(Dwg, JointGeneratorsCoupleLevels) {
  for (WeightGenKind kind : {WeightGenKind::proposed, WeightGenKind::fully_connected}) {
    ParamStore store(6);
    WeightGenerator g(store, "dwg", kind, kChannels);
    const FeaturePyramid p = pyramid(7);
    const Tensor base = g.generate(p).value();
    const Tensor moved = g.generate(perturb_level(p, 0)).value();
    int changed = 0;
    for (std::size_t i = 0; i < kPyramidLevels; ++i) changed += moved[i] != base[i];
    EXPECT_GT(changed, 1);
  }
}

TEST(Dwg, ReductionBeforeOrAfterPoolingIsTheSameFunction) {
  // A 1x1 conv commutes with spatial averaging, so the proposed generator and
  // the dense variant agree once they share weights.
  ParamStore a(8), b(8);
  WeightGenerator g(a, "dwg", WeightGenKind::proposed, kChannels);
  WeightGenerator f(b, "dwg", WeightGenKind::fully_connected, kChannels);
  const_cast<Var&>(b.get("dwg.fc.weight")).mutable_value() = a.get("dwg.reduce.weight").value();
  Tensor bias = a.get("dwg.reduce.bias").value();
  bias.fill(0.3);
  const_cast<Var&>(a.get("dwg.reduce.bias")).mutable_value() = bias;
  const_cast<Var&>(b.get("dwg.fc.bias")).mutable_value() = bias;
  const FeaturePyramid p = pyramid(9);
  EXPECT_LE(oracle::max_abs_diff(g.generate(p).value(), f.generate(p).value()), 1e-12);
}

TEST(WeightVector, ReadsOneSample) {
  Tensor t(Shape{2, kPyramidLevels, 1, 1});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  const WeightVector w = WeightVector::from_tensor(t, 1);
  EXPECT_EQ(w.values[0], 5.0);
  EXPECT_EQ(w.sum(), 5.0 + 6 + 7 + 8 + 9);
  EXPECT_THROW(WeightVector::from_tensor(t, 2), ShapeError);
  EXPECT_THROW(WeightVector::from_tensor(Tensor(Shape{1, 4, 1, 1}), 0), ShapeError);
}

}  // namespace
