#include <gtest/gtest.h>

#include "../common/oracles.hpp"
#include "../common/test_util.hpp"
#include "dsnet/model.hpp"

using namespace dsnet;

namespace {

Batch small_batch(std::uint64_t seed = 3) {
  SceneConfig c;
  c.height = c.width = 16;
  c.size_min = 5;
  c.size_max = 7;
  c.speed_max = 1;
  c.length = 2;
  c.seed = seed;
  const auto samples = gen_sequence(c);
  return Batch::from_samples(std::span<const VideoSample>(samples));
}

Var& param(DsNet& net, const std::string& name) { return const_cast<Var&>(net.params().get(name)); }

TEST(Variant, NamesRoundtrip) {
  for (Variant v : all_variants()) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_EQ(all_variants().size(), 13u);
  EXPECT_THROW(parse_variant("m4"), ConfigError);
}

TEST(DsNet, OutputsHaveInputResolution) {
  const DsNet net(ModelConfig{}, Variant::proposed, 1);
  const Batch b = small_batch();
  const ForwardResult r = net.forward(b);
  for (const Var* m : {&r.s_s, &r.s_t, &r.s_c, &r.s_f}) EXPECT_EQ(m->shape(), (Shape{2, 1, 16, 16}));
  EXPECT_EQ(r.eps.shape(), (Shape{2, 2, 1, 1}));
  for (std::size_t n = 0; n < 2; ++n) EXPECT_NEAR(r.eps.value()[2 * n] + r.eps.value()[2 * n + 1], 1.0, 1e-12);
  const Tensor& sc = r.s_c.value();
  for (std::size_t i = 0; i < sc.size(); ++i) {
    EXPECT_GE(sc[i], std::min(r.s_s.value()[i], r.s_t.value()[i]) - 1e-15);
    EXPECT_LE(sc[i], std::max(r.s_s.value()[i], r.s_t.value()[i]) + 1e-15);
  }
  Batch odd = b;
  odd.frames = Tensor(Shape{2, 3, 12, 16});
  EXPECT_THROW(net.forward(odd), ShapeError);
}

TEST(DsNet, ZeroInitializedGeneratorsStartWithEqualReliability) {
  const DsNet net(ModelConfig{}, Variant::proposed, 2);
  const ForwardResult r = net.forward(small_batch());
  for (double v : r.eps.value().values()) EXPECT_EQ(v, 0.5);
}

TEST(DsNet, DeterministicForFixedSeed) {
  const Batch b = small_batch();
  const DsNet a(ModelConfig{}, Variant::proposed, 7), c(ModelConfig{}, Variant::proposed, 7);
  EXPECT_TRUE(bit_identical(a.forward(b).s_f.value(), c.forward(b).s_f.value()));
  const DsNet d(ModelConfig{}, Variant::proposed, 8);
  EXPECT_FALSE(bit_identical(a.forward(b).s_f.value(), d.forward(b).s_f.value()));
}

TEST(DsNet, SingleBranchVariantsIgnoreTheOtherInput) {
  const Batch b = small_batch();
  Batch moved = b;
  Rng rng(4);
  moved.flow_images = oracle::random_tensor(rng, b.flow_images.shape(), 0.0, 1.0);
  moved.flow_fields = oracle::random_tensor(rng, b.flow_fields.shape());
  const DsNet m1(ModelConfig{}, Variant::m1_spatial, 1);
  EXPECT_TRUE(bit_identical(m1.forward(b).s_f.value(), m1.forward(moved).s_f.value()));
  EXPECT_FALSE(m1.forward(b).s_t.defined());
  EXPECT_FALSE(m1.forward(b).eps.defined());

  Batch reframed = b;
  reframed.frames = oracle::random_tensor(rng, b.frames.shape(), 0.0, 1.0);
  const DsNet m2(ModelConfig{}, Variant::m2_temporal, 1);
  EXPECT_TRUE(bit_identical(m2.forward(b).s_f.value(), m2.forward(reframed).s_f.value()));
  EXPECT_FALSE(m2.forward(b).s_s.defined());
}

TEST(DsNet, SummationBaselineIsSymmetricInItsBranches) {
  // Swapping both the inputs and the branch parameters leaves a plain sum unchanged.
  const Batch b = small_batch();
  Batch swapped = b;
  std::swap(swapped.frames, swapped.flow_images);
  DsNet net(ModelConfig{}, Variant::m3_sum, 5), mirror(ModelConfig{}, Variant::m3_sum, 5);
  for (const auto& e : net.params().entries()) {
    for (const auto& [from, to] : {std::pair{"spatial.", "temporal."}, std::pair{"temporal.", "spatial."}}) {
      const std::string f = from;
      if (e.name.rfind(f, 0) == 0) param(mirror, to + e.name.substr(f.size())).mutable_value() = e.var.value();
    }
  }
  const ForwardResult r = net.forward(b);
  EXPECT_TRUE(bit_identical(r.s_f.value(), mirror.forward(swapped).s_f.value()));
  EXPECT_FALSE(r.w_s.defined());
  EXPECT_FALSE(r.s_c.defined());
  EXPECT_FALSE(r.eps.defined());
}

TEST(DsNet, SummationBaselineIsTheProposedModelWithUnitGates) {
  VariantFlags f;  // proposed defaults
  f.weights = WeightSource::none;
  f.gate = GateMode::unit;
  f.coarse = CoarseFusion::none;
  f.attention = false;
  f.supervision = Supervision::single;
  const Batch b = small_batch();
  EXPECT_TRUE(bit_identical(DsNet(ModelConfig{}, f, 4).forward(b).s_f.value(),
                            DsNet(ModelConfig{}, Variant::m3_sum, 4).forward(b).s_f.value()));
  const GateSet g = DsNet(ModelConfig{}, f, 4).forward(b).gates;
  EXPECT_TRUE(testutil::all_equal(g.gated.value(), 1.0));
}

TEST(DsNet, TauOneMatchesTheUnthresholdedVariant) {
  ModelConfig cfg;
  cfg.tau = 1.0;
  cfg.zero_init_weights = false;
  const Batch b = small_batch();
  const ForwardResult p = DsNet(cfg, Variant::proposed, 9).forward(b);
  const ForwardResult w = DsNet(cfg, Variant::caa_won, 9).forward(b);
  EXPECT_TRUE(bit_identical(p.s_f.value(), w.s_f.value()));
  EXPECT_TRUE(bit_identical(p.gates.gated.value(), w.gates.gated.value()));
}

TEST(DsNet, AttentionSwitchDecidesWhetherBranchMapsReachTheOutput) {
  const Batch b = small_batch();
  for (Variant v : {Variant::proposed, Variant::m_woatt}) {
    DsNet net(ModelConfig{}, v, 6);
    const Tensor before = net.forward(b).s_f.value();
    param(net, "spatial.decoder.logit.bias").mutable_value().fill(2.0);
    const bool changed = !bit_identical(before, net.forward(b).s_f.value());
    EXPECT_EQ(changed, v == Variant::proposed) << to_string(v);
  }
}

double grad_mass(const Var& p) {
  if (!p.has_grad()) return 0.0;
  const Tensor g = p.grad();
  double m = 0.0;
  for (double v : g.values()) m += std::fabs(v);
  return m;
}

TEST(DsNet, EveryParameterReceivesGradient) {
  ModelConfig cfg;
  cfg.zero_init_weights = false;
  const DsNet net(cfg, Variant::proposed, 10);
  const Batch b = small_batch();
  const ForwardResult r = net.forward(b);
  backward(total_loss(r.s_s, r.s_t, r.s_c, r.s_f, b.masks, Supervision::multiple).total);
  for (const auto& e : net.params().entries()) EXPECT_GT(grad_mass(e.var), 0.0) << e.name;
}

TEST(DsNet, SingleSupervisionLeavesBranchDecodersWithoutGradient) {
  ModelConfig cfg;
  cfg.zero_init_weights = false;
  const DsNet net(cfg, Variant::m_ss, 11);
  const Batch b = small_batch();
  const ForwardResult r = net.forward(b);
  backward(total_loss(r.s_s, r.s_t, r.s_c, r.s_f, b.masks, Supervision::single).total);
  for (const auto& e : net.params().entries()) {
    const bool branch_decoder = e.name.find(".decoder.") != std::string::npos;
    if (branch_decoder) {
      EXPECT_EQ(grad_mass(e.var), 0.0) << e.name;
    } else {
      EXPECT_GT(grad_mass(e.var), 0.0) << e.name;
    }
  }
}

TEST(Predictors, OracleStubReturnsGroundTruth) {
  const Batch b = small_batch();
  const Prediction p = OracleStubPredictor().predict(b);
  EXPECT_TRUE(bit_identical(p.s_f, b.masks));
  const DsNet net(ModelConfig{}, Variant::proposed, 1);
  EXPECT_TRUE(bit_identical(NetworkPredictor(net).predict(b).s_f, net.forward(b).s_f.value()));
  EXPECT_THROW(Batch::from_samples(std::span<const VideoSample>()), std::invalid_argument);
}

}  // namespace
