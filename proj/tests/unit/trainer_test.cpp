#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>

#include "../common/test_util.hpp"
#include "dsnet/trainer.hpp"

using namespace dsnet;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
  RunConfig c;
  c.scene.height = c.scene.width = 16;
  c.scene.size_min = 5;
  c.scene.size_max = 7;
  c.scene.speed_max = 1;
  c.scene.sequences = 2;
  c.scene.length = 2;
  c.train.height = c.train.width = 16;
  c.train.batch_size = 2;
  c.train.iterations = 4;
  c.train.dwg_warmup = 0;
  c.train.dwg_lr_scale = 1.0;
  return c;
}

const std::vector<VideoSample>& tiny_data() {
  static const auto data = gen_dataset(tiny_config().scene);
  return data;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dsnet_trainer_" + name);
  fs::remove_all(p);
  return p;
}

bool same_params(const ParamStore& a, const ParamStore& b) {
  if (a.entries().size() != b.entries().size()) return false;
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    if (a.entries()[i].name != b.entries()[i].name) return false;
    if (!bit_identical(a.entries()[i].var.value(), b.entries()[i].var.value())) return false;
  }
  return true;
}

TEST(Trainer, ZeroLearningRateLeavesParametersUntouched) {
  RunConfig c = tiny_config();
  c.train.lr = 0.0;
  TrainState state(c);
  const TrainState fresh(c);
  train_steps(state, tiny_data(), 3);
  EXPECT_EQ(state.iteration, 3);
  EXPECT_TRUE(same_params(state.net->params(), fresh.net->params()));
}

TEST(Trainer, ReplayIsBitExact) {
  const auto a = train(tiny_config(), tiny_data());
  const auto b = train(tiny_config(), tiny_data());
  ASSERT_EQ(a->log.size(), 4u);
  EXPECT_EQ(a->log.back().loss.total, b->log.back().loss.total);
  EXPECT_TRUE(same_params(a->net->params(), b->net->params()));
  TrainState fresh(tiny_config());
  EXPECT_FALSE(same_params(a->net->params(), fresh.net->params()));
}

TEST(Trainer, GradientReachesEveryParameterAfterOneStep) {
  TrainState state(tiny_config());
  train_steps(state, tiny_data(), 1);
  const Batch b = Batch::from_samples(std::span<const VideoSample>(tiny_data()).subspan(0, 2));
  const ForwardResult r = state.net->forward(b);
  backward(total_loss(r.s_s, r.s_t, r.s_c, r.s_f, b.masks, Supervision::multiple).total);
  for (const auto& e : state.net->params().entries()) {
    ASSERT_TRUE(e.var.has_grad()) << e.name;
    const Tensor g = e.var.grad();
    EXPECT_TRUE(std::any_of(g.values().begin(), g.values().end(), [](double v) { return v != 0.0; })) << e.name;
  }
}

TEST(Trainer, NonFiniteLossNamesTheIteration) {
  TrainState state(tiny_config());
  train_steps(state, tiny_data(), 1);
  const_cast<Var&>(state.net->params().get("final_decoder.logit.bias")).mutable_value().fill(
      std::numeric_limits<double>::quiet_NaN());
  try {
    train_steps(state, tiny_data(), 1);
    FAIL();
  } catch (const NumericError& e) {
    // Iterations are counted from 0, so the second call runs iteration 1.
    EXPECT_NE(std::string(e.what()).find("iteration 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(train_steps(state, {}, 1), std::invalid_argument);
}

TEST(Trainer, LogHeaderMatchesRows) {
  const auto s = train(tiny_config(), tiny_data());
  const std::string header = log_header();
  EXPECT_EQ(header.rfind("iter,l_s,l_t,l_c,l_f,total,w_s1", 0), 0u);
  const auto commas = [](const std::string& t) { return std::count(t.begin(), t.end(), ','); };
  EXPECT_EQ(commas(format_log_row(s->log.front())), commas(header));
  std::ostringstream csv;
  TrainState state(tiny_config());
  train_steps(state, tiny_data(), 2, &csv);
  std::istringstream lines(csv.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) ++n;
  EXPECT_EQ(n, 3);
}

TEST(Trainer, LossWindowIncreaseDetectsRises) {
  std::vector<LogRow> log(400);
  for (std::size_t i = 0; i < log.size(); ++i) log[i].loss.total = 1.0 / static_cast<double>(i + 1);
  EXPECT_FALSE(loss_window_increase(log, 200));
  for (std::size_t i = 200; i < log.size(); ++i) log[i].loss.total = 5.0;
  EXPECT_TRUE(loss_window_increase(log, 200));
}

TEST(BatchIndices, EpochsArePermutations) {
  std::multiset<std::size_t> epoch;
  for (long it = 0; it < 5; ++it) {
    const auto idx = batch_indices(10, 2, it, 42);
    ASSERT_EQ(idx.size(), 2u);
    epoch.insert(idx.begin(), idx.end());
    EXPECT_EQ(idx, batch_indices(10, 2, it, 42));
  }
  EXPECT_EQ(epoch, (std::multiset<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
  EXPECT_NE(batch_indices(10, 2, 0, 42), batch_indices(10, 2, 0, 43));
}

TEST(Checkpoint, RoundtripRestoresOutputsAndOptimizer) {
  auto state = train(tiny_config(), tiny_data());
  const fs::path dir = scratch("ckpt");
  save_checkpoint(*state, dir);
  Checkpoint ck = load_checkpoint(dir);
  ASSERT_EQ(ck.kind, CheckpointKind::network);
  EXPECT_EQ(ck.state->iteration, state->iteration);
  const Batch b = Batch::from_samples(std::span<const VideoSample>(tiny_data()));
  EXPECT_TRUE(bit_identical(ck.state->net->forward(b).s_f.value(), state->net->forward(b).s_f.value()));
  EXPECT_TRUE(bit_identical(ck.predictor()->predict(b).s_f, state->net->forward(b).s_f.value()));
  train_steps(*state, tiny_data(), 2);
  train_steps(*ck.state, tiny_data(), 2);
  EXPECT_TRUE(same_params(ck.state->net->params(), state->net->params()));
  EXPECT_NO_THROW(require_variant(ck, Variant::proposed));
  EXPECT_THROW(require_variant(ck, Variant::m3_sum), ConfigError);
  fs::remove_all(dir);
  EXPECT_THROW(load_checkpoint(dir), IoError);
}

TEST(Evaluate, OracleStubScoresPerfectly) {
  const fs::path dir = scratch("stub");
  save_oracle_stub(tiny_config(), dir);
  const Checkpoint ck = load_checkpoint(dir);
  EXPECT_EQ(ck.kind, CheckpointKind::oracle_stub);
  const EvalResult r = evaluate(*ck.predictor(), tiny_data());
  EXPECT_EQ(r.metrics.frames, tiny_data().size());
  EXPECT_EQ(r.metrics.max_f, 1.0);
  EXPECT_EQ(r.metrics.mae, 0.0);
  EXPECT_NEAR(r.metrics.s_measure, 1.0, 1e-12);
  EXPECT_THROW(evaluate(*ck.predictor(), {}), std::invalid_argument);
  std::ostringstream csv;
  write_eval_csv(csv, r);
  EXPECT_NE(csv.str().find("summary,,,,,0,1,"), std::string::npos);
  EXPECT_NE(pr_curve_svg(r.metrics.curve, "stub").find("<svg"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Evaluate, ReportsReliabilityPerSample) {
  const auto state = train(tiny_config(), tiny_data());
  const EvalResult r = evaluate(NetworkPredictor(*state->net), tiny_data(), 3);
  ASSERT_EQ(r.reliability.size(), tiny_data().size());
  for (const auto& e : r.reliability) EXPECT_NEAR(e.eps_s + e.eps_t, 1.0, 1e-12);
  std::ostringstream csv;
  write_reliability_csv(csv, r);
  EXPECT_EQ(csv.str().rfind("sample,sequence,index,eps_s,eps_t\n", 0), 0u);
}

TEST(Config, UnknownKeyListsValidKeys) {
  RunConfig c;
  try {
    c.apply_override("train.learning_rate=0.1");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("train.learning_rate"), std::string::npos);
    EXPECT_NE(m.find("train.lr"), std::string::npos);
    EXPECT_NE(m.find("scene.flow_noise"), std::string::npos);
  }
  EXPECT_THROW(c.apply_override("train.lr"), ConfigError);
  c.apply_override("train.batch_size=0");
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, TextRoundtripAndSections) {
  RunConfig c = tiny_config();
  c.train.variant = Variant::caa_bu;
  c.train.tau = 0.35;
  RunConfig d;
  d.apply_text(c.to_text());
  EXPECT_EQ(d.to_text(), c.to_text());
  RunConfig e;
  e.apply_text("# comment\n[train]\nlr = 0.25\n[scene]\nheight = 24  # trailing\n");
  EXPECT_EQ(e.train.lr, 0.25);
  EXPECT_EQ(e.scene.height, 24);
}

TEST(Ablation, RowsFollowTheRequestedVariants) {
  RunConfig c = tiny_config();
  c.train.iterations = 2;
  const auto rows = ablate(c, {Variant::m3_sum, Variant::proposed}, tiny_data(), tiny_data());
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].variant, Variant::m3_sum);
  std::ostringstream csv;
  write_ablation_csv(csv, rows);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "label,variant,tau,max_f,s_measure,mae,mean_eps_s,mean_eps_t");
  int n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 2);
  const auto again = ablate(c, {Variant::m3_sum}, tiny_data(), tiny_data());
  EXPECT_EQ(again[0].metrics.max_f, rows[0].metrics.max_f);
  EXPECT_EQ(again[0].metrics.mae, rows[0].metrics.mae);
  EXPECT_EQ(again[0].metrics.s_measure, rows[0].metrics.s_measure);
  EXPECT_THROW(ablation_family("encoder"), ConfigError);
  EXPECT_EQ(ablation_family("head").size(), 4u);
}

TEST(Ablation, TauOneMatchesTheUnthresholdedVariant) {
  RunConfig c = tiny_config();
  c.train.iterations = 3;
  c.train.lr = 0.05;
  const auto won = ablate(c, {Variant::caa_won}, tiny_data(), tiny_data());
  const auto tau = sweep_tau(c, {1.0}, tiny_data(), tiny_data());
  ASSERT_EQ(tau.size(), 1u);
  EXPECT_EQ(tau[0].tau, 1.0);
  EXPECT_EQ(tau[0].metrics.max_f, won[0].metrics.max_f);
  EXPECT_EQ(tau[0].metrics.mae, won[0].metrics.mae);
  EXPECT_EQ(tau[0].mean_eps_s, won[0].mean_eps_s);
}

}  // namespace
