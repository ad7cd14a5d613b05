#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsnet/config.hpp"
#include "dsnet/data_io.hpp"
#include "dsnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace dsnet;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kUsage = 2, kIo = 3, kConfig = 4, kNumeric = 5 };

constexpr const char* kFooter = R"(Exit codes:
  0  success
  2  usage error (bad flags or arguments)
  3  I/O error (missing or malformed file or directory)
  4  configuration error (unknown key, bad value, variant mismatch, size mismatch)
  5  numeric failure (non-finite loss during training)
  1  any other internal error

Environment:
  DSNET_SEED  default for --seed when the flag is absent

Every run prints its resolved configuration first; feeding that block back
through --config reproduces the run.)";

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string preset = "default";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Config file (key = value, [section] headers)");
  cmd->add_option("--set", o.overrides, "Override one key, e.g. --set train.lr=5e-5 (repeatable)");
  cmd->add_option("--seed", o.seed, "Seed (scene seed for generate, training seed otherwise)");
  cmd->add_option("--preset", o.preset, "Scene preset applied before the config")
      ->check(CLI::IsMember({"default", "regime-a", "regime-b"}));
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("DSNET_SEED");
  if (s == nullptr || *s == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("DSNET_SEED is not an unsigned integer: '") + s + "'");
  }
}

/// preset -> config file -> --set overrides -> seed.
RunConfig resolve(const CommonOptions& o, bool seed_is_scene) {
  RunConfig cfg;
  if (o.preset == "regime-a") cfg.scene = SceneConfig::regime_a();
  if (o.preset == "regime-b") cfg.scene = SceneConfig::regime_b();
  if (!o.config_path.empty()) cfg.apply_file(o.config_path);
  for (const auto& kv : o.overrides) cfg.apply_override(kv);
  const std::optional<std::uint64_t> seed = o.seed ? o.seed : env_seed();
  if (seed) {
    if (seed_is_scene) {
      cfg.scene.seed = *seed;
    } else {
      cfg.train.seed = *seed;
    }
  }
  cfg.validate();
  return cfg;
}

void print_resolved(const RunConfig& cfg, const std::string& command, const std::vector<std::string>& extra = {}) {
  std::cout << "# dsnet " << command << " resolved config\n" << cfg.to_text();
  for (const auto& line : extra) std::cout << "# " << line << "\n";
  std::cout << "# seed = " << (command == "generate" ? cfg.scene.seed : cfg.train.seed) << "\n" << std::flush;
}

std::vector<VideoSample> load_data(const std::vector<std::string>& dirs, const SceneConfig& fallback) {
  if (dirs.empty()) return gen_dataset(fallback);
  std::vector<VideoSample> all;
  for (const auto& d : dirs) {
    auto part = read_dataset(d);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

std::vector<std::string> data_lines(const std::string& label, const std::vector<std::string>& dirs) {
  std::vector<std::string> lines;
  if (dirs.empty()) lines.push_back(label + " = generated from scene.*");
  for (const auto& d : dirs) lines.push_back(label + " = " + d);
  return lines;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void print_metrics(const MetricsReport& m) {
  std::cout << "frames = " << m.frames << "\n"
            << "maxF = " << m.max_f << "\n"
            << "S = " << m.s_measure << "\n"
            << "MAE = " << m.mae << "\n";
}

void print_rows(const std::vector<AblationRow>& rows) {
  write_ablation_csv(std::cout, rows);
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int fail(const char* kind, int code, const std::string& message) {
  std::cerr << "dsnet: error[" << kind << "] " << one_line(message) << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-branch video salient object detection: data generation, training, evaluation, inference."};
  app.footer(kFooter);
  app.require_subcommand(1);

  // generate
  CommonOptions gen_opt;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset directory from the scene settings");
  add_common(gen, gen_opt);
  gen->add_option("--out", gen_out, "Output dataset directory")->required();

  // train
  CommonOptions train_opt;
  std::vector<std::string> train_data;
  std::string train_out;
  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint plus the CSV log");
  add_common(tr, train_opt);
  tr->add_option("--data", train_data, "Dataset directory (repeatable; default: generate from scene.*)");
  tr->add_option("--out", train_out, "Checkpoint directory")->required();

  // eval
  CommonOptions eval_opt;
  std::vector<std::string> eval_data;
  std::string eval_ckpt, eval_csv, eval_svg, eval_rel, eval_variant;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint: MAE, maxF, S-measure, PR curve");
  add_common(ev, eval_opt);
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required();
  ev->add_option("--data", eval_data, "Dataset directory (repeatable; default: generate from scene.*)");
  ev->add_option("--csv", eval_csv, "Write the PR curve and summary as CSV");
  ev->add_option("--svg", eval_svg, "Write the PR curve as SVG");
  ev->add_option("--reliability-csv", eval_rel, "Write per-sample eps_s/eps_t as CSV");
  ev->add_option("--variant", eval_variant, "Fail unless the checkpoint was trained as this variant");

  // infer
  CommonOptions infer_opt;
  std::string inf_ckpt, inf_frame, inf_flow, inf_mask, inf_out, inf_variant;
  auto* inf = app.add_subcommand("infer", "Map one frame and its flow to S_s, S_t, S_c, S_f PNGs");
  add_common(inf, infer_opt);
  inf->add_option("--checkpoint", inf_ckpt, "Checkpoint directory")->required();
  inf->add_option("--frame", inf_frame, "RGB frame (.png)")->required();
  inf->add_option("--flow", inf_flow, "Flow as a .flo field or a color-coded .png")->required();
  inf->add_option("--mask", inf_mask, "Ground-truth mask (.png/.pgm); required by oracle-stub checkpoints");
  inf->add_option("--out", inf_out, "Output directory")->required();
  inf->add_option("--variant", inf_variant, "Fail unless the checkpoint was trained as this variant");

  // ablate
  CommonOptions abl_opt;
  std::vector<std::string> abl_data, abl_eval, abl_families;
  std::string abl_out;
  auto* ab = app.add_subcommand("ablate", "Train and evaluate ablation variants under one seed and budget");
  add_common(ab, abl_opt);
  ab->add_option("--family", abl_families, "baseline, dwg, caa or head (repeatable; default: all four)")
      ->check(CLI::IsMember({"baseline", "dwg", "caa", "head"}));
  ab->add_option("--data", abl_data, "Training dataset directory (repeatable)");
  ab->add_option("--eval-data", abl_eval, "Evaluation dataset directory (repeatable; default: the training data)");
  ab->add_option("--out", abl_out, "Directory for one CSV per family")->required();

  // sweep-tau
  CommonOptions tau_opt;
  std::vector<std::string> tau_data, tau_eval;
  std::vector<double> taus;
  std::string tau_out;
  auto* sw = app.add_subcommand("sweep-tau", "Train and evaluate the configured variant over threshold values");
  add_common(sw, tau_opt);
  sw->add_option("--tau", taus, "Threshold value (repeatable; default 0.2 0.4 0.6 0.8 1.0)");
  sw->add_option("--data", tau_data, "Training dataset directory (repeatable)");
  sw->add_option("--eval-data", tau_eval, "Evaluation dataset directory (repeatable; default: the training data)");
  sw->add_option("--out", tau_out, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", kUsage, e.what());
  }

  try {
    if (gen->parsed()) {
      const RunConfig cfg = resolve(gen_opt, true);
      print_resolved(cfg, "generate", {"out = " + gen_out});
      const auto samples = gen_dataset(cfg.scene);
      write_dataset(gen_out, cfg.scene, samples);
      std::cout << "wrote " << samples.size() << " samples to " << gen_out << "\n";
    } else if (tr->parsed()) {
      const RunConfig cfg = resolve(train_opt, false);
      auto lines = data_lines("data", train_data);
      lines.push_back("out = " + train_out);
      print_resolved(cfg, "train", lines);
      const auto data = load_data(train_data, cfg.scene);
      fs::create_directories(train_out);
      const fs::path log_path = fs::path(train_out) / "train_log.csv";
      std::ofstream log(log_path);
      if (!log) throw IoError("cannot write " + log_path.string());
      auto state = train(cfg, data, &log);
      save_checkpoint(*state, train_out);
      const LossReport& last = state->log.back().loss;
      std::cout << "iterations = " << state->iteration << "\n"
                << "final_total_loss = " << last.total << "\n"
                << "log = " << log_path.string() << "\n";
    } else if (ev->parsed()) {
      const RunConfig cfg = resolve(eval_opt, false);
      auto lines = data_lines("data", eval_data);
      lines.push_back("checkpoint = " + eval_ckpt);
      print_resolved(cfg, "eval", lines);
      const Checkpoint ck = load_checkpoint(eval_ckpt);
      if (!eval_variant.empty()) require_variant(ck, parse_variant(eval_variant));
      const auto data = load_data(eval_data, cfg.scene);
      const auto predictor = ck.predictor();
      const EvalResult r = evaluate(*predictor, data, static_cast<std::size_t>(cfg.train.batch_size));
      print_metrics(r.metrics);
      if (!eval_csv.empty()) {
        std::ostringstream s;
        write_eval_csv(s, r);
        write_text(eval_csv, s.str());
      }
      if (!eval_svg.empty()) write_text(eval_svg, pr_curve_svg(r.metrics.curve, "PR curve"));
      if (!eval_rel.empty()) {
        std::ostringstream s;
        write_reliability_csv(s, r);
        write_text(eval_rel, s.str());
      }
    } else if (inf->parsed()) {
      const RunConfig cfg = resolve(infer_opt, false);
      print_resolved(cfg, "infer",
                     {"checkpoint = " + inf_ckpt, "frame = " + inf_frame, "flow = " + inf_flow,
                      "mask = " + (inf_mask.empty() ? std::string("none") : inf_mask), "out = " + inf_out});
      const Checkpoint ck = load_checkpoint(inf_ckpt);
      if (!inf_variant.empty()) require_variant(ck, parse_variant(inf_variant));
      VideoSample s;
      s.frame = read_frame(inf_frame);
      const Shape fs_ = s.frame.shape();
      if (fs::path(inf_flow).extension() == ".flo") {
        s.flow_field = read_flo(inf_flow);
        s.flow_image = render_flow_color(s.flow_field);
      } else {
        s.flow_image = read_frame(inf_flow);
        s.flow_field = Tensor(Shape{1, 2, fs_.h, fs_.w});
        if (ck.kind == CheckpointKind::network && ck.config.train.temporal_input == TemporalInput::field) {
          throw ConfigError("checkpoint reads the raw flow field; --flow must be a .flo file");
        }
      }
      if (!inf_mask.empty()) {
        s.mask = read_mask(inf_mask);
      } else if (ck.kind == CheckpointKind::oracle_stub) {
        throw ConfigError("an oracle-stub checkpoint needs --mask");
      } else {
        s.mask = Tensor(Shape{1, 1, fs_.h, fs_.w});
      }
      for (const Tensor* t : {&s.flow_image, &s.mask}) {
        const Shape ts = t->shape();
        if (ts.h != fs_.h || ts.w != fs_.w) {
          throw ConfigError("input sizes differ: frame " + fs_.str() + ", other " + ts.str());
        }
      }
      const Batch batch = Batch::from_samples(std::span<const VideoSample>(&s, 1));
      const Prediction p = ck.predictor()->predict(batch);
      fs::create_directories(inf_out);
      const std::pair<const char*, const Tensor*> maps[] = {
          {"s_s.png", &p.s_s}, {"s_t.png", &p.s_t}, {"s_c.png", &p.s_c}, {"s_f.png", &p.s_f}};
      for (const auto& [name, t] : maps) {
        if (t->empty()) {
          std::cout << name << " = absent in this variant\n";
          continue;
        }
        write_map(*t, fs::path(inf_out) / name);
        std::cout << name << " = " << (fs::path(inf_out) / name).string() << "\n";
      }
    } else if (ab->parsed()) {
      const RunConfig cfg = resolve(abl_opt, false);
      if (abl_families.empty()) abl_families = {"baseline", "dwg", "caa", "head"};
      auto lines = data_lines("data", abl_data);
      for (const auto& l : data_lines("eval_data", abl_eval.empty() ? abl_data : abl_eval)) lines.push_back(l);
      lines.push_back("out = " + abl_out);
      print_resolved(cfg, "ablate", lines);
      const auto train_set = load_data(abl_data, cfg.scene);
      const auto eval_set = abl_eval.empty() ? train_set : load_data(abl_eval, cfg.scene);
      const ProgressFn progress = [](const std::string& msg) { std::cerr << msg << "\n"; };
      for (const auto& family : abl_families) {
        const auto rows = ablate(cfg, ablation_family(family), train_set, eval_set, progress);
        std::ostringstream s;
        write_ablation_csv(s, rows);
        write_text(fs::path(abl_out) / ("ablation_" + family + ".csv"), s.str());
        std::cout << "# family " << family << "\n";
        print_rows(rows);
      }
    } else if (sw->parsed()) {
      const RunConfig cfg = resolve(tau_opt, false);
      if (taus.empty()) taus = default_tau_sweep();
      auto lines = data_lines("data", tau_data);
      for (const auto& l : data_lines("eval_data", tau_eval.empty() ? tau_data : tau_eval)) lines.push_back(l);
      lines.push_back("out = " + tau_out);
      print_resolved(cfg, "sweep-tau", lines);
      const auto train_set = load_data(tau_data, cfg.scene);
      const auto eval_set = tau_eval.empty() ? train_set : load_data(tau_eval, cfg.scene);
      const ProgressFn progress = [](const std::string& msg) { std::cerr << msg << "\n"; };
      const auto rows = sweep_tau(cfg, taus, train_set, eval_set, progress);
      std::ostringstream s;
      write_ablation_csv(s, rows);
      write_text(tau_out, s.str());
      print_rows(rows);
    }
  } catch (const IoError& e) {
    return fail("io", kIo, e.what());
  } catch (const ConfigError& e) {
    return fail("config", kConfig, e.what());
  } catch (const NumericError& e) {
    return fail("numeric", kNumeric, e.what());
  } catch (const std::invalid_argument& e) {
    return fail("config", kConfig, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail("io", kIo, e.what());
  } catch (const std::exception& e) {
    return fail("internal", kInternal, e.what());
  }
  return kOk;
}
