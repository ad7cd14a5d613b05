#include "dsnet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dsnet/rng.hpp"
#include "dsnet/tensor_io.hpp"

namespace dsnet {

namespace fs = std::filesystem;

void Adam::step(ParamStore& params) {
  ++t_;
  for (const auto& e : params.entries()) {
    const bool dwg = e.name.rfind("dwg_", 0) == 0;
    // Weight generators start counting their own steps after the warm-up.
    const long t = dwg ? t_ - cfg_.dwg_warmup : t_;
    if (t <= 0) continue;
    const double lr = dwg ? cfg_.lr * cfg_.dwg_lr_scale : cfg_.lr;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
    Var p = e.var;
    Tensor& value = p.mutable_value();
    Tensor& m = m_.try_emplace(e.name, value.shape()).first->second;
    Tensor& v = v_.try_emplace(e.name, value.shape()).first->second;
    const bool has_grad = p.has_grad();
    const Tensor* g = has_grad ? &p.node()->grad : nullptr;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double gi = has_grad ? (*g)[i] : 0.0;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      value[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.adam_eps) + cfg_.weight_decay * value[i]);
    }
  }
}

std::string log_header() {
  std::string h = "iter,l_s,l_t,l_c,l_f,total";
  for (const char* name : {"w_s", "w_t", "v_s", "v_t", "u_s", "u_t"}) {
    for (std::size_t i = 1; i <= kPyramidLevels; ++i) h += "," + std::string(name) + std::to_string(i);
  }
  h += ",eps_s,eps_t,wall_ms";
  return h;
}

std::string format_log_row(const LogRow& r) {
  std::ostringstream o;
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.10g", v);
    o << buf;
  };
  o << r.iteration;
  for (double v : {r.loss.l_s, r.loss.l_t, r.loss.l_c, r.loss.l_f, r.loss.total}) put(v);
  for (const auto* a : {&r.w_s, &r.w_t, &r.v_s, &r.v_t, &r.u_s, &r.u_t}) {
    for (double v : *a) put(v);
  }
  put(r.eps_s);
  put(r.eps_t);
  std::snprintf(buf, sizeof buf, ",%.3f", r.wall_ms);
  o << buf;
  return o.str();
}

TrainState::TrainState(const RunConfig& cfg)
    : config(cfg),
      net(std::make_unique<DsNet>(cfg.train.model_config(), cfg.train.variant, cfg.train.seed)),
      adam(cfg.train) {
  config.train.validate();
}

std::vector<std::size_t> batch_indices(std::size_t dataset_size, std::size_t batch_size, long iteration,
                                       std::uint64_t seed) {
  if (dataset_size == 0) throw std::invalid_argument("batch_indices: empty dataset");
  std::vector<std::size_t> out;
  std::vector<std::size_t> perm;
  long cached_epoch = -1;
  for (std::size_t j = 0; j < batch_size; ++j) {
    const std::size_t pos = static_cast<std::size_t>(iteration) * batch_size + j;
    const auto epoch = static_cast<long>(pos / dataset_size);
    if (epoch != cached_epoch) {
      perm.resize(dataset_size);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng rng(derive_seed(derive_seed(seed, 0x5348554646ull), static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = dataset_size; i-- > 1;) {
        std::swap(perm[i], perm[static_cast<std::size_t>(rng.integer(0, static_cast<long>(i)))]);
      }
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % dataset_size]);
  }
  return out;
}

namespace {

// Batch mean of an (N, K, ...) tensor for each of the first L entries of channel `channel`.
std::array<double, kPyramidLevels> mean_levels(const Var& t, std::size_t channel, bool pair) {
  std::array<double, kPyramidLevels> out{};
  if (!t.defined()) return out;
  const Shape s = t.shape();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < kPyramidLevels; ++i) {
      out[i] += pair ? t.value().at(n, channel, i, 0) : t.value().at(n, i, 0, 0);
    }
  }
  for (auto& v : out) v /= static_cast<double>(s.n);
  return out;
}

bool is_static_draw(std::uint64_t seed, long iteration, std::size_t slot, std::size_t batch, double ratio) {
  if (ratio <= 0.0) return false;
  Rng rng(derive_seed(derive_seed(seed, 0x535441544943ull),
                      static_cast<std::uint64_t>(iteration) * batch + slot));
  return rng.uniform() < ratio;
}

void require_finite(const LossReport& r, long iteration) {
  const std::pair<const char*, double> terms[] = {
      {"l_s", r.l_s}, {"l_t", r.l_t}, {"l_c", r.l_c}, {"l_f", r.l_f}, {"total", r.total}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) {
      throw NumericError("iteration " + std::to_string(iteration) + ": loss term " + name + " is not finite");
    }
  }
}

}  // namespace

void train_steps(TrainState& state, const std::vector<VideoSample>& data, long iterations, std::ostream* log_csv) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  const TrainConfig& tc = state.config.train;
  const Shape in = data.front().frame.shape();
  if (in.h != static_cast<std::size_t>(tc.height) || in.w != static_cast<std::size_t>(tc.width)) {
    throw ConfigError("train: dataset frames are " + std::to_string(in.h) + "x" + std::to_string(in.w) +
                      " but train.height x train.width is " + std::to_string(tc.height) + "x" +
                      std::to_string(tc.width));
  }
  const auto batch = static_cast<std::size_t>(tc.batch_size);
  const Supervision sup = state.net->flags().supervision;
  if (log_csv && state.iteration == 0) *log_csv << log_header() << "\n";
  for (long k = 0; k < iterations; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const long it = state.iteration;
    const auto idx = batch_indices(data.size(), batch, it, tc.seed);
    std::vector<VideoSample> statics;
    statics.reserve(batch);
    std::vector<const VideoSample*> chosen;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (is_static_draw(tc.seed, it, j, batch, tc.static_ratio)) {
        statics.push_back(make_static_sample(data[idx[j]]));
        chosen.push_back(&statics.back());
      } else {
        chosen.push_back(&data[idx[j]]);
      }
    }
    const Batch b = Batch::from_samples(std::span<const VideoSample* const>(chosen));

    state.net->params().zero_grad();
    const ForwardResult r = state.net->forward(b);
    const LossGraph loss = total_loss(r.s_s, r.s_t, r.s_c, r.s_f, b.masks, sup);
    LogRow row;
    row.iteration = it;
    row.loss = loss.report();
    require_finite(row.loss, it);
    backward(loss.total);
    state.adam.step(state.net->params());

    row.w_s = mean_levels(r.w_s, 0, false);
    row.w_t = mean_levels(r.w_t, 0, false);
    row.v_s = mean_levels(r.gates.normalized, 0, true);
    row.v_t = mean_levels(r.gates.normalized, 1, true);
    row.u_s = mean_levels(r.gates.gated, 0, true);
    row.u_t = mean_levels(r.gates.gated, 1, true);
    if (r.eps.defined()) {
      for (std::size_t n = 0; n < b.size(); ++n) {
        row.eps_s += r.eps.value().at(n, 0, 0, 0);
        row.eps_t += r.eps.value().at(n, 1, 0, 0);
      }
      row.eps_s /= static_cast<double>(b.size());
      row.eps_t /= static_cast<double>(b.size());
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (log_csv) *log_csv << format_log_row(row) << "\n";
    state.log.push_back(row);
    ++state.iteration;
  }
}

std::unique_ptr<TrainState> train(const RunConfig& cfg, const std::vector<VideoSample>& data, std::ostream* log_csv) {
  auto state = std::make_unique<TrainState>(cfg);
  train_steps(*state, data, cfg.train.iterations, log_csv);
  return state;
}

bool loss_window_increase(const std::vector<LogRow>& log, std::size_t window) {
  if (window == 0) return false;
  double prev = 0.0;
  bool have_prev = false;
  for (std::size_t start = 0; start + window <= log.size(); start += window) {
    double acc = 0.0;
    for (std::size_t i = start; i < start + window; ++i) acc += log[i].loss.total;
    const double mean = acc / static_cast<double>(window);
    if (have_prev && mean > prev) return true;
    prev = mean;
    have_prev = true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::string tensor_file(const char* prefix, std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s/%04zu.dst", prefix, i);
  return buf;
}

void write_text(const fs::path& p, const std::string& s) {
  write_file_bytes(p, std::vector<std::uint8_t>(s.begin(), s.end()));
}

std::string read_text(const fs::path& p) {
  const auto b = read_file_bytes(p);
  return std::string(b.begin(), b.end());
}

void write_manifest_entry(std::ostream& o, const char* tag, const std::string& name, const std::string& file,
                          const Shape& s) {
  o << tag << " " << name << " " << file << " " << s.n << " " << s.c << " " << s.h << " " << s.w << "\n";
}

}  // namespace

void save_checkpoint(const TrainState& state, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "params", ec);
  fs::create_directories(dir / "adam", ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  std::ostringstream manifest;
  manifest << "kind network\n"
           << "variant " << to_string(state.config.train.variant) << "\n"
           << "iteration " << state.iteration << "\n"
           << "adam_steps " << state.adam.steps() << "\n";
  const auto& entries = state.net->params().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string file = tensor_file("params", i);
    write_tensor(entries[i].var.value(), dir / file);
    write_manifest_entry(manifest, "param", entries[i].name, file, entries[i].var.shape());
  }
  std::size_t k = 0;
  for (const auto& [name, m] : state.adam.first_moments()) {
    const std::string mf = tensor_file("adam", 2 * k);
    const std::string vf = tensor_file("adam", 2 * k + 1);
    write_tensor(m, dir / mf);
    write_tensor(state.adam.second_moments().at(name), dir / vf);
    write_manifest_entry(manifest, "adam_m", name, mf, m.shape());
    write_manifest_entry(manifest, "adam_v", name, vf, m.shape());
    ++k;
  }
  write_text(dir / "manifest.txt", manifest.str());
  write_text(dir / "config.cfg", state.config.to_text());
}

void save_oracle_stub(const RunConfig& cfg, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  write_text(dir / "manifest.txt", "kind oracle-stub\nvariant " + to_string(cfg.train.variant) + "\n");
  write_text(dir / "config.cfg", cfg.to_text());
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.txt")) throw IoError("not a checkpoint directory: " + dir.string());
  Checkpoint ck;
  ck.config.apply_text(read_text(dir / "config.cfg"));
  ck.config.validate();
  std::istringstream manifest(read_text(dir / "manifest.txt"));
  std::string line;
  std::map<std::string, bool> loaded;
  long adam_steps = 0;
  while (std::getline(manifest, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag.empty()) continue;
    if (tag == "kind") {
      std::string kind;
      ls >> kind;
      if (kind == "oracle-stub") {
        ck.kind = CheckpointKind::oracle_stub;
        return ck;
      }
      if (kind != "network") throw IoError("checkpoint: unknown kind '" + kind + "'");
      ck.state = std::make_unique<TrainState>(ck.config);
    } else if (tag == "variant") {
      std::string v;
      ls >> v;
      if (parse_variant(v) != ck.config.train.variant) {
        throw ConfigError("checkpoint manifest variant '" + v + "' disagrees with its config");
      }
    } else if (tag == "iteration") {
      ls >> ck.state->iteration;
    } else if (tag == "adam_steps") {
      ls >> adam_steps;
    } else if (tag == "param" || tag == "adam_m" || tag == "adam_v") {
      if (!ck.state) throw IoError("checkpoint: manifest lists tensors before its kind");
      std::string name, file;
      Shape s;
      ls >> name >> file >> s.n >> s.c >> s.h >> s.w;
      if (!ls) throw IoError("checkpoint: malformed manifest line '" + line + "'");
      Tensor t = read_tensor(dir / file);
      if (!(t.shape() == s)) throw IoError("checkpoint: " + file + " shape disagrees with the manifest");
      ParamStore& store = ck.state->net->params();
      if (!store.contains(name)) {
        throw ConfigError("checkpoint parameter '" + name + "' does not exist in variant " +
                          to_string(ck.config.train.variant));
      }
      if (!(store.get(name).shape() == s)) throw ConfigError("checkpoint parameter '" + name + "' has the wrong shape");
      if (tag == "param") {
        Var p = store.get(name);
        p.mutable_value() = std::move(t);
        loaded[name] = true;
      } else if (tag == "adam_m") {
        ck.state->adam.first_moments()[name] = std::move(t);
      } else {
        ck.state->adam.second_moments()[name] = std::move(t);
      }
    } else {
      throw IoError("checkpoint: unknown manifest entry '" + tag + "'");
    }
  }
  if (!ck.state) throw IoError("checkpoint: manifest has no kind");
  for (const auto& e : ck.state->net->params().entries()) {
    if (!loaded.count(e.name)) throw ConfigError("checkpoint lacks parameter '" + e.name + "'");
  }
  ck.state->adam.set_steps(adam_steps);
  return ck;
}

std::unique_ptr<Predictor> Checkpoint::predictor() const {
  if (kind == CheckpointKind::oracle_stub) return std::make_unique<OracleStubPredictor>();
  return std::make_unique<NetworkPredictor>(*state->net);
}

void require_variant(const Checkpoint& ckpt, Variant expected) {
  if (ckpt.config.train.variant != expected) {
    throw ConfigError("checkpoint variant " + to_string(ckpt.config.train.variant) + " does not match requested " +
                      to_string(expected));
  }
}

// ---------------------------------------------------------------------------
// Evaluation

EvalResult evaluate(const Predictor& predictor, const std::vector<VideoSample>& data, std::size_t batch_size) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (batch_size == 0) batch_size = 1;
  EvalResult r;
  MetricAccumulator acc;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - start);
    const Batch b = Batch::from_samples(std::span<const VideoSample>(data.data() + start, count));
    const Prediction p = predictor.predict(b);
    for (std::size_t n = 0; n < count; ++n) {
      acc.add(p.s_f.item(n), b.masks.item(n));
      r.sequence.push_back(data[start + n].sequence);
      r.index.push_back(data[start + n].index);
      if (!p.eps.empty()) r.reliability.push_back({p.eps.at(n, 0, 0, 0), p.eps.at(n, 1, 0, 0)});
    }
  }
  r.metrics = acc.report();
  return r;
}

void write_eval_csv(std::ostream& out, const EvalResult& r) {
  const auto& m = r.metrics;
  const auto f = m.curve.f_measures();
  char buf[160];
  out << "# maxF from the dataset-mean PR curve (P and R averaged over frames, then F with beta^2 = 0.3)\n";
  out << "row,threshold,precision,recall,f_measure,mae,max_f,s_measure,frames\n";
  for (std::size_t t = 0; t < kThresholds; ++t) {
    std::snprintf(buf, sizeof buf, "pr,%d,%.10g,%.10g,%.10g,,,,\n", m.curve.thresholds[t], m.curve.precision[t],
                  m.curve.recall[t], f[t]);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "summary,,,,,%.10g,%.10g,%.10g,%zu\n", m.mae, m.max_f, m.s_measure, m.frames);
  out << buf;
}

void write_reliability_csv(std::ostream& out, const EvalResult& r) {
  out << "sample,sequence,index,eps_s,eps_t\n";
  char buf[128];
  for (std::size_t i = 0; i < r.reliability.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%d,%d,%.10g,%.10g\n", i, r.sequence[i], r.index[i], r.reliability[i].eps_s,
                  r.reliability[i].eps_t);
    out << buf;
  }
}

std::string pr_curve_svg(const PrCurve& curve, const std::string& title) {
  constexpr double size = 400.0;
  constexpr double margin = 50.0;
  std::ostringstream o;
  char buf[96];
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin << "\" height=\"" << size + 2 * margin
    << "\">\n"
    << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size << "\" height=\"" << size
    << "\" fill=\"none\" stroke=\"black\"/>\n"
    << "<text x=\"" << margin << "\" y=\"" << margin / 2 << "\" font-size=\"14\">" << title << "</text>\n"
    << "<text x=\"" << margin + size / 2 << "\" y=\"" << size + 1.7 * margin << "\" font-size=\"12\">recall</text>\n"
    << "<text x=\"10\" y=\"" << margin + size / 2 << "\" font-size=\"12\">precision</text>\n"
    << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t t = 0; t < kThresholds; ++t) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f ", margin + curve.recall[t] * size,
                  margin + (1.0 - curve.precision[t]) * size);
    o << buf;
  }
  o << "\"/>\n</svg>\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Ablations

std::vector<Variant> ablation_family(const std::string& name) {
  if (name == "baseline") return {Variant::m1_spatial, Variant::m2_temporal, Variant::m3_sum, Variant::proposed};
  if (name == "dwg") return {Variant::dwg_sep, Variant::dwg_fc, Variant::proposed};
  if (name == "caa") return {Variant::caa_wos, Variant::caa_won, Variant::caa_bu, Variant::proposed};
  if (name == "head") return {Variant::m_ss, Variant::m_aggs, Variant::m_woatt, Variant::proposed};
  throw ConfigError("unknown ablation family '" + name + "'; valid families: baseline, dwg, caa, head");
}

const std::vector<double>& default_tau_sweep() {
  static const std::vector<double> taus{0.2, 0.4, 0.6, 0.8, 1.0};
  return taus;
}

namespace {

AblationRow run_one(const RunConfig& cfg, const std::string& label, const std::vector<VideoSample>& train_data,
                    const std::vector<VideoSample>& eval_data) {
  const auto state = train(cfg, train_data);
  const NetworkPredictor predictor(*state->net);
  const EvalResult e = evaluate(predictor, eval_data, static_cast<std::size_t>(cfg.train.batch_size));
  AblationRow row;
  row.label = label;
  row.variant = cfg.train.variant;
  row.tau = cfg.train.tau;
  row.metrics = e.metrics;
  for (const auto& r : e.reliability) {
    row.mean_eps_s += r.eps_s;
    row.mean_eps_t += r.eps_t;
  }
  if (!e.reliability.empty()) {
    row.mean_eps_s /= static_cast<double>(e.reliability.size());
    row.mean_eps_t /= static_cast<double>(e.reliability.size());
  }
  return row;
}

}  // namespace

std::vector<AblationRow> ablate(const RunConfig& base, const std::vector<Variant>& variants,
                                const std::vector<VideoSample>& train_data, const std::vector<VideoSample>& eval_data,
                                const ProgressFn& progress) {
  std::vector<AblationRow> rows;
  for (Variant v : variants) {
    RunConfig cfg = base;
    cfg.train.variant = v;
    if (progress) progress("training " + to_string(v));
    rows.push_back(run_one(cfg, to_string(v), train_data, eval_data));
  }
  return rows;
}

std::vector<AblationRow> sweep_tau(const RunConfig& base, const std::vector<double>& taus,
                                   const std::vector<VideoSample>& train_data,
                                   const std::vector<VideoSample>& eval_data, const ProgressFn& progress) {
  std::vector<AblationRow> rows;
  for (double tau : taus) {
    RunConfig cfg = base;
    cfg.train.tau = tau;
    char label[32];
    std::snprintf(label, sizeof label, "tau=%.2f", tau);
    if (progress) progress(std::string("training ") + label);
    rows.push_back(run_one(cfg, label, train_data, eval_data));
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "label,variant,tau,max_f,s_measure,mae,mean_eps_s,mean_eps_t\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.4g,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.label.c_str(),
                  to_string(r.variant).c_str(), r.tau, r.metrics.max_f, r.metrics.s_measure, r.metrics.mae,
                  r.mean_eps_s, r.mean_eps_t);
    out << buf;
  }
}

}  // namespace dsnet
