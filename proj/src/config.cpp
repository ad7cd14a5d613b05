#include "dsnet/config.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "dsnet/tensor_io.hpp"

namespace dsnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long r = 0;
  try {
    r = std::stol(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError("'" + key + "': expected an integer, got '" + v + "'");
  return static_cast<int>(r);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long r = 0;
  try {
    r = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || v[0] == '-') {
    throw ConfigError("'" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return r;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double r = 0.0;
  try {
    r = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || !std::isfinite(r)) {
    throw ConfigError("'" + key + "': expected a finite number, got '" + v + "'");
  }
  return r;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k{"height",       "width",  "lr",        "dwg_lr_scale", "dwg_warmup", "weight_decay", "beta1",
                                          "beta2",        "adam_eps", "batch_size", "iterations", "tau",
                                          "seed",         "variant", "static_ratio", "reliability_source",
                                          "temporal_input"};
  return k;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  const std::string full = "train." + key;
  if (key == "height") height = to_int(full, v);
  else if (key == "width") width = to_int(full, v);
  else if (key == "lr") lr = to_double(full, v);
  else if (key == "dwg_lr_scale") dwg_lr_scale = to_double(full, v);
  else if (key == "dwg_warmup") dwg_warmup = to_int(full, v);
  else if (key == "weight_decay") weight_decay = to_double(full, v);
  else if (key == "beta1") beta1 = to_double(full, v);
  else if (key == "beta2") beta2 = to_double(full, v);
  else if (key == "adam_eps") adam_eps = to_double(full, v);
  else if (key == "batch_size") batch_size = to_int(full, v);
  else if (key == "iterations") iterations = to_int(full, v);
  else if (key == "tau") tau = to_double(full, v);
  else if (key == "seed") seed = to_u64(full, v);
  else if (key == "variant") variant = parse_variant(v);
  else if (key == "static_ratio") static_ratio = to_double(full, v);
  else if (key == "reliability_source") {
    if (v == "v") reliability = ReliabilitySource::normalized;
    else if (v == "u") reliability = ReliabilitySource::gated;
    else throw ConfigError("'" + full + "': expected v or u, got '" + v + "'");
  } else if (key == "temporal_input") {
    if (v == "color") temporal_input = TemporalInput::color;
    else if (v == "field") temporal_input = TemporalInput::field;
    else throw ConfigError("'" + full + "': expected color or field, got '" + v + "'");
  } else {
    throw ConfigError("unknown key '" + full + "'");
  }
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train: " + m); };
  if (height <= 0 || width <= 0 || height % 8 != 0 || width % 8 != 0) {
    fail("height and width must be positive multiples of 8");
  }
  if (lr < 0.0) fail("lr must be non-negative");
  if (dwg_lr_scale < 0.0) fail("dwg_lr_scale must be non-negative");
  if (dwg_warmup < 0) fail("dwg_warmup must be non-negative");
  if (weight_decay < 0.0) fail("weight_decay must be non-negative");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) fail("beta1 and beta2 must lie in [0, 1)");
  if (adam_eps <= 0.0) fail("adam_eps must be positive");
  if (batch_size <= 0) fail("batch_size must be positive");
  if (iterations < 0) fail("iterations must be non-negative");
  if (tau < 0.0 || tau > 1.0) fail("tau must lie in [0, 1]");
  if (static_ratio < 0.0 || static_ratio > 1.0) fail("static_ratio must lie in [0, 1]");
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.tau = tau;
  m.reliability = reliability;
  m.temporal_input = temporal_input;
  return m;
}

std::vector<std::string> RunConfig::valid_keys() {
  std::vector<std::string> out;
  for (const auto& k : SceneConfig::keys()) out.push_back("scene." + k);
  for (const auto& k : TrainConfig::keys()) out.push_back("train." + k);
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto unknown = [&] {
    std::string valid;
    for (const auto& k : valid_keys()) valid += (valid.empty() ? "" : ", ") + k;
    return ConfigError("unknown key '" + key + "'; valid keys: " + valid);
  };
  const auto dot = key.find('.');
  if (dot == std::string::npos) throw unknown();
  const std::string section = key.substr(0, dot);
  const std::string rest = key.substr(dot + 1);
  try {
    if (section == "scene") scene.set(rest, value);
    else if (section == "train") train.set(rest, value);
    else throw unknown();
  } catch (const ConfigError& e) {
    if (std::string(e.what()).rfind("unknown key", 0) == 0) throw unknown();
    throw;
  }
}

void RunConfig::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    set(section.empty() ? key : section + "." + key, t.substr(eq + 1));
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  apply_text(std::string(bytes.begin(), bytes.end()));
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "': expected key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::validate() const {
  scene.validate();
  train.validate();
}

std::string RunConfig::to_text() const {
  std::ostringstream o;
  o << scene.to_text();
  const auto& t = train;
  o << "train.height = " << t.height << "\n"
    << "train.width = " << t.width << "\n"
    << "train.lr = " << fmt(t.lr) << "\n"
    << "train.dwg_lr_scale = " << fmt(t.dwg_lr_scale) << "\n"
    << "train.dwg_warmup = " << t.dwg_warmup << "\n"
    << "train.weight_decay = " << fmt(t.weight_decay) << "\n"
    << "train.beta1 = " << fmt(t.beta1) << "\n"
    << "train.beta2 = " << fmt(t.beta2) << "\n"
    << "train.adam_eps = " << fmt(t.adam_eps) << "\n"
    << "train.batch_size = " << t.batch_size << "\n"
    << "train.iterations = " << t.iterations << "\n"
    << "train.tau = " << fmt(t.tau) << "\n"
    << "train.seed = " << t.seed << "\n"
    << "train.variant = " << to_string(t.variant) << "\n"
    << "train.static_ratio = " << fmt(t.static_ratio) << "\n"
    << "train.reliability_source = " << (t.reliability == ReliabilitySource::normalized ? "v" : "u") << "\n"
    << "train.temporal_input = " << (t.temporal_input == TemporalInput::color ? "color" : "field") << "\n";
  return o.str();
}

}  // namespace dsnet
