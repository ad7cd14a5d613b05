#include "dsnet/data_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "dsnet/rng.hpp"
#include "dsnet/tensor_io.hpp"

namespace dsnet {

namespace fs = std::filesystem;

VideoSample make_static_sample(const VideoSample& s) {
  VideoSample out = s;
  out.flow_field.fill(0.0);
  out.flow_image.fill(0.0);
  return out;
}

// ---------------------------------------------------------------------------
// Scene configuration

std::string to_string(ObjectShape s) { return s == ObjectShape::square ? "square" : "disk"; }

ObjectShape parse_object_shape(const std::string& s) {
  if (s == "square") return ObjectShape::square;
  if (s == "disk") return ObjectShape::disk;
  throw ConfigError("unknown object shape '" + s + "' (expected square or disk)");
}

namespace {

int parse_int(const std::string& key, const std::string& v) {
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

double parse_double(const std::string& key, const std::string& v) {
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

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

ObjectSpec parse_object(const std::string& key, const std::string& v) {
  std::vector<std::string> parts;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  if (parts.size() != 6) throw ConfigError("'" + key + "': expected shape,size,x,y,vx,vy, got '" + v + "'");
  ObjectSpec o;
  o.shape = parse_object_shape(parts[0]);
  o.size = parse_int(key, parts[1]);
  o.x = parse_int(key, parts[2]);
  o.y = parse_int(key, parts[3]);
  o.vx = parse_int(key, parts[4]);
  o.vy = parse_int(key, parts[5]);
  return o;
}

}  // namespace

const std::vector<std::string>& SceneConfig::keys() {
  static const std::vector<std::string> k{"height",    "width",     "sequences", "length",    "objects",
                                          "shape",     "size_min",  "size_max",  "speed_min", "speed_max",
                                          "contrast",  "clutter",   "camera_dx", "camera_dy", "flow_noise",
                                          "seed",      "object.N"};
  return k;
}

void SceneConfig::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "height") height = parse_int(key, v);
  else if (key == "width") width = parse_int(key, v);
  else if (key == "sequences") sequences = parse_int(key, v);
  else if (key == "length") length = parse_int(key, v);
  else if (key == "objects") objects = parse_int(key, v);
  else if (key == "shape") shape = parse_object_shape(v);
  else if (key == "size_min") size_min = parse_int(key, v);
  else if (key == "size_max") size_max = parse_int(key, v);
  else if (key == "speed_min") speed_min = parse_int(key, v);
  else if (key == "speed_max") speed_max = parse_int(key, v);
  else if (key == "contrast") contrast = parse_double(key, v);
  else if (key == "clutter") clutter = parse_double(key, v);
  else if (key == "camera_dx") camera_dx = parse_int(key, v);
  else if (key == "camera_dy") camera_dy = parse_int(key, v);
  else if (key == "flow_noise") flow_noise = parse_double(key, v);
  else if (key == "seed") seed = static_cast<std::uint64_t>(std::stoull(v));
  else if (key.rfind("object.", 0) == 0) {
    const int idx = parse_int(key, key.substr(7));
    if (idx != static_cast<int>(explicit_objects.size())) {
      throw ConfigError("'" + key + "': explicit objects must be numbered 0, 1, ... in order");
    }
    explicit_objects.push_back(parse_object(key, v));
  } else {
    std::string valid;
    for (const auto& k : keys()) valid += (valid.empty() ? "" : ", ") + std::string("scene.") + k;
    throw ConfigError("unknown key 'scene." + key + "'; valid keys: " + valid);
  }
}

std::string SceneConfig::to_text() const {
  std::ostringstream o;
  o << "scene.height = " << height << "\n"
    << "scene.width = " << width << "\n"
    << "scene.sequences = " << sequences << "\n"
    << "scene.length = " << length << "\n"
    << "scene.objects = " << objects << "\n"
    << "scene.shape = " << to_string(shape) << "\n"
    << "scene.size_min = " << size_min << "\n"
    << "scene.size_max = " << size_max << "\n"
    << "scene.speed_min = " << speed_min << "\n"
    << "scene.speed_max = " << speed_max << "\n"
    << "scene.contrast = " << fmt_double(contrast) << "\n"
    << "scene.clutter = " << fmt_double(clutter) << "\n"
    << "scene.camera_dx = " << camera_dx << "\n"
    << "scene.camera_dy = " << camera_dy << "\n"
    << "scene.flow_noise = " << fmt_double(flow_noise) << "\n"
    << "scene.seed = " << seed << "\n";
  for (std::size_t i = 0; i < explicit_objects.size(); ++i) {
    const auto& ob = explicit_objects[i];
    o << "scene.object." << i << " = " << to_string(ob.shape) << "," << ob.size << "," << ob.x << "," << ob.y << ","
      << ob.vx << "," << ob.vy << "\n";
  }
  return o.str();
}

SceneConfig SceneConfig::from_text(const std::string& text) {
  SceneConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("scene config line " + std::to_string(lineno) + ": missing '='");
    std::string key = trim(t.substr(0, eq));
    if (key.rfind("scene.", 0) == 0) key = key.substr(6);
    cfg.set(key, t.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void SceneConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("scene: " + m); };
  if (height <= 0 || width <= 0) fail("height and width must be positive");
  if (sequences <= 0 || length <= 0) fail("sequences and length must be positive");
  if (objects < 0) fail("objects must be non-negative");
  if (size_min <= 0 || size_max < size_min) fail("need 0 < size_min <= size_max");
  if (speed_min < 0 || speed_max < speed_min) fail("need 0 <= speed_min <= speed_max");
  if (contrast < 0.0 || contrast > 1.0) fail("contrast must lie in [0, 1]");
  if (clutter < 0.0) fail("clutter must be non-negative");
  if (flow_noise < 0.0) fail("flow_noise must be non-negative");
  for (const auto& o : explicit_objects) {
    if (o.size <= 0) fail("explicit object size must be positive");
  }
}

SceneConfig SceneConfig::regime_a() {
  SceneConfig c;
  c.contrast = 0.9;
  c.clutter = 0.05;
  c.flow_noise = 3.5;
  c.seed = 101;
  return c;
}

SceneConfig SceneConfig::regime_b() {
  SceneConfig c;
  c.contrast = 0.05;
  c.clutter = 0.6;
  c.flow_noise = 0.0;
  c.camera_dx = 1;
  c.seed = 202;
  return c;
}

// ---------------------------------------------------------------------------
// Scene synthesis

namespace {

constexpr int kWaves = 3;

// Sum of plane waves per channel, in [-1, 1].
struct Texture {
  std::array<std::array<double, 4>, 3 * kWaves> waves{};  // fx, fy, phase, amplitude

  static Texture draw(Rng& rng) {
    Texture t;
    for (auto& w : t.waves) {
      w[0] = rng.uniform(-0.9, 0.9);
      w[1] = rng.uniform(-0.9, 0.9);
      w[2] = rng.uniform(0.0, 6.283185307179586);
      w[3] = rng.uniform(0.5, 1.0);
    }
    return t;
  }

  double operator()(std::size_t channel, double x, double y) const {
    double acc = 0.0;
    double norm = 0.0;
    for (int k = 0; k < kWaves; ++k) {
      const auto& w = waves[channel * kWaves + k];
      acc += w[3] * std::sin(w[0] * x + w[1] * y + w[2]);
      norm += w[3];
    }
    return acc / norm;
  }
};

struct PlacedObject {
  ObjectSpec spec;
  std::array<double, 3> color{};
  Texture texture;
};

bool covers(const ObjectSpec& o, int lx, int ly) {
  if (lx < 0 || ly < 0 || lx >= o.size || ly >= o.size) return false;
  if (o.shape == ObjectShape::square) return true;
  const double c = (o.size - 1) / 2.0;
  const double r = o.size / 2.0;
  return (lx - c) * (lx - c) + (ly - c) * (ly - c) <= r * r;
}

void check_in_frame(const ObjectSpec& o, const SceneConfig& cfg) {
  if (o.size > cfg.width || o.size > cfg.height) {
    throw ConfigError("scene: object of size " + std::to_string(o.size) + " is larger than the " +
                      std::to_string(cfg.width) + "x" + std::to_string(cfg.height) + " frame");
  }
  const int steps = cfg.length - 1;
  for (int t : {0, steps}) {
    const int x = o.x + o.vx * t;
    const int y = o.y + o.vy * t;
    if (x < 0 || y < 0 || x + o.size > cfg.width || y + o.size > cfg.height) {
      throw ConfigError("scene: object leaves the frame by frame " + std::to_string(t));
    }
  }
}

int start_range(int extent, int size, int travel, Rng& rng) {
  const int lo = std::max(0, -travel);
  const int hi = std::min(extent - size, extent - size - travel);
  if (hi < lo) return -1;
  return static_cast<int>(rng.integer(lo, hi));
}

ObjectSpec draw_object(const SceneConfig& cfg, Rng& rng) {
  ObjectSpec o;
  o.shape = cfg.shape;
  o.size = static_cast<int>(rng.integer(cfg.size_min, cfg.size_max));
  if (o.size > cfg.width || o.size > cfg.height) {
    throw ConfigError("scene: object of size " + std::to_string(o.size) + " is larger than the frame");
  }
  for (int attempt = 0; attempt < 64; ++attempt) {
    const int sx = rng.integer(0, 1) ? 1 : -1;
    const int sy = rng.integer(0, 1) ? 1 : -1;
    o.vx = sx * static_cast<int>(rng.integer(cfg.speed_min, cfg.speed_max));
    o.vy = sy * static_cast<int>(rng.integer(cfg.speed_min, cfg.speed_max));
    const bool camera_like = o.vx == cfg.camera_dx && o.vy == cfg.camera_dy;
    if (camera_like && (cfg.speed_max > 0 || cfg.camera_dx != 0 || cfg.camera_dy != 0) && attempt < 63) continue;
    const int steps = cfg.length - 1;
    const int x = start_range(cfg.width, o.size, o.vx * steps, rng);
    const int y = start_range(cfg.height, o.size, o.vy * steps, rng);
    if (x < 0 || y < 0) continue;
    o.x = x;
    o.y = y;
    return o;
  }
  throw ConfigError("scene: cannot keep an object of size " + std::to_string(o.size) + " in frame for " +
                    std::to_string(cfg.length) + " frames at the configured speeds");
}

double quantize8(double v) {
  const double c = std::min(1.0, std::max(0.0, v));
  return std::round(c * 255.0) / 255.0;
}

}  // namespace

std::vector<VideoSample> gen_sequence(const SceneConfig& cfg, int sequence_index) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(sequence_index)));
  const auto H = static_cast<std::size_t>(cfg.height);
  const auto W = static_cast<std::size_t>(cfg.width);

  std::array<double, 3> base{};
  for (auto& b : base) b = rng.uniform(0.2, 0.8);
  const Texture bg_texture = Texture::draw(rng);

  std::vector<PlacedObject> objects;
  const int count = cfg.explicit_objects.empty() ? cfg.objects : static_cast<int>(cfg.explicit_objects.size());
  for (int k = 0; k < count; ++k) {
    PlacedObject p;
    p.spec = cfg.explicit_objects.empty() ? draw_object(cfg, rng) : cfg.explicit_objects[k];
    check_in_frame(p.spec, cfg);
    for (std::size_t c = 0; c < 3; ++c) {
      const double sign = base[c] < 0.5 ? 1.0 : -1.0;
      p.color[c] = base[c] + sign * cfg.contrast * 0.6;
    }
    p.texture = Texture::draw(rng);
    objects.push_back(p);
  }

  std::vector<VideoSample> seq;
  for (int t = 0; t < cfg.length; ++t) {
    VideoSample s;
    s.sequence = sequence_index;
    s.index = t;
    s.frame = Tensor(Shape{1, 3, H, W});
    s.flow_field = Tensor(Shape{1, 2, H, W});
    s.mask = Tensor(Shape{1, 1, H, W});
    Rng noise(derive_seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(sequence_index)), 1000 + t));
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const double wx = static_cast<double>(x) - cfg.camera_dx * t;
        const double wy = static_cast<double>(y) - cfg.camera_dy * t;
        std::array<double, 3> rgb{};
        for (std::size_t c = 0; c < 3; ++c) rgb[c] = base[c] + 0.5 * cfg.clutter * bg_texture(c, wx, wy);
        double u = cfg.camera_dx;
        double v = cfg.camera_dy;
        // Later objects are drawn on top.
        for (const auto& o : objects) {
          const int lx = static_cast<int>(x) - (o.spec.x + o.spec.vx * t);
          const int ly = static_cast<int>(y) - (o.spec.y + o.spec.vy * t);
          if (!covers(o.spec, lx, ly)) continue;
          for (std::size_t c = 0; c < 3; ++c) rgb[c] = o.color[c] + 0.5 * cfg.clutter * o.texture(c, lx, ly);
          u = o.spec.vx;
          v = o.spec.vy;
          s.mask.at(0, 0, y, x) = 1.0;
        }
        for (std::size_t c = 0; c < 3; ++c) s.frame.at(0, c, y, x) = quantize8(rgb[c]);
        if (cfg.flow_noise > 0.0) {
          u += cfg.flow_noise * noise.normal();
          v += cfg.flow_noise * noise.normal();
        }
        s.flow_field.at(0, 0, y, x) = static_cast<float>(u);
        s.flow_field.at(0, 1, y, x) = static_cast<float>(v);
      }
    }
    s.flow_image = render_flow_color(s.flow_field);
    seq.push_back(std::move(s));
  }
  return seq;
}

std::vector<VideoSample> gen_dataset(const SceneConfig& cfg) {
  std::vector<VideoSample> all;
  for (int s = 0; s < cfg.sequences; ++s) {
    auto seq = gen_sequence(cfg, s);
    for (auto& v : seq) all.push_back(std::move(v));
  }
  return all;
}

// ---------------------------------------------------------------------------
// Flow color wheel

namespace {

std::vector<std::array<int, 3>> make_color_wheel() {
  constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
  std::vector<std::array<int, 3>> w;
  for (int i = 0; i < RY; ++i) w.push_back({255, 255 * i / RY, 0});
  for (int i = 0; i < YG; ++i) w.push_back({255 - 255 * i / YG, 255, 0});
  for (int i = 0; i < GC; ++i) w.push_back({0, 255, 255 * i / GC});
  for (int i = 0; i < CB; ++i) w.push_back({0, 255 - 255 * i / CB, 255});
  for (int i = 0; i < BM; ++i) w.push_back({255 * i / BM, 0, 255});
  for (int i = 0; i < MR; ++i) w.push_back({255, 0, 255 - 255 * i / MR});
  return w;
}

}  // namespace

std::array<std::uint8_t, 3> flow_color(double u, double v) {
  static const auto wheel = make_color_wheel();
  const auto ncols = static_cast<int>(wheel.size());
  u += 0.0;  // fold -0.0 into +0.0 so the angle of (+1, 0) is exactly -pi
  v += 0.0;
  const double rad = std::min(1.0, std::sqrt(u * u + v * v));
  const double a = std::atan2(-v, -u) / 3.14159265358979323846;
  const double fk = (a + 1.0) / 2.0 * (ncols - 1);
  const int k0 = static_cast<int>(fk);
  const int k1 = (k0 + 1) % ncols;
  const double f = fk - k0;
  std::array<std::uint8_t, 3> out{};
  for (int b = 0; b < 3; ++b) {
    const double col0 = wheel[k0][b] / 255.0;
    const double col1 = wheel[k1][b] / 255.0;
    double col = (1.0 - f) * col0 + f * col1;
    col = 1.0 - rad * (1.0 - col);
    out[b] = static_cast<std::uint8_t>(static_cast<int>(255.0 * col));
  }
  return out;
}

Tensor render_flow_color(const Tensor& flow) {
  const Shape s = flow.shape();
  if (s.n != 1 || s.c != 2) throw ShapeError("render_flow_color: expected (1, 2, H, W), got " + s.str());
  double max_rad = 0.0;
  for (std::size_t i = 0; i < s.plane(); ++i) {
    const double u = flow.plane(0, 0)[i];
    const double v = flow.plane(0, 1)[i];
    if (!std::isfinite(u) || !std::isfinite(v)) throw NumericError("render_flow_color: non-finite flow");
    max_rad = std::max(max_rad, std::sqrt(u * u + v * v));
  }
  const double norm = max_rad > 0.0 ? max_rad : 1.0;
  Tensor out(Shape{1, 3, s.h, s.w});
  for (std::size_t i = 0; i < s.plane(); ++i) {
    const auto rgb = flow_color(flow.plane(0, 0)[i] / norm, flow.plane(0, 1)[i] / norm);
    for (std::size_t c = 0; c < 3; ++c) out.plane(0, c)[i] = rgb[c] / 255.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// .flo

namespace {

constexpr float kFloMagic = 202021.25f;

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_flo(const Tensor& flow) {
  const Shape s = flow.shape();
  if (s.n != 1 || s.c != 2) throw ShapeError("write_flo: expected (1, 2, H, W), got " + s.str());
  std::vector<std::uint8_t> b;
  b.reserve(12 + 8 * s.plane());
  put_u32(b, std::bit_cast<std::uint32_t>(kFloMagic));
  put_u32(b, static_cast<std::uint32_t>(s.w));
  put_u32(b, static_cast<std::uint32_t>(s.h));
  for (std::size_t i = 0; i < s.plane(); ++i) {
    put_u32(b, std::bit_cast<std::uint32_t>(static_cast<float>(flow.plane(0, 0)[i])));
    put_u32(b, std::bit_cast<std::uint32_t>(static_cast<float>(flow.plane(0, 1)[i])));
  }
  return b;
}

Tensor decode_flo(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || std::bit_cast<float>(get_u32(bytes, 0)) != kFloMagic) {
    throw IoError("not a flow file");
  }
  const auto w = static_cast<std::int32_t>(get_u32(bytes, 4));
  const auto h = static_cast<std::int32_t>(get_u32(bytes, 8));
  if (w < 0 || h < 0) throw IoError("flow file: negative dimensions");
  const std::size_t expected = 12 + 8 * static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() != expected) {
    throw IoError("flow file: expected " + std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
  }
  Tensor flow(Shape{1, 2, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (std::size_t i = 0; i < flow.shape().plane(); ++i) {
    flow.plane(0, 0)[i] = std::bit_cast<float>(get_u32(bytes, 12 + 8 * i));
    flow.plane(0, 1)[i] = std::bit_cast<float>(get_u32(bytes, 16 + 8 * i));
  }
  return flow;
}

void write_flo(const Tensor& flow, const fs::path& path) { write_file_bytes(path, encode_flo(flow)); }
Tensor read_flo(const fs::path& path) { return decode_flo(read_file_bytes(path)); }

// ---------------------------------------------------------------------------
// PGM

std::vector<std::uint8_t> encode_pgm(const Image8& img) {
  if (img.channels != 1) throw IoError("PGM: only single-channel images are supported");
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> b(header.begin(), header.end());
  b.insert(b.end(), img.pixels.begin(), img.pixels.end());
  return b;
}

Image8 decode_pgm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_number = [&]() -> std::size_t {
    skip_space();
    std::size_t v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw IoError("PGM: malformed header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw IoError("PGM: not a binary (P5) graymap");
  pos = 2;
  Image8 img;
  img.width = read_number();
  img.height = read_number();
  const std::size_t maxval = read_number();
  if (maxval != 255) throw IoError("PGM: unsupported bit depth (maxval " + std::to_string(maxval) + ")");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw IoError("PGM: malformed header");
  ++pos;
  const std::size_t expected = img.width * img.height;
  if (bytes.size() - pos != expected) {
    throw IoError("PGM: expected " + std::to_string(expected) + " pixel bytes, got " +
                  std::to_string(bytes.size() - pos));
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

// ---------------------------------------------------------------------------
// PNG (libpng, in-memory)

namespace {

struct PngError {
  char message[256] = "";
};

void png_error_cb(png_structp png, png_const_charp msg) {
  auto* e = static_cast<PngError*>(png_get_error_ptr(png));
  std::snprintf(e->message, sizeof e->message, "%s", msg);
  png_longjmp(png, 1);
}

void png_warning_cb(png_structp, png_const_charp) {}

void png_write_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void png_flush_cb(png_structp) {}

struct PngReader {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

void png_read_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* r = static_cast<PngReader*>(png_get_io_ptr(png));
  if (r->pos + len > r->bytes->size()) png_error(png, "truncated PNG data");
  std::memcpy(data, r->bytes->data() + r->pos, len);
  r->pos += len;
}

// Returns false on libpng error; kept free of objects with destructors so
// the longjmp is safe.
bool png_encode_raw(const Image8& img, std::vector<std::uint8_t>* out, std::vector<png_bytep>* rows, PngError* err) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, err, png_error_cb, png_warning_cb);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, out, png_write_cb, png_flush_cb);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_rows(png, info, rows->data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

bool png_decode_raw(PngReader* reader, Image8* img, PngError* err) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, err, png_error_cb, png_warning_cb);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, reader, png_read_cb);
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int type = png_get_color_type(png, info);
  if (depth != 8) {
    std::snprintf(err->message, sizeof err->message, "unsupported bit depth %d", depth);
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  if (type != PNG_COLOR_TYPE_GRAY && type != PNG_COLOR_TYPE_RGB) {
    std::snprintf(err->message, sizeof err->message, "unsupported color type %d", type);
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  img->width = png_get_image_width(png, info);
  img->height = png_get_image_height(png, info);
  img->channels = type == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  img->pixels.resize(img->width * img->height * img->channels);
  for (std::size_t r = 0; r < img->height; ++r) {
    png_read_row(png, img->pixels.data() + r * img->width * img->channels, nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw IoError("PNG: only gray or RGB images are supported");
  if (img.pixels.size() != img.width * img.height * img.channels) throw IoError("PNG: pixel buffer size mismatch");
  std::vector<png_bytep> rows(img.height);
  auto* base = const_cast<std::uint8_t*>(img.pixels.data());
  for (std::size_t r = 0; r < img.height; ++r) rows[r] = base + r * img.width * img.channels;
  std::vector<std::uint8_t> out;
  PngError err;
  if (!png_encode_raw(img, &out, &rows, &err)) throw IoError(std::string("PNG encode: ") + err.message);
  return out;
}

Image8 decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw IoError("PNG: bad signature");
  PngReader reader{&bytes, 0};
  Image8 img;
  PngError err;
  if (!png_decode_raw(&reader, &img, &err)) throw IoError(std::string("PNG decode: ") + err.message);
  return img;
}

// ---------------------------------------------------------------------------
// Tensor <-> image

Image8 to_image8(const Tensor& t) {
  const Shape s = t.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) throw ShapeError("to_image8: expected (1, 1|3, H, W), got " + s.str());
  Image8 img;
  img.width = s.w;
  img.height = s.h;
  img.channels = s.c;
  img.pixels.resize(s.numel());
  for (std::size_t y = 0; y < s.h; ++y) {
    for (std::size_t x = 0; x < s.w; ++x) {
      for (std::size_t c = 0; c < s.c; ++c) {
        const double v = std::min(1.0, std::max(0.0, t.at(0, c, y, x)));
        img.pixels[(y * s.w + x) * s.c + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return img;
}

Tensor from_image8(const Image8& img) {
  Tensor t(Shape{1, img.channels, img.height, img.width});
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        t.at(0, c, y, x) = img.pixels[(y * img.width + x) * img.channels + c] / 255.0;
      }
    }
  }
  return t;
}

namespace {

bool is_pgm(const fs::path& p) { return p.extension() == ".pgm"; }

}  // namespace

void write_map(const Tensor& map, const fs::path& path) {
  if (map.shape().c != 1) throw ShapeError("write_map: expected one channel, got " + map.shape().str());
  const Image8 img = to_image8(map);
  write_file_bytes(path, is_pgm(path) ? encode_pgm(img) : encode_png(img));
}

Tensor read_map(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  const Image8 img = is_pgm(path) ? decode_pgm(bytes) : decode_png(bytes);
  if (img.channels != 1) throw IoError(path.string() + ": expected a grayscale map");
  return from_image8(img);
}

Tensor read_mask(const fs::path& path) {
  Tensor m = read_map(path);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = m[i] >= 0.5 ? 1.0 : 0.0;
  return m;
}

void write_frame(const Tensor& frame, const fs::path& path) {
  if (frame.shape().c != 3) throw ShapeError("write_frame: expected three channels, got " + frame.shape().str());
  write_file_bytes(path, encode_png(to_image8(frame)));
}

Tensor read_frame(const fs::path& path) {
  const Image8 img = decode_png(read_file_bytes(path));
  if (img.channels != 3) throw IoError(path.string() + ": expected an RGB frame");
  return from_image8(img);
}

// ---------------------------------------------------------------------------
// Dataset directory

std::string frame_name(std::size_t index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu.%s", index, ext);
  return buf;
}

void write_dataset(const fs::path& dir, const SceneConfig& cfg, const std::vector<VideoSample>& samples) {
  std::error_code ec;
  for (const char* sub : {"frames", "flow", "flow_rgb", "masks"}) {
    fs::create_directories(dir / sub, ec);
    if (ec) throw IoError("cannot create " + (dir / sub).string() + ": " + ec.message());
  }
  const std::string text = cfg.to_text();
  write_file_bytes(dir / "scene.cfg", std::vector<std::uint8_t>(text.begin(), text.end()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    write_frame(s.frame, dir / "frames" / frame_name(i, "png"));
    write_flo(s.flow_field, dir / "flow" / frame_name(i, "flo"));
    write_frame(s.flow_image, dir / "flow_rgb" / frame_name(i, "png"));
    write_map(s.mask, dir / "masks" / frame_name(i, "png"));
  }
}

std::vector<VideoSample> read_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  int length = 0;
  if (fs::exists(dir / "scene.cfg")) {
    const auto bytes = read_file_bytes(dir / "scene.cfg");
    length = SceneConfig::from_text(std::string(bytes.begin(), bytes.end())).length;
  }
  std::vector<VideoSample> out;
  for (std::size_t i = 0;; ++i) {
    const fs::path frame = dir / "frames" / frame_name(i, "png");
    if (!fs::exists(frame)) break;
    VideoSample s;
    s.frame = read_frame(frame);
    s.flow_field = read_flo(dir / "flow" / frame_name(i, "flo"));
    s.flow_image = read_frame(dir / "flow_rgb" / frame_name(i, "png"));
    s.mask = read_mask(dir / "masks" / frame_name(i, "png"));
    const Shape fs_ = s.frame.shape();
    for (const Tensor* t : {&s.flow_field, &s.flow_image, &s.mask}) {
      if (t->shape().h != fs_.h || t->shape().w != fs_.w) {
        throw IoError("dataset item " + std::to_string(i) + ": frame, flow and mask sizes differ");
      }
    }
    s.sequence = length > 0 ? static_cast<int>(i) / length : 0;
    s.index = length > 0 ? static_cast<int>(i) % length : static_cast<int>(i);
    out.push_back(std::move(s));
  }
  if (out.empty()) throw IoError("dataset directory has no frames: " + dir.string());
  return out;
}

}  // namespace dsnet
