#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dsnet/errors.hpp"
#include "dsnet/tensor.hpp"

namespace dsnet {

/// One training/eval item. All tensors have batch 1 and share (H, W).
struct VideoSample {
  Tensor frame;       // (1, 3, H, W) RGB in [0, 1], multiples of 1/255
  Tensor flow_field;  // (1, 2, H, W) pixels/frame, float32-representable
  Tensor flow_image;  // (1, 3, H, W) color rendering in [0, 1]
  Tensor mask;        // (1, 1, H, W) in {0, 1}
  int sequence = 0;
  int index = 0;
};

/// Copy of `s` with a zero flow field and a zero-filled flow image.
VideoSample make_static_sample(const VideoSample& s);

enum class ObjectShape { square, disk };

/// An object placed explicitly: `x`, `y` is the top-left corner at frame 0.
struct ObjectSpec {
  ObjectShape shape = ObjectShape::disk;
  int size = 16;
  int x = 0;
  int y = 0;
  int vx = 0;
  int vy = 0;
};

struct SceneConfig {
  int height = 64;
  int width = 64;
  int sequences = 4;
  int length = 8;
  int objects = 1;
  ObjectShape shape = ObjectShape::disk;
  int size_min = 18;
  int size_max = 26;
  int speed_min = 1;
  int speed_max = 3;
  double contrast = 0.8;
  double clutter = 0.1;
  int camera_dx = 0;
  int camera_dy = 0;
  double flow_noise = 0.0;
  std::uint64_t seed = 1;
  /// When non-empty, replaces the random object draw in every sequence.
  std::vector<ObjectSpec> explicit_objects;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;

  /// Noisy flow, easy appearance.
  static SceneConfig regime_a();
  /// Clean flow, hard appearance.
  static SceneConfig regime_b();

  /// `scene.key = value` lines.
  std::string to_text() const;
  /// Applies one `key = value` setting (key without the `scene.` prefix).
  void set(const std::string& key, const std::string& value);
  static const std::vector<std::string>& keys();
  static SceneConfig from_text(const std::string& text);
};

std::string to_string(ObjectShape s);
ObjectShape parse_object_shape(const std::string& s);

/// Deterministic sequence `sequence_index` of the scene.
std::vector<VideoSample> gen_sequence(const SceneConfig& cfg, int sequence_index = 0);
/// All `cfg.sequences` sequences, concatenated.
std::vector<VideoSample> gen_dataset(const SceneConfig& cfg);

/// Middlebury color-wheel rendering with per-frame magnitude normalization
/// (normalizer 1 when the maximum magnitude is 0). (1, 2, H, W) -> (1, 3, H, W).
Tensor render_flow_color(const Tensor& flow);
/// Color of one normalized flow vector (|(u, v)| <= 1).
std::array<std::uint8_t, 3> flow_color(double u, double v);

// Middlebury .flo: float 202021.25, int32 width, int32 height, then
// interleaved (u, v) float32, all little-endian.
std::vector<std::uint8_t> encode_flo(const Tensor& flow);
Tensor decode_flo(const std::vector<std::uint8_t>& bytes);
void write_flo(const Tensor& flow, const std::filesystem::path& path);
Tensor read_flo(const std::filesystem::path& path);

/// Interleaved 8-bit image, 1 (gray) or 3 (RGB) channels.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const Image8&, const Image8&) = default;
};

std::vector<std::uint8_t> encode_pgm(const Image8& img);
Image8 decode_pgm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const Image8& img);
Image8 decode_png(const std::vector<std::uint8_t>& bytes);

/// (1, C, H, W) in [0, 1] -> 8-bit, round(v * 255) after clamping.
Image8 to_image8(const Tensor& t);
/// 8-bit -> (1, C, H, W) with values v / 255.
Tensor from_image8(const Image8& img);

/// Grayscale map; format chosen by extension (.pgm or .png).
void write_map(const Tensor& map, const std::filesystem::path& path);
Tensor read_map(const std::filesystem::path& path);
/// Binary mask: read_map thresholded at 0.5.
Tensor read_mask(const std::filesystem::path& path);
/// 8-bit RGB PNG.
void write_frame(const Tensor& frame, const std::filesystem::path& path);
Tensor read_frame(const std::filesystem::path& path);

/// frames/, flow/, flow_rgb/, masks/ with %05d names, plus scene.cfg.
void write_dataset(const std::filesystem::path& dir, const SceneConfig& cfg, const std::vector<VideoSample>& samples);
std::vector<VideoSample> read_dataset(const std::filesystem::path& dir);

std::string frame_name(std::size_t index, const char* ext);

}  // namespace dsnet
