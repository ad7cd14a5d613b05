#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsnet/data_io.hpp"
#include "dsnet/model.hpp"

namespace dsnet {

struct TrainConfig {
  int height = 64;
  int width = 64;
  double lr = 1e-3;
  /// Multiplier on lr for the weight generators (parameters named dwg_*).
  double dwg_lr_scale = 0.05;
  /// Iterations during which the weight generators stay frozen.
  int dwg_warmup = 500;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 4;
  int iterations = 2000;
  double tau = kDefaultTau;
  std::uint64_t seed = 1;
  Variant variant = Variant::proposed;
  /// Probability that a drawn sample is replaced by its zero-flow still-image version.
  double static_ratio = 0.0;
  ReliabilitySource reliability = ReliabilitySource::normalized;
  TemporalInput temporal_input = TemporalInput::color;

  void set(const std::string& key, const std::string& value);
  static const std::vector<std::string>& keys();
  /// Throws ConfigError on out-of-range fields.
  void validate() const;
  ModelConfig model_config() const;
};

/// Everything a subcommand needs: scene generation plus training settings.
struct RunConfig {
  SceneConfig scene;
  TrainConfig train;

  /// Applies `section.key = value`; unknown keys raise ConfigError listing
  /// every valid key.
  void set(const std::string& key, const std::string& value);
  /// Parses `key = value` lines; `[section]` headers prefix later keys and
  /// `#` starts a comment.
  void apply_text(const std::string& text);
  void apply_file(const std::filesystem::path& path);
  /// Applies a `key=value` override.
  void apply_override(const std::string& assignment);
  void validate() const;

  /// Every key, one per line, in a form apply_text accepts.
  std::string to_text() const;
  static std::vector<std::string> valid_keys();
};

}  // namespace dsnet
