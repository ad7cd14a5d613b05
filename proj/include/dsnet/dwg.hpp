#pragma once

#include <array>
#include <string>

#include "dsnet/encoder.hpp"

namespace dsnet {

/// Five per-level scalars for one branch (raw, normalized or gated).
struct WeightVector {
  std::array<double, kPyramidLevels> values{};

  double sum() const;
  /// Reads item `n` of an (N, 5, 1, 1) tensor.
  static WeightVector from_tensor(const Tensor& t, std::size_t n);
};

enum class WeightGenKind {
  proposed,         // per-level 1x1 to 64ch, upsample, concat (320ch), 1x1 reduce to 5, GAP
  separate,         // DWG-SEP: per level GAP then 1x1 to one scalar
  fully_connected,  // DWG-FC: per-level 1x1, upsample, concat, GAP, dense 320 -> 5
};

/// Dynamic weight generator: maps a feature pyramid to an (N, 5, 1, 1)
/// weight tensor. Each branch owns its own instance.
class WeightGenerator {
 public:
  static constexpr int kTransformWidth = 64;

  WeightGenerator() = default;
  /// With `zero_output` the layer producing the weights starts at zero, so
  /// every raw weight is 0 until it is trained.
  WeightGenerator(ParamStore& store, const std::string& prefix, WeightGenKind kind,
                  const std::array<int, kPyramidLevels>& level_channels, bool zero_output = false);

  Var generate(const FeaturePyramid& pyramid) const;
  WeightGenKind kind() const { return kind_; }

 private:
  Var concatenated_transform(const FeaturePyramid& pyramid) const;

  WeightGenKind kind_ = WeightGenKind::proposed;
  std::array<ConvParams, kPyramidLevels> per_level_;
  ConvParams reduce_;  // 1x1 reduction (proposed) or dense layer as a 1x1 over pooled features (fc)
};

}  // namespace dsnet
