#include "dsnet/dwg.hpp"

#include <vector>

namespace dsnet {

double WeightVector::sum() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

WeightVector WeightVector::from_tensor(const Tensor& t, std::size_t n) {
  const Shape& s = t.shape();
  if (s.c * s.h * s.w != kPyramidLevels || n >= s.n) {
    throw ShapeError("WeightVector: expected (N, 5, 1, 1), got " + s.str());
  }
  WeightVector w;
  for (std::size_t i = 0; i < kPyramidLevels; ++i) w.values[i] = t[n * kPyramidLevels + i];
  return w;
}

WeightGenerator::WeightGenerator(ParamStore& store, const std::string& prefix, WeightGenKind kind,
                                 const std::array<int, kPyramidLevels>& level_channels, bool zero_output)
    : kind_(kind) {
  constexpr int levels = static_cast<int>(kPyramidLevels);
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    const std::string name = prefix + ".level" + std::to_string(i + 1);
    per_level_[i] = kind == WeightGenKind::separate ? store.conv(name, level_channels[i], 1, 1, 0)
                                                    : store.conv(name, level_channels[i], kTransformWidth, 1, 0);
  }
  if (kind == WeightGenKind::proposed) {
    reduce_ = store.conv(prefix + ".reduce", levels * kTransformWidth, levels, 1, 0);
  } else if (kind == WeightGenKind::fully_connected) {
    reduce_ = store.conv(prefix + ".fc", levels * kTransformWidth, levels, 1, 0);
  }
  if (zero_output) {
    if (kind == WeightGenKind::separate) {
      for (auto& p : per_level_) p.weight.mutable_value().fill(0.0);
    } else {
      reduce_.weight.mutable_value().fill(0.0);
    }
  }
}

Var WeightGenerator::concatenated_transform(const FeaturePyramid& pyramid) const {
  const Shape fine = pyramid.levels[0].shape();
  std::vector<Var> parts;
  parts.reserve(kPyramidLevels);
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    Var t = relu(conv2d(pyramid.levels[i], per_level_[i]));
    parts.push_back(upsample_bilinear(t, fine.h, fine.w));
  }
  return concat_channels(parts);
}

Var WeightGenerator::generate(const FeaturePyramid& pyramid) const {
  switch (kind_) {
    case WeightGenKind::proposed:
      // No activation between the reduction and the pooling: raw weights may be negative.
      return global_avg_pool(conv2d(concatenated_transform(pyramid), reduce_));
    case WeightGenKind::fully_connected:
      return conv2d(global_avg_pool(concatenated_transform(pyramid)), reduce_);
    case WeightGenKind::separate: {
      std::vector<Var> scalars;
      scalars.reserve(kPyramidLevels);
      for (std::size_t i = 0; i < kPyramidLevels; ++i) {
        scalars.push_back(conv2d(global_avg_pool(pyramid.levels[i]), per_level_[i]));
      }
      return concat_channels(scalars);
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace dsnet
