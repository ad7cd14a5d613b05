#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dsnet/autograd.hpp"

namespace dsnet {

/// A 2-D convolution layer's geometry and parameters. `weight` has shape
/// (out, in, k, k); `bias` has shape (out, 1, 1, 1).
struct ConvParams {
  int kernel_size = 1;
  int padding = 0;
  int dilation = 1;
  int stride = 1;
  int in_channels = 0;
  int out_channels = 0;
  Var weight;
  Var bias;

  /// Throws ShapeError if the geometry is malformed or the parameter
  /// tensors disagree with it.
  void validate() const;
  std::size_t output_extent(std::size_t input) const;
};

/// Padding that keeps spatial size for stride 1.
constexpr int same_padding(int kernel_size, int dilation = 1) { return dilation * (kernel_size - 1) / 2; }

// Zero-padded dilated convolution.
Var conv2d(const Var& x, const ConvParams& p);

/// Corner-aligned bilinear resize to (out_h, out_w). Works in both
/// directions; `upsample_bilinear` additionally requires out >= in.
Var resize_bilinear(const Var& x, std::size_t out_h, std::size_t out_w);
Var upsample_bilinear(const Var& x, std::size_t out_h, std::size_t out_w);

/// (N, C, H, W) -> (N, C, 1, 1) spatial mean.
Var global_avg_pool(const Var& x);

Var add(const Var& x, const Var& y);
Var mul(const Var& x, const Var& y);
Var scale(const Var& x, double factor);
Var relu(const Var& x);

/// While alive, hashes the on/off pattern of every relu evaluated on this
/// thread. Two forward passes with equal patterns took the same linear
/// pieces, which finite-difference checks need.
class ReluPatternProbe {
 public:
  ReluPatternProbe();
  ~ReluPatternProbe();
  ReluPatternProbe(const ReluPatternProbe&) = delete;
  ReluPatternProbe& operator=(const ReluPatternProbe&) = delete;
  std::uint64_t pattern() const;
};
/// Logistic function with inputs clamped to [-40, 40].
Var sigmoid(const Var& x);
/// Clamps to [0, 1]; gradient passes only strictly inside.
Var clamp01(const Var& x);

Var concat_channels(std::span<const Var> xs);
Var slice_channels(const Var& x, std::size_t begin, std::size_t count);

/// Multiplies item n of `x` by the scalar s[n]; `s` has shape (N, 1, 1, 1).
Var scale_by_sample(const Var& x, const Var& s);
/// Multiplies every channel of `x` (N, C, H, W) by `m` (N, 1, H, W).
Var mul_broadcast_channels(const Var& x, const Var& m);

/// Sum / mean of every element, as a (1, 1, 1, 1) tensor.
Var sum_all(const Var& x);
Var mean_all(const Var& x);

/// Same value, but no gradient flows back through it.
Var stop_gradient(const Var& x);

enum class Elementwise { add, mul };
enum class Activation { relu, sigmoid };
Var elementwise(const Var& x, const Var& y, Elementwise kind);
Var activation(const Var& x, Activation kind);

double sigmoid_scalar(double x);

}  // namespace dsnet
