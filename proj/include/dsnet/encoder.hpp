#pragma once

#include <array>
#include <string>
#include <vector>

#include "dsnet/params.hpp"

namespace dsnet {

inline constexpr std::size_t kPyramidLevels = 5;

/// Five feature maps from one branch, finest first. `strides[i]` is the
/// downsampling factor of level i relative to the branch input.
struct FeaturePyramid {
  std::array<Var, kPyramidLevels> levels;
  std::array<int, kPyramidLevels> strides{1, 2, 4, 8, 8};
};

struct BranchOutput {
  FeaturePyramid pyramid;
  Var coarse_map;  // (N, 1, H, W) in (0, 1)
};

struct EncoderConfig {
  int in_channels = 3;
  std::array<int, 4> stage_channels{16, 32, 64, 64};
  int aspp_width = 32;
  int aspp_out = 64;
  std::array<int, 4> aspp_dilations{1, 6, 12, 18};
  std::array<int, 3> decoder_widths{32, 16, 8};

  /// Channel count of each pyramid level.
  std::array<int, kPyramidLevels> level_channels() const {
    return {stage_channels[0], stage_channels[1], stage_channels[2], stage_channels[3], aspp_out};
  }
};

/// Three 3x3 conv+relu reduction layers, a 3x3 conv to one logit channel,
/// bilinear upsampling, then sigmoid.
class SaliencyDecoder {
 public:
  SaliencyDecoder() = default;
  SaliencyDecoder(ParamStore& store, const std::string& prefix, int in_channels, std::array<int, 3> widths);

  Var logits(const Var& f) const;
  Var decode(const Var& f, std::size_t out_h, std::size_t out_w) const;
  const std::array<ConvParams, 4>& layers() const { return layers_; }

 private:
  std::array<ConvParams, 4> layers_;
};

/// Atrous spatial pyramid pooling: four parallel dilated branches plus an
/// image-pooling branch, concatenated and fused by a 1x1 conv.
class Aspp {
 public:
  Aspp() = default;
  Aspp(ParamStore& store, const std::string& prefix, int in_channels, int width, int out_channels,
       std::array<int, 4> dilations);

  Var operator()(const Var& f) const;
  const std::array<ConvParams, 4>& branches() const { return branches_; }
  const ConvParams& pooling() const { return pool_; }
  const ConvParams& fusion() const { return fuse_; }

 private:
  std::array<ConvParams, 4> branches_;
  ConvParams pool_;
  ConvParams fuse_;
};

/// One symmetric branch: toy backbone, ASPP and branch decoder. The spatial
/// branch consumes the RGB frame, the temporal branch the flow image.
class BranchEncoder {
 public:
  BranchEncoder() = default;
  BranchEncoder(ParamStore& store, const std::string& prefix, const EncoderConfig& cfg = {});

  /// Requires spatial dims divisible by 8.
  FeaturePyramid extract_pyramid(const Var& image) const;
  Var aspp(const Var& f) const { return aspp_(f); }
  Var decode_branch(const Var& f, std::size_t out_h, std::size_t out_w) const {
    return decoder_.decode(f, out_h, out_w);
  }
  BranchOutput run(const Var& input) const;

  const EncoderConfig& config() const { return cfg_; }
  const SaliencyDecoder& decoder() const { return decoder_; }
  const Aspp& aspp_module() const { return aspp_; }

 private:
  EncoderConfig cfg_;
  ConvParams head_;
  std::array<std::array<ConvParams, 2>, 3> stages_;
  Aspp aspp_;
  SaliencyDecoder decoder_;
};

}  // namespace dsnet
