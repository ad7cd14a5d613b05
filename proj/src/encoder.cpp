#include "dsnet/encoder.hpp"

#include <string>

namespace dsnet {

SaliencyDecoder::SaliencyDecoder(ParamStore& store, const std::string& prefix, int in_channels,
                                 std::array<int, 3> widths) {
  int c = in_channels;
  for (std::size_t i = 0; i < 3; ++i) {
    layers_[i] = store.conv(prefix + ".conv" + std::to_string(i + 1), c, widths[i], 3, 1);
    c = widths[i];
  }
  layers_[3] = store.conv(prefix + ".logit", c, 1, 3, 1);
}

Var SaliencyDecoder::logits(const Var& f) const {
  Var x = f;
  for (std::size_t i = 0; i < 3; ++i) x = relu(conv2d(x, layers_[i]));
  return conv2d(x, layers_[3]);
}

Var SaliencyDecoder::decode(const Var& f, std::size_t out_h, std::size_t out_w) const {
  return sigmoid(upsample_bilinear(logits(f), out_h, out_w));
}

Aspp::Aspp(ParamStore& store, const std::string& prefix, int in_channels, int width, int out_channels,
           std::array<int, 4> dilations) {
  for (std::size_t i = 0; i < 4; ++i) {
    const int d = dilations[i];
    const std::string name = prefix + ".rate" + std::to_string(d);
    // Rate 1 is the pointwise branch.
    branches_[i] = d == 1 ? store.conv(name, in_channels, width, 1, 0)
                          : store.conv(name, in_channels, width, 3, same_padding(3, d), d);
  }
  pool_ = store.conv(prefix + ".pool", in_channels, width, 1, 0);
  fuse_ = store.conv(prefix + ".fuse", 5 * width, out_channels, 1, 0);
}

Var Aspp::operator()(const Var& f) const {
  const Shape s = f.shape();
  std::vector<Var> parts;
  parts.reserve(5);
  for (const auto& b : branches_) parts.push_back(relu(conv2d(f, b)));
  parts.push_back(upsample_bilinear(relu(conv2d(global_avg_pool(f), pool_)), s.h, s.w));
  return relu(conv2d(concat_channels(parts), fuse_));
}

BranchEncoder::BranchEncoder(ParamStore& store, const std::string& prefix, const EncoderConfig& cfg) : cfg_(cfg) {
  head_ = store.conv(prefix + ".head", cfg.in_channels, cfg.stage_channels[0], 3, 1);
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string name = prefix + ".stage" + std::to_string(s + 2);
    stages_[s][0] = store.conv(name + ".down", cfg.stage_channels[s], cfg.stage_channels[s + 1], 3, 1, 1, 2);
    stages_[s][1] = store.conv(name + ".conv", cfg.stage_channels[s + 1], cfg.stage_channels[s + 1], 3, 1);
  }
  aspp_ = Aspp(store, prefix + ".aspp", cfg.stage_channels[3], cfg.aspp_width, cfg.aspp_out, cfg.aspp_dilations);
  decoder_ = SaliencyDecoder(store, prefix + ".decoder", cfg.aspp_out, cfg.decoder_widths);
}

FeaturePyramid BranchEncoder::extract_pyramid(const Var& image) const {
  const Shape s = image.shape();
  if (s.h % 8 != 0 || s.h == 0) {
    throw ShapeError("extract_pyramid: height " + std::to_string(s.h) +
                     " is not a positive multiple of 8; pad or resize the input");
  }
  if (s.w % 8 != 0 || s.w == 0) {
    throw ShapeError("extract_pyramid: width " + std::to_string(s.w) +
                     " is not a positive multiple of 8; pad or resize the input");
  }
  FeaturePyramid p;
  Var x = relu(conv2d(image, head_));
  p.levels[0] = x;
  for (std::size_t st = 0; st < 3; ++st) {
    x = relu(conv2d(x, stages_[st][0]));
    x = relu(conv2d(x, stages_[st][1]));
    p.levels[st + 1] = x;
  }
  p.levels[4] = aspp_(x);
  return p;
}

BranchOutput BranchEncoder::run(const Var& input) const {
  BranchOutput out;
  out.pyramid = extract_pyramid(input);
  out.coarse_map = decode_branch(out.pyramid.levels[4], input.shape().h, input.shape().w);
  return out;
}

}  // namespace dsnet
