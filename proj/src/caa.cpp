#include "dsnet/caa.hpp"

#include <cmath>
#include <string>

namespace dsnet {

GatePair cross_normalize(double w_s, double w_t) {
  if (!std::isfinite(w_s) || !std::isfinite(w_t)) throw NumericError("cross_normalize: non-finite weight");
  // Written in terms of the difference, i.e. softmax after subtracting the max.
  const double d = w_s - w_t;
  double v_s;
  if (d >= 0.0) {
    v_s = 1.0 / (1.0 + std::exp(-d));
  } else {
    const double e = std::exp(d);
    v_s = e / (1.0 + e);
  }
  return {v_s, 1.0 - v_s, GateStage::normalized};
}

GatePair cross_threshold(const GatePair& v, double tau) {
  const double gap = v.temporal - v.spatial;
  if (gap > tau) return {0.0, v.temporal, GateStage::gated};
  if (gap < -tau) return {v.spatial, 0.0, GateStage::gated};
  return {v.spatial, v.temporal, GateStage::gated};
}

Var stack_pair(const Var& w_s, const Var& w_t) {
  require_same_shape(w_s.shape(), w_t.shape(), "stack_pair");
  const Shape s = w_s.shape();
  const std::size_t levels = s.c * s.h * s.w;
  Tensor out(Shape{s.n, 2, levels, 1});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < levels; ++i) {
      out.at(n, 0, i, 0) = w_s.value()[n * levels + i];
      out.at(n, 1, i, 0) = w_t.value()[n * levels + i];
    }
  }
  return make_node(std::move(out), {w_s, w_t}, [w_s, w_t, levels](Node& self) {
    const std::size_t batch = self.value.shape().n;
    for (std::size_t b = 0; b < 2; ++b) {
      const Var& v = b == 0 ? w_s : w_t;
      if (!v.requires_grad()) continue;
      Tensor& g = v.node()->grad_buffer();
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t i = 0; i < levels; ++i) g[n * levels + i] += self.grad.at(n, b, i, 0);
      }
    }
  });
}

Var cross_softmax(const Var& raw_pair) {
  const Shape s = raw_pair.shape();
  if (s.c != 2 || s.w != 1) throw ShapeError("cross_softmax: expected (N, 2, L, 1), got " + s.str());
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < s.h; ++i) {
      const GatePair v = cross_normalize(raw_pair.value().at(n, 0, i, 0), raw_pair.value().at(n, 1, i, 0));
      out.at(n, 0, i, 0) = v.spatial;
      out.at(n, 1, i, 0) = v.temporal;
    }
  }
  return make_node(std::move(out), {raw_pair}, [raw_pair, s](Node& self) {
    Tensor& g = raw_pair.node()->grad_buffer();
    for (std::size_t n = 0; n < s.n; ++n) {
      for (std::size_t i = 0; i < s.h; ++i) {
        const double vs = self.value.at(n, 0, i, 0);
        const double vt = self.value.at(n, 1, i, 0);
        const double diff = (self.grad.at(n, 0, i, 0) - self.grad.at(n, 1, i, 0)) * vs * vt;
        g.at(n, 0, i, 0) += diff;
        g.at(n, 1, i, 0) -= diff;
      }
    }
  });
}

Var cross_threshold(const Var& pair, double tau) {
  const Shape s = pair.shape();
  if (s.c != 2 || s.w != 1) throw ShapeError("cross_threshold: expected (N, 2, L, 1), got " + s.str());
  Tensor out(s);
  std::vector<unsigned char> keep(s.numel(), 1);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < s.h; ++i) {
      GatePair v{pair.value().at(n, 0, i, 0), pair.value().at(n, 1, i, 0), GateStage::normalized};
      const double gap = v.temporal - v.spatial;
      const GatePair u = cross_threshold(v, tau);
      out.at(n, 0, i, 0) = u.spatial;
      out.at(n, 1, i, 0) = u.temporal;
      keep[out.index(n, 0, i, 0)] = !(gap > tau);
      keep[out.index(n, 1, i, 0)] = !(gap < -tau);
    }
  }
  return make_node(std::move(out), {pair}, [pair, keep](Node& self) {
    Tensor& g = pair.node()->grad_buffer();
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (keep[k]) g[k] += self.grad[k];
    }
  });
}

Var gate_component(const Var& pair, std::size_t branch, std::size_t level) {
  const Shape s = pair.shape();
  if (s.c != 2 || s.w != 1 || branch > 1 || level >= s.h) {
    throw ShapeError("gate_component: bad index into " + s.str());
  }
  Tensor out(Shape{s.n, 1, 1, 1});
  for (std::size_t n = 0; n < s.n; ++n) out[n] = pair.value().at(n, branch, level, 0);
  return make_node(std::move(out), {pair}, [pair, branch, level](Node& self) {
    Tensor& g = pair.node()->grad_buffer();
    for (std::size_t n = 0; n < self.value.shape().n; ++n) g.at(n, branch, level, 0) += self.grad[n];
  });
}

Var constant_pair(std::size_t batch, std::size_t levels, double spatial, double temporal) {
  Tensor t(Shape{batch, 2, levels, 1});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t i = 0; i < levels; ++i) {
      t.at(n, 0, i, 0) = spatial;
      t.at(n, 1, i, 0) = temporal;
    }
  }
  return Var::constant(std::move(t));
}

GateSet make_gates(const Var& w_s, const Var& w_t, double tau, GateMode mode, std::size_t batch) {
  GateSet g;
  if (w_s.defined() && w_t.defined()) {
    g.raw = stack_pair(w_s, w_t);
    g.normalized = cross_softmax(g.raw);
  }
  const bool have = g.raw.defined();
  auto need = [&](const char* what) {
    if (!have) throw std::invalid_argument(std::string("make_gates: mode '") + what + "' needs weight vectors");
  };
  switch (mode) {
    case GateMode::proposed:
      need("proposed");
      g.gated = cross_threshold(g.normalized, tau);
      break;
    case GateMode::without_softmax:
      need("without_softmax");
      g.gated = cross_threshold(g.raw, tau);
      break;
    case GateMode::without_threshold:
      need("without_threshold");
      g.gated = g.normalized;
      break;
    case GateMode::naive:
      need("naive");
      g.gated = g.raw;
      break;
    case GateMode::unit:
      g.gated = constant_pair(batch, kPyramidLevels, 1.0, 1.0);
      break;
    case GateMode::spatial_only:
      g.gated = constant_pair(batch, kPyramidLevels, 1.0, 0.0);
      break;
    case GateMode::temporal_only:
      g.gated = constant_pair(batch, kPyramidLevels, 0.0, 1.0);
      break;
  }
  return g;
}

Tensor aggregate_scale(const Tensor& f_s, const Tensor& f_t, const GatePair& gate) {
  require_same_shape(f_s.shape(), f_t.shape(), "aggregate_scale");
  Tensor out(f_s.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gate.spatial * f_s[i] + gate.temporal * f_t[i];
  return out;
}

Tensor naive_aggregate_scale(const Tensor& f_s, const Tensor& f_t, double w_s, double w_t) {
  return aggregate_scale(f_s, f_t, GatePair{w_s, w_t, GateStage::raw});
}

Var aggregate_scale(const Var& f_s, const Var& f_t, const Var& u_s, const Var& u_t) {
  require_same_shape(f_s.shape(), f_t.shape(), "aggregate_scale");
  return add(scale_by_sample(f_s, u_s), scale_by_sample(f_t, u_t));
}

namespace {

constexpr std::array<int, kPyramidLevels> kStageKernel{3, 3, 5, 7, 3};
constexpr std::array<int, kPyramidLevels> kStagePadding{1, 1, 2, 3, 1};
constexpr std::array<int, kPyramidLevels> kReferenceInnerWidth{64, 128, 256, 512, 256};
constexpr int kWidthDivisor = 8;

std::array<CaaStageConfig, kPyramidLevels> schedule_with_outputs(const std::array<int, kPyramidLevels>& outputs) {
  std::array<CaaStageConfig, kPyramidLevels> s{};
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    const int inner = kReferenceInnerWidth[i] / kWidthDivisor;
    s[i].stage = static_cast<int>(i + 1);
    s[i].convs[0] = {kStageKernel[i], kStagePadding[i], inner};
    s[i].convs[1] = {kStageKernel[i], kStagePadding[i], inner};
    s[i].convs[2] = {kStageKernel[i], kStagePadding[i], outputs[i]};
  }
  return s;
}

}  // namespace

std::array<CaaStageConfig, kPyramidLevels> caa_schedule(const std::array<int, kPyramidLevels>& level_channels,
                                                        int final_channels) {
  return schedule_with_outputs(
      {final_channels, level_channels[0], level_channels[1], level_channels[2], level_channels[3]});
}

std::array<CaaStageConfig, kPyramidLevels> caa_bottom_up_schedule(
    const std::array<int, kPyramidLevels>& level_channels, int final_channels) {
  return schedule_with_outputs(
      {level_channels[1], level_channels[2], level_channels[3], level_channels[4], final_channels});
}

Var CaaStage::transform(const Var& x, std::size_t out_h, std::size_t out_w) const {
  Var y = x;
  for (const auto& c : convs) y = relu(conv2d(y, c));
  return resize_bilinear(y, out_h, out_w);
}

CaaStage make_caa_stage(ParamStore& store, const std::string& prefix, int in_channels, const CaaStageConfig& cfg) {
  CaaStage st;
  int c = in_channels;
  for (std::size_t i = 0; i < 3; ++i) {
    const ConvSpec& spec = cfg.convs[i];
    if (spec.kernel_size != 2 * spec.padding + 1) {
      throw ShapeError("CAA stage " + std::to_string(cfg.stage) + " conv" + std::to_string(i + 1) +
                       ": kernel/padding do not preserve spatial size");
    }
    st.convs[i] = store.conv(prefix + ".conv" + std::to_string(i + 1), c, spec.out_channels, spec.kernel_size,
                             spec.padding);
    c = spec.out_channels;
  }
  return st;
}

Var top_down_fuse(std::span<const Var> aggregated, std::span<const CaaStage> stages, std::size_t out_h,
                  std::size_t out_w) {
  if (aggregated.empty() || aggregated.size() != stages.size()) {
    throw ShapeError("top_down_fuse: need one stage per level");
  }
  const std::size_t levels = aggregated.size();
  Var f = aggregated[levels - 1];
  for (std::size_t i = levels - 1; i-- > 0;) {
    const Shape target = aggregated[i].shape();
    f = add(stages[i + 1].transform(f, target.h, target.w), aggregated[i]);
  }
  return stages[0].transform(f, out_h, out_w);
}

Var bottom_up_fuse(std::span<const Var> aggregated, std::span<const CaaStage> stages, std::size_t out_h,
                   std::size_t out_w) {
  if (aggregated.empty() || aggregated.size() != stages.size()) {
    throw ShapeError("bottom_up_fuse: need one stage per level");
  }
  const std::size_t levels = aggregated.size();
  Var b = aggregated[0];
  for (std::size_t i = 0; i + 1 < levels; ++i) {
    const Shape target = aggregated[i + 1].shape();
    b = add(stages[i].transform(b, target.h, target.w), aggregated[i + 1]);
  }
  return stages[levels - 1].transform(b, out_h, out_w);
}

CrossAttentiveAggregation::CrossAttentiveAggregation(ParamStore& store, const std::string& prefix,
                                                     const std::array<int, kPyramidLevels>& level_channels,
                                                     int final_channels, FusionDirection direction)
    : direction_(direction) {
  const bool top_down = direction == FusionDirection::top_down;
  const auto schedule = top_down ? caa_schedule(level_channels, final_channels)
                                 : caa_bottom_up_schedule(level_channels, final_channels);
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    const int expected_out = top_down ? (i == 0 ? final_channels : level_channels[i - 1])
                                      : (i + 1 == kPyramidLevels ? final_channels : level_channels[i + 1]);
    if (schedule[i].convs[2].out_channels != expected_out) {
      throw ShapeError("CAA stage " + std::to_string(i + 1) + ": output channels " +
                       std::to_string(schedule[i].convs[2].out_channels) + " cannot be added to a level with " +
                       std::to_string(expected_out) + " channels");
    }
    stages_.push_back(make_caa_stage(store, prefix + ".stage" + std::to_string(i + 1), level_channels[i], schedule[i]));
  }
}

std::vector<Var> CrossAttentiveAggregation::aggregate(const FeaturePyramid* spatial, const FeaturePyramid* temporal,
                                                      const Var& gated) const {
  if (!spatial && !temporal) throw std::invalid_argument("aggregate: no pyramid");
  std::vector<Var> out;
  out.reserve(kPyramidLevels);
  for (std::size_t i = 0; i < kPyramidLevels; ++i) {
    if (!temporal) {
      out.push_back(spatial->levels[i]);
    } else if (!spatial) {
      out.push_back(temporal->levels[i]);
    } else {
      out.push_back(aggregate_scale(spatial->levels[i], temporal->levels[i], gate_component(gated, 0, i),
                                    gate_component(gated, 1, i)));
    }
  }
  return out;
}

Var CrossAttentiveAggregation::fuse(std::span<const Var> aggregated, std::size_t out_h, std::size_t out_w) const {
  return direction_ == FusionDirection::top_down ? top_down_fuse(aggregated, stages_, out_h, out_w)
                                                 : bottom_up_fuse(aggregated, stages_, out_h, out_w);
}

}  // namespace dsnet
