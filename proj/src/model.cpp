#include "dsnet/model.hpp"

#include <stdexcept>

#include "dsnet/errors.hpp"

namespace dsnet {

namespace {

struct VariantName {
  Variant variant;
  const char* name;
};

constexpr VariantName kVariantNames[] = {
    {Variant::proposed, "proposed"}, {Variant::m1_spatial, "m1"}, {Variant::m2_temporal, "m2"},
    {Variant::m3_sum, "m3"},         {Variant::naive, "naive"},   {Variant::dwg_sep, "dwg-sep"},
    {Variant::dwg_fc, "dwg-fc"},     {Variant::caa_wos, "caa-wos"}, {Variant::caa_won, "caa-won"},
    {Variant::caa_bu, "caa-bu"},     {Variant::m_ss, "m-ss"},     {Variant::m_aggs, "m-aggs"},
    {Variant::m_woatt, "m-woatt"},
};

}  // namespace

std::string to_string(Variant v) {
  for (const auto& n : kVariantNames) {
    if (n.variant == v) return n.name;
  }
  throw std::logic_error("unnamed variant");
}

Variant parse_variant(const std::string& s) {
  for (const auto& n : kVariantNames) {
    if (s == n.name) return n.variant;
  }
  std::string valid;
  for (const auto& n : kVariantNames) valid += (valid.empty() ? "" : ", ") + std::string(n.name);
  throw ConfigError("unknown variant '" + s + "'; valid variants: " + valid);
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = [] {
    std::vector<Variant> out;
    for (const auto& n : kVariantNames) out.push_back(n.variant);
    return out;
  }();
  return v;
}

VariantFlags flags_for(Variant v) {
  VariantFlags f;
  switch (v) {
    case Variant::proposed:
      break;
    case Variant::m1_spatial:
    case Variant::m2_temporal:
      f.use_temporal = v == Variant::m2_temporal;
      f.use_spatial = v == Variant::m1_spatial;
      f.weights = WeightSource::none;
      f.gate = v == Variant::m1_spatial ? GateMode::spatial_only : GateMode::temporal_only;
      f.coarse = CoarseFusion::none;
      f.attention = false;
      f.supervision = Supervision::single;
      break;
    case Variant::m3_sum:
      f.weights = WeightSource::none;
      f.gate = GateMode::unit;
      f.coarse = CoarseFusion::none;
      f.attention = false;
      f.supervision = Supervision::single;
      break;
    case Variant::naive:
      f.gate = GateMode::naive;
      break;
    case Variant::dwg_sep:
      f.weights = WeightSource::separate;
      break;
    case Variant::dwg_fc:
      f.weights = WeightSource::fully_connected;
      break;
    case Variant::caa_wos:
      f.gate = GateMode::without_softmax;
      break;
    case Variant::caa_won:
      f.gate = GateMode::without_threshold;
      break;
    case Variant::caa_bu:
      f.direction = FusionDirection::bottom_up;
      break;
    case Variant::m_ss:
      f.supervision = Supervision::single;
      break;
    case Variant::m_aggs:
      f.coarse = CoarseFusion::sum;
      break;
    case Variant::m_woatt:
      f.attention = false;
      break;
  }
  return f;
}

Batch Batch::from_samples(std::span<const VideoSample* const> samples) {
  if (samples.empty()) throw std::invalid_argument("batch: no samples");
  std::vector<Tensor> frames, images, fields, masks;
  for (const VideoSample* s : samples) {
    frames.push_back(s->frame);
    images.push_back(s->flow_image);
    fields.push_back(s->flow_field);
    masks.push_back(s->mask);
  }
  return {stack_batch(frames), stack_batch(images), stack_batch(fields), stack_batch(masks)};
}

Batch Batch::from_samples(std::span<const VideoSample> samples) {
  std::vector<const VideoSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return from_samples(std::span<const VideoSample* const>(ptrs));
}

DsNet::DsNet(const ModelConfig& cfg, const VariantFlags& flags, std::uint64_t seed)
    : cfg_(cfg), flags_(flags), params_(std::make_unique<ParamStore>(seed)) {
  if (!flags.use_spatial && !flags.use_temporal) throw ConfigError("model: at least one branch is required");
  const bool both = flags.use_spatial && flags.use_temporal;
  if (!both && (flags.weights != WeightSource::none || flags.coarse != CoarseFusion::none || flags.attention)) {
    throw ConfigError("model: weights, coarse fusion and attention need both branches");
  }
  if (flags.weights == WeightSource::none &&
      (flags.coarse == CoarseFusion::dynamic || (flags.gate != GateMode::unit && flags.gate != GateMode::spatial_only &&
                                                 flags.gate != GateMode::temporal_only))) {
    throw ConfigError("model: the selected gate or coarse fusion needs a weight generator");
  }
  if (flags.attention && flags.coarse == CoarseFusion::none) {
    throw ConfigError("model: attention needs a coarse map");
  }
  ParamStore& store = *params_;
  const auto levels = cfg.encoder.level_channels();
  if (flags.use_spatial) spatial_ = BranchEncoder(store, "spatial", cfg.encoder);
  if (flags.use_temporal) {
    EncoderConfig tcfg = cfg.encoder;
    tcfg.in_channels = cfg.temporal_input == TemporalInput::color ? 3 : 2;
    temporal_ = BranchEncoder(store, "temporal", tcfg);
  }
  if (flags.weights != WeightSource::none) {
    const WeightGenKind kind = flags.weights == WeightSource::proposed   ? WeightGenKind::proposed
                               : flags.weights == WeightSource::separate ? WeightGenKind::separate
                                                                         : WeightGenKind::fully_connected;
    dwg_s_ = WeightGenerator(store, "dwg_s", kind, levels, cfg.zero_init_weights);
    dwg_t_ = WeightGenerator(store, "dwg_t", kind, levels, cfg.zero_init_weights);
  }
  caa_ = CrossAttentiveAggregation(store, "caa", levels, cfg.final_channels, flags.direction);
  final_decoder_ = SaliencyDecoder(store, "final_decoder", cfg.final_channels, cfg.final_decoder_widths);
}

ForwardResult DsNet::forward(const Batch& batch) const {
  const Shape in = batch.frames.shape();
  const std::size_t H = in.h;
  const std::size_t W = in.w;
  ForwardResult r;
  std::optional<BranchOutput> sp, tp;
  if (flags_.use_spatial) {
    sp = spatial_.run(Var::constant(batch.frames));
    r.s_s = sp->coarse_map;
  }
  if (flags_.use_temporal) {
    const Tensor& input = cfg_.temporal_input == TemporalInput::color ? batch.flow_images : batch.flow_fields;
    tp = temporal_.run(Var::constant(input));
    r.s_t = tp->coarse_map;
  }
  if (flags_.weights != WeightSource::none) {
    r.w_s = dwg_s_.generate(sp->pyramid);
    r.w_t = dwg_t_.generate(tp->pyramid);
  }
  if (sp && tp) r.gates = make_gates(r.w_s, r.w_t, cfg_.tau, flags_.gate, in.n);

  const auto aggregated = caa_.aggregate(sp ? &sp->pyramid : nullptr, tp ? &tp->pyramid : nullptr, r.gates.gated);
  r.f_final = caa_.fuse(aggregated, H, W);

  if (r.gates.normalized.defined()) {
    r.eps = branch_reliability(cfg_.reliability == ReliabilitySource::normalized ? r.gates.normalized
                                                                                 : r.gates.gated);
  }
  switch (flags_.coarse) {
    case CoarseFusion::dynamic:
      r.s_c = fuse_coarse_maps(r.s_s, r.s_t, r.eps);
      break;
    case CoarseFusion::sum:
      r.s_c = fuse_coarse_maps_sum(r.s_s, r.s_t);
      break;
    case CoarseFusion::none:
      break;
  }
  // The attention map is treated as a fixed input to the final path: the
  // coarse heads learn only from their own supervision.
  const Var f_att = flags_.attention ? apply_spatial_attention(r.f_final, stop_gradient(r.s_c)) : r.f_final;
  r.s_f = final_decoder_.decode(f_att, H, W);
  return r;
}

Prediction NetworkPredictor::predict(const Batch& batch) const {
  const ForwardResult r = net_.forward(batch);
  auto val = [](const Var& v) { return v.defined() ? v.value() : Tensor(); };
  return {val(r.s_s), val(r.s_t), val(r.s_c), val(r.s_f), val(r.eps)};
}

Prediction OracleStubPredictor::predict(const Batch& batch) const {
  return {batch.masks, batch.masks, batch.masks, batch.masks, Tensor()};
}

}  // namespace dsnet
