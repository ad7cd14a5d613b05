#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsnet/caa.hpp"
#include "dsnet/data_io.hpp"
#include "dsnet/dwg.hpp"
#include "dsnet/fusion_head.hpp"
#include "dsnet/loss.hpp"

namespace dsnet {

enum class Variant {
  proposed,
  m1_spatial,   // spatial branch only
  m2_temporal,  // temporal branch only
  m3_sum,       // both branches, per-level features summed, no DWG / coarse fusion / attention
  naive,        // raw weighted sum of the DWG outputs
  dwg_sep,
  dwg_fc,
  caa_wos,
  caa_won,
  caa_bu,
  m_ss,
  m_aggs,
  m_woatt,
};

std::string to_string(Variant v);
/// Accepts the names printed by to_string; throws ConfigError otherwise.
Variant parse_variant(const std::string& s);
const std::vector<Variant>& all_variants();

enum class WeightSource { proposed, separate, fully_connected, none };
enum class CoarseFusion { dynamic, sum, none };
/// Which gate vector feeds the branch reliability.
enum class ReliabilitySource { normalized, gated };
/// What the temporal branch consumes.
enum class TemporalInput { color, field };

/// Structural switches. Each Variant is a preset of these.
struct VariantFlags {
  bool use_spatial = true;
  bool use_temporal = true;
  WeightSource weights = WeightSource::proposed;
  GateMode gate = GateMode::proposed;
  FusionDirection direction = FusionDirection::top_down;
  CoarseFusion coarse = CoarseFusion::dynamic;
  bool attention = true;
  Supervision supervision = Supervision::multiple;
};

VariantFlags flags_for(Variant v);

struct ModelConfig {
  EncoderConfig encoder;
  int final_channels = 16;
  std::array<int, 3> final_decoder_widths{16, 8, 8};
  double tau = kDefaultTau;
  ReliabilitySource reliability = ReliabilitySource::normalized;
  TemporalInput temporal_input = TemporalInput::color;
  /// Start the weight generators from w = 0 (equal gates).
  bool zero_init_weights = true;
};

/// Stacked network inputs for N samples.
struct Batch {
  Tensor frames;       // (N, 3, H, W)
  Tensor flow_images;  // (N, 3, H, W)
  Tensor flow_fields;  // (N, 2, H, W)
  Tensor masks;        // (N, 1, H, W)

  std::size_t size() const { return frames.shape().n; }
  /// Throws std::invalid_argument on an empty selection.
  static Batch from_samples(std::span<const VideoSample* const> samples);
  static Batch from_samples(std::span<const VideoSample> samples);
};

struct ForwardResult {
  Var s_s, s_t, s_c, s_f;  // absent maps are undefined
  Var w_s, w_t;            // (N, 5, 1, 1) raw weights, when a DWG exists
  GateSet gates;
  Var eps;                 // (N, 2, 1, 1), when both branches and weights exist
  Var f_final;
};

/// The full two-branch network.
class DsNet {
 public:
  DsNet(const ModelConfig& cfg, const VariantFlags& flags, std::uint64_t seed);
  DsNet(const ModelConfig& cfg, Variant variant, std::uint64_t seed) : DsNet(cfg, flags_for(variant), seed) {}

  /// Requires H and W divisible by 8.
  ForwardResult forward(const Batch& batch) const;

  ParamStore& params() { return *params_; }
  const ParamStore& params() const { return *params_; }
  const ModelConfig& config() const { return cfg_; }
  const VariantFlags& flags() const { return flags_; }

 private:
  ModelConfig cfg_;
  VariantFlags flags_;
  std::unique_ptr<ParamStore> params_;
  BranchEncoder spatial_;
  BranchEncoder temporal_;
  WeightGenerator dwg_s_;
  WeightGenerator dwg_t_;
  CrossAttentiveAggregation caa_;
  SaliencyDecoder final_decoder_;
};

/// The four output maps of one batch as plain tensors.
struct Prediction {
  Tensor s_s, s_t, s_c, s_f;  // empty when absent
  Tensor eps;                 // (N, 2, 1, 1) or empty
};

/// Anything that maps a batch to saliency maps.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Prediction predict(const Batch& batch) const = 0;
};

class NetworkPredictor : public Predictor {
 public:
  explicit NetworkPredictor(const DsNet& net) : net_(net) {}
  Prediction predict(const Batch& batch) const override;

 private:
  const DsNet& net_;
};

/// Returns the ground truth for every map; used to check the evaluation path.
class OracleStubPredictor : public Predictor {
 public:
  Prediction predict(const Batch& batch) const override;
};

}  // namespace dsnet
