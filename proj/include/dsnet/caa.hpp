#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "dsnet/encoder.hpp"

namespace dsnet {

inline constexpr double kDefaultTau = 0.6;

enum class GateStage { raw, normalized, gated };

/// The spatial/temporal weight pair at one pyramid level.
struct GatePair {
  double spatial = 0.0;
  double temporal = 0.0;
  GateStage stage = GateStage::raw;
};

/// Pairwise ("cross") softmax: v_s = e^{w_s} / (e^{w_s} + e^{w_t}),
/// v_t = 1 - v_s. Throws NumericError on non-finite input.
GatePair cross_normalize(double w_s, double w_t);

/// Hard gate: zeroes the weaker side when the gap v_t - v_s exceeds tau in
/// magnitude, otherwise returns the pair unchanged.
GatePair cross_threshold(const GatePair& v, double tau);

/// How per-level weights become the factors applied to the features.
enum class GateMode {
  proposed,           // softmax then threshold
  without_softmax,    // CAA-woS: threshold on raw weights
  without_threshold,  // CAA-woN: softmax only
  naive,              // raw weighted sum
  unit,               // both factors fixed at 1 (symmetric-sum baseline)
  spatial_only,       // factors (1, 0)
  temporal_only,      // factors (0, 1)
};

// Gate tensors have shape (N, 2, L, 1): channel 0 spatial, 1 temporal, row = level.

/// Stacks two (N, L, 1, 1) weight tensors into an (N, 2, L, 1) pair tensor.
Var stack_pair(const Var& w_s, const Var& w_t);
Var cross_softmax(const Var& raw_pair);
/// Gradient flows only to components the gate keeps.
Var cross_threshold(const Var& pair, double tau);
/// (N, 1, 1, 1) slice of one branch at one level.
Var gate_component(const Var& pair, std::size_t branch, std::size_t level);
/// Constant pair tensor with every level set to (spatial, temporal).
Var constant_pair(std::size_t batch, std::size_t levels, double spatial, double temporal);

struct GateSet {
  Var raw;         // undefined for the fixed modes
  Var normalized;  // softmax of raw, computed whenever raw is defined
  Var gated;       // factors applied to the features
};
GateSet make_gates(const Var& w_s, const Var& w_t, double tau, GateMode mode, std::size_t batch);

/// u_s * f_s + u_t * f_t.
Tensor aggregate_scale(const Tensor& f_s, const Tensor& f_t, const GatePair& gate);
/// w_s * f_s + w_t * f_t with raw weights.
Tensor naive_aggregate_scale(const Tensor& f_s, const Tensor& f_t, double w_s, double w_t);
/// Per-sample factors of shape (N, 1, 1, 1).
Var aggregate_scale(const Var& f_s, const Var& f_t, const Var& u_s, const Var& u_t);

struct ConvSpec {
  int kernel_size = 3;
  int padding = 1;
  int out_channels = 0;
};

/// Kernel/padding/width of the three convs of one fusion stage.
struct CaaStageConfig {
  int stage = 1;
  std::array<ConvSpec, 3> convs{};
};

/// Top-down schedule. Kernel sizes 3/3/5/7/3 and paddings 1/1/2/3/1 for
/// stages 1-5; inner widths are 1/8 of the reference widths
/// (64/128/256/512/256), and the third conv of stage i emits the channel
/// count of level i-1 (of `final_channels` for stage 1).
std::array<CaaStageConfig, kPyramidLevels> caa_schedule(const std::array<int, kPyramidLevels>& level_channels,
                                                        int final_channels);
/// Bottom-up schedule: same kernels and inner widths, but stage i emits the
/// channels of level i+1 (of `final_channels` for stage 5).
std::array<CaaStageConfig, kPyramidLevels> caa_bottom_up_schedule(
    const std::array<int, kPyramidLevels>& level_channels, int final_channels);

/// Three conv+relu layers followed by a bilinear resize: the transform
/// between fusion levels.
struct CaaStage {
  std::array<ConvParams, 3> convs;

  int in_channels() const { return convs[0].in_channels; }
  int out_channels() const { return convs[2].out_channels; }
  Var transform(const Var& x, std::size_t out_h, std::size_t out_w) const;
};

CaaStage make_caa_stage(ParamStore& store, const std::string& prefix, int in_channels, const CaaStageConfig& cfg);

/// F_L = A_L; F_i = T_{i+1}(F_{i+1}) + A_i; returns T_1(F_1) resized to
/// (out_h, out_w). `aggregated` is finest first; stage i consumes F_i.
Var top_down_fuse(std::span<const Var> aggregated, std::span<const CaaStage> stages, std::size_t out_h,
                  std::size_t out_w);
/// B_1 = A_1; B_{i+1} = T_i(B_i) + A_{i+1} with T_i resizing to level i+1;
/// returns T_L(B_L) resized to (out_h, out_w).
Var bottom_up_fuse(std::span<const Var> aggregated, std::span<const CaaStage> stages, std::size_t out_h,
                   std::size_t out_w);

enum class FusionDirection { top_down, bottom_up };

/// Owns the five fusion stages for one direction and runs per-level
/// aggregation followed by progressive fusion.
class CrossAttentiveAggregation {
 public:
  CrossAttentiveAggregation() = default;
  /// Throws ShapeError if a stage's output channels cannot be added to the
  /// level it feeds.
  CrossAttentiveAggregation(ParamStore& store, const std::string& prefix,
                            const std::array<int, kPyramidLevels>& level_channels, int final_channels,
                            FusionDirection direction);

  /// Per-level F_agg. A missing pyramid (nullptr) means that branch is
  /// absent and the other branch's features pass through unweighted.
  std::vector<Var> aggregate(const FeaturePyramid* spatial, const FeaturePyramid* temporal, const Var& gated) const;

  Var fuse(std::span<const Var> aggregated, std::size_t out_h, std::size_t out_w) const;

  FusionDirection direction() const { return direction_; }
  const std::vector<CaaStage>& stages() const { return stages_; }

 private:
  FusionDirection direction_ = FusionDirection::top_down;
  std::vector<CaaStage> stages_;
};

}  // namespace dsnet
