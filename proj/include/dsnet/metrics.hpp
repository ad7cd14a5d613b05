#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dsnet/tensor.hpp"

namespace dsnet {

inline constexpr std::size_t kThresholds = 256;
inline constexpr double kBeta2 = 0.3;

// Metric inputs are single maps: any tensor with N * C == 1. Ground truth is
// binarized at 0.5.

double mae(const Tensor& s, const Tensor& y);

/// (1 + b2) P R / (b2 P + R); 0 when the denominator is 0.
double f_measure(double precision, double recall, double beta2 = kBeta2);

/// 8-bit level used for thresholding: floor(s * 255) clamped to [0, 255].
std::uint8_t quantize(double s);

/// Precision/recall at thresholds 0..255, predicting positive where the
/// quantized map is >= t. An empty prediction has P = 1; an empty ground
/// truth has R = 1.
struct PrCurve {
  std::array<int, kThresholds> thresholds{};
  std::array<double, kThresholds> precision{};
  std::array<double, kThresholds> recall{};

  std::array<double, kThresholds> f_measures(double beta2 = kBeta2) const;
  double max_f(double beta2 = kBeta2) const;
};

PrCurve pr_curve(const Tensor& s, const Tensor& y);
/// Dataset curve: P and R averaged over frames. Throws on an empty input.
PrCurve mean_pr_curve(std::span<const PrCurve> curves);
double max_f(const Tensor& s, const Tensor& y);

/// Structure measure with alpha = 0.5 (object-aware plus region-aware terms).
double s_measure(const Tensor& s, const Tensor& y);

struct MetricsReport {
  std::size_t frames = 0;
  double mae = 0.0;
  double max_f = 0.0;
  double s_measure = 0.0;
  PrCurve curve;
};

/// Accumulates per-frame metrics and reports dataset means.
class MetricAccumulator {
 public:
  void add(const Tensor& s, const Tensor& y);
  std::size_t frames() const { return curves_.size(); }
  /// Throws std::invalid_argument when no frame was added.
  MetricsReport report() const;

 private:
  std::vector<PrCurve> curves_;
  double mae_sum_ = 0.0;
  double s_sum_ = 0.0;
};

}  // namespace dsnet
