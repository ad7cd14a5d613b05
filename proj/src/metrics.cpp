#include "dsnet/metrics.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <stdexcept>

namespace dsnet {

namespace {

struct MapView {
  const double* data;
  std::size_t h;
  std::size_t w;
};

MapView as_map(const Tensor& t, const char* op) {
  const Shape& s = t.shape();
  if (s.n * s.c != 1) throw ShapeError(std::string(op) + ": expected a single map, got " + s.str());
  if (s.h == 0 || s.w == 0) throw ShapeError(std::string(op) + ": empty map");
  return {t.data(), s.h, s.w};
}

bool positive(double y) { return y >= 0.5; }

}  // namespace

double mae(const Tensor& s, const Tensor& y) {
  require_same_shape(s.shape(), y.shape(), "mae");
  const MapView ms = as_map(s, "mae");
  const std::size_t n = ms.h * ms.w;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(s[i] - y[i]);
  return acc / static_cast<double>(n);
}

double f_measure(double precision, double recall, double beta2) {
  const double denom = beta2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta2) * precision * recall / denom;
}

std::uint8_t quantize(double s) {
  const double q = std::floor(s * 255.0);
  if (!(q > 0.0)) return 0;
  if (q >= 255.0) return 255;
  return static_cast<std::uint8_t>(q);
}

std::array<double, kThresholds> PrCurve::f_measures(double beta2) const {
  std::array<double, kThresholds> f{};
  for (std::size_t t = 0; t < kThresholds; ++t) f[t] = f_measure(precision[t], recall[t], beta2);
  return f;
}

double PrCurve::max_f(double beta2) const {
  const auto f = f_measures(beta2);
  return *std::max_element(f.begin(), f.end());
}

PrCurve pr_curve(const Tensor& s, const Tensor& y) {
  require_same_shape(s.shape(), y.shape(), "pr_curve");
  const MapView ms = as_map(s, "pr_curve");
  const std::size_t n = ms.h * ms.w;
  std::array<std::size_t, kThresholds> pos_hist{};
  std::array<std::size_t, kThresholds> neg_hist{};
  std::size_t total_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t q = quantize(s[i]);
    if (positive(y[i])) {
      ++pos_hist[q];
      ++total_pos;
    } else {
      ++neg_hist[q];
    }
  }
  PrCurve c;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t k = kThresholds; k-- > 0;) {
    tp += pos_hist[k];
    fp += neg_hist[k];
    c.thresholds[k] = static_cast<int>(k);
    c.precision[k] = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    c.recall[k] = total_pos == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(total_pos);
  }
  return c;
}

PrCurve mean_pr_curve(std::span<const PrCurve> curves) {
  if (curves.empty()) throw std::invalid_argument("mean_pr_curve: empty dataset");
  PrCurve m;
  for (std::size_t t = 0; t < kThresholds; ++t) {
    double p = 0.0;
    double r = 0.0;
    for (const auto& c : curves) {
      p += c.precision[t];
      r += c.recall[t];
    }
    m.thresholds[t] = static_cast<int>(t);
    m.precision[t] = p / static_cast<double>(curves.size());
    m.recall[t] = r / static_cast<double>(curves.size());
  }
  return m;
}

double max_f(const Tensor& s, const Tensor& y) { return pr_curve(s, y).max_f(); }

namespace {

constexpr double kEps = DBL_EPSILON;

// Region term of one block: the structural similarity index over the block.
double block_ssim(const MapView& s, const std::vector<double>& gt, std::size_t r0, std::size_t r1, std::size_t c0,
                  std::size_t c1) {
  const std::size_t count = (r1 - r0) * (c1 - c0);
  if (count == 0) return 0.0;
  double sx = 0.0;
  double sy = 0.0;
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      sx += s.data[r * s.w + c];
      sy += gt[r * s.w + c];
    }
  }
  const double n = static_cast<double>(count);
  const double x = sx / n;
  const double y = sy / n;
  double vx = 0.0;
  double vy = 0.0;
  double cxy = 0.0;
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      const double dx = s.data[r * s.w + c] - x;
      const double dy = gt[r * s.w + c] - y;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
  }
  vx /= n - 1.0 + kEps;
  vy /= n - 1.0 + kEps;
  cxy /= n - 1.0 + kEps;
  const double alpha = 4.0 * x * y * cxy;
  const double beta = (x * x + y * y) * (vx + vy);
  if (alpha != 0.0) return alpha / (beta + kEps);
  if (beta == 0.0) return 1.0;
  return 0.0;
}

// Object term: 2x / (x^2 + 1 + sigma + eps) over the values selected by `mask`.
double object_score(const std::vector<double>& values, const std::vector<bool>& mask) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!mask[i]) continue;
    sum += values[i];
    ++count;
  }
  if (count == 0) return 0.0;
  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mask[i]) sq += (values[i] - mean) * (values[i] - mean);
  }
  const double sigma = count > 1 ? std::sqrt(sq / static_cast<double>(count - 1)) : 0.0;
  return 2.0 * mean / (mean * mean + 1.0 + sigma + kEps);
}

}  // namespace

double s_measure(const Tensor& s, const Tensor& y) {
  require_same_shape(s.shape(), y.shape(), "s_measure");
  const MapView ms = as_map(s, "s_measure");
  const std::size_t n = ms.h * ms.w;
  std::vector<double> gt(n);
  std::vector<bool> fg(n);
  double gt_sum = 0.0;
  double s_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    fg[i] = positive(y[i]);
    gt[i] = fg[i] ? 1.0 : 0.0;
    gt_sum += gt[i];
    s_sum += s[i];
  }
  const double gt_mean = gt_sum / static_cast<double>(n);
  const double s_mean = s_sum / static_cast<double>(n);
  if (gt_mean == 0.0) return 1.0 - s_mean;
  if (gt_mean == 1.0) return s_mean;

  // Object-aware term.
  std::vector<double> pred_fg(n);
  std::vector<double> pred_bg(n);
  std::vector<bool> bg(n);
  for (std::size_t i = 0; i < n; ++i) {
    pred_fg[i] = fg[i] ? s[i] : 0.0;
    pred_bg[i] = fg[i] ? 0.0 : 1.0 - s[i];
    bg[i] = !fg[i];
  }
  const double s_object =
      gt_mean * object_score(pred_fg, fg) + (1.0 - gt_mean) * object_score(pred_bg, bg);

  // Region-aware term: split at the ground-truth centroid into four blocks.
  double col_moment = 0.0;
  double row_moment = 0.0;
  for (std::size_t r = 0; r < ms.h; ++r) {
    for (std::size_t c = 0; c < ms.w; ++c) {
      col_moment += gt[r * ms.w + c] * static_cast<double>(c + 1);
      row_moment += gt[r * ms.w + c] * static_cast<double>(r + 1);
    }
  }
  const auto cx = static_cast<std::size_t>(std::round(col_moment / gt_sum));
  const auto cy = static_cast<std::size_t>(std::round(row_moment / gt_sum));
  const double area = static_cast<double>(n);
  const double w1 = static_cast<double>(cx * cy) / area;
  const double w2 = static_cast<double>((ms.w - cx) * cy) / area;
  const double w3 = static_cast<double>(cx * (ms.h - cy)) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  const double q1 = block_ssim(ms, gt, 0, cy, 0, cx);
  const double q2 = block_ssim(ms, gt, 0, cy, cx, ms.w);
  const double q3 = block_ssim(ms, gt, cy, ms.h, 0, cx);
  const double q4 = block_ssim(ms, gt, cy, ms.h, cx, ms.w);
  const double s_region = w1 * q1 + w2 * q2 + w3 * q3 + w4 * q4;

  const double q = 0.5 * s_object + 0.5 * s_region;
  return q < 0.0 ? 0.0 : q;
}

void MetricAccumulator::add(const Tensor& s, const Tensor& y) {
  curves_.push_back(pr_curve(s, y));
  mae_sum_ += mae(s, y);
  s_sum_ += s_measure(s, y);
}

MetricsReport MetricAccumulator::report() const {
  if (curves_.empty()) throw std::invalid_argument("metrics: empty dataset");
  MetricsReport r;
  r.frames = curves_.size();
  r.curve = mean_pr_curve(curves_);
  r.max_f = r.curve.max_f();
  r.mae = mae_sum_ / static_cast<double>(r.frames);
  r.s_measure = s_sum_ / static_cast<double>(r.frames);
  return r;
}

}  // namespace dsnet
