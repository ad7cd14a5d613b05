#pragma once

// Brute-force reference implementations shared by the unit and acceptance
// tests. Each one is written directly from the definition, with nested loops
// and no code shared with the library.

#include <algorithm>
#include <array>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dsnet/rng.hpp"
#include "dsnet/tensor.hpp"

namespace oracle {

using dsnet::Shape;
using dsnet::Tensor;

inline Tensor random_tensor(dsnet::Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_mask(dsnet::Rng& rng, Shape s, double p = 0.5) {
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform() < p ? 1.0 : 0.0;
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

/// Zero-padded dilated strided convolution, one output element at a time.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int pad, int dil, int stride) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  const long k = static_cast<long>(ws.h);
  const long ho = (static_cast<long>(xs.h) + 2 * pad - dil * (k - 1) - 1) / stride + 1;
  const long wo = (static_cast<long>(xs.w) + 2 * pad - dil * (k - 1) - 1) / stride + 1;
  Tensor y(Shape{xs.n, ws.n, static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t o = 0; o < ws.n; ++o)
      for (long i = 0; i < ho; ++i)
        for (long j = 0; j < wo; ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < xs.c; ++c)
            for (long ki = 0; ki < k; ++ki)
              for (long kj = 0; kj < k; ++kj) {
                const long r = i * stride - pad + ki * dil;
                const long q = j * stride - pad + kj * dil;
                if (r < 0 || q < 0 || r >= static_cast<long>(xs.h) || q >= static_cast<long>(xs.w)) continue;
                acc += w.at(o, c, ki, kj) * x.at(n, c, r, q);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

/// Corner-aligned bilinear interpolation as a weighted sum of four neighbours.
inline Tensor resize_bilinear(const Tensor& x, std::size_t oh, std::size_t ow) {
  const Shape s = x.shape();
  Tensor y(Shape{s.n, s.c, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          const double sy = oh > 1 ? static_cast<double>(i) * (s.h - 1) / (oh - 1) : 0.0;
          const double sx = ow > 1 ? static_cast<double>(j) * (s.w - 1) / (ow - 1) : 0.0;
          const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(sy), s.h - 1);
          const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(sx), s.w - 1);
          const std::size_t y1 = std::min(y0 + 1, s.h - 1);
          const std::size_t x1 = std::min(x0 + 1, s.w - 1);
          const double fy = sy - y0;
          const double fx = sx - x0;
          y.at(n, c, i, j) = (1 - fy) * (1 - fx) * x.at(n, c, y0, x0) + (1 - fy) * fx * x.at(n, c, y0, x1) +
                             fy * (1 - fx) * x.at(n, c, y1, x0) + fy * fx * x.at(n, c, y1, x1);
        }
  return y;
}

inline Tensor global_avg_pool(const Tensor& x) {
  const Shape s = x.shape();
  Tensor y(Shape{s.n, s.c, 1, 1});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j) acc += x.at(n, c, i, j);
      y.at(n, c, 0, 0) = acc / static_cast<double>(s.h * s.w);
    }
  return y;
}

/// a * x + b * y element by element.
inline Tensor weighted_sum(const Tensor& x, double a, const Tensor& y, double b) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

inline double bce(const Tensor& s, const Tensor& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double p = std::min(std::max(s[i], 1e-7), 1.0 - 1e-7);
    acc += y[i] > 0.5 ? -std::log(p) : -std::log(1.0 - p);
  }
  return acc / static_cast<double>(s.size());
}

inline double mae(const Tensor& s, const Tensor& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += std::fabs(s[i] - (y[i] >= 0.5 ? 1.0 : 0.0));
  return acc / static_cast<double>(s.size());
}

struct Pr {
  std::array<double, 256> precision{};
  std::array<double, 256> recall{};
};

/// One pass over the pixels per threshold.
inline Pr pr_curve(const Tensor& s, const Tensor& y) {
  Pr r;
  for (int t = 0; t < 256; ++t) {
    double tp = 0, pp = 0, gp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      int q = static_cast<int>(std::floor(s[i] * 255.0));
      q = std::clamp(q, 0, 255);
      const bool pred = q >= t;
      const bool gt = y[i] >= 0.5;
      tp += pred && gt;
      pp += pred;
      gp += gt;
    }
    r.precision[t] = pp == 0 ? 1.0 : tp / pp;
    r.recall[t] = gp == 0 ? 1.0 : tp / gp;
  }
  return r;
}

/// Straight-line port of the reference structure measure on an H x W map.
class StructureMeasure {
 public:
  StructureMeasure(const std::vector<double>& pred, const std::vector<int>& gt, int h, int w)
      : p_(pred), g_(gt), h_(h), w_(w) {}

  double operator()() const {
    double gm = 0, pm = 0;
    for (int i = 0; i < h_ * w_; ++i) {
      gm += g_[i];
      pm += p_[i];
    }
    gm /= h_ * w_;
    pm /= h_ * w_;
    if (gm == 0) return 1.0 - pm;
    if (gm == 1) return pm;
    const double q = 0.5 * object() + 0.5 * region();
    return q < 0 ? 0.0 : q;
  }

 private:
  static double obj_score(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= v.size();
    double sd = 0;
    if (v.size() > 1) {
      for (double x : v) sd += (x - m) * (x - m);
      sd = std::sqrt(sd / (v.size() - 1));
    }
    return 2.0 * m / (m * m + 1.0 + sd + DBL_EPSILON);
  }

  double object() const {
    std::vector<double> fg, bg;
    double u = 0;
    for (int i = 0; i < h_ * w_; ++i) {
      if (g_[i]) {
        fg.push_back(p_[i]);
        u += 1;
      } else {
        bg.push_back(1.0 - p_[i]);
      }
    }
    u /= h_ * w_;
    return u * obj_score(fg) + (1 - u) * obj_score(bg);
  }

  double block_ssim(int r0, int r1, int c0, int c1) const {
    const int n = (r1 - r0) * (c1 - c0);
    if (n <= 0) return 0.0;
    double x = 0, y = 0;
    for (int r = r0; r < r1; ++r)
      for (int c = c0; c < c1; ++c) {
        x += p_[r * w_ + c];
        y += g_[r * w_ + c];
      }
    x /= n;
    y /= n;
    double sx = 0, sy = 0, sxy = 0;
    for (int r = r0; r < r1; ++r)
      for (int c = c0; c < c1; ++c) {
        const double a = p_[r * w_ + c] - x;
        const double b = g_[r * w_ + c] - y;
        sx += a * a;
        sy += b * b;
        sxy += a * b;
      }
    sx /= n - 1 + DBL_EPSILON;
    sy /= n - 1 + DBL_EPSILON;
    sxy /= n - 1 + DBL_EPSILON;
    const double alpha = 4 * x * y * sxy;
    const double beta = (x * x + y * y) * (sx + sy);
    if (alpha != 0) return alpha / (beta + DBL_EPSILON);
    if (beta == 0) return 1.0;
    return 0.0;
  }

  double region() const {
    double total = 0, sx = 0, sy = 0;
    for (int r = 0; r < h_; ++r)
      for (int c = 0; c < w_; ++c) {
        total += g_[r * w_ + c];
        sx += g_[r * w_ + c] * (c + 1);
        sy += g_[r * w_ + c] * (r + 1);
      }
    const int X = static_cast<int>(std::floor(sx / total + 0.5));
    const int Y = static_cast<int>(std::floor(sy / total + 0.5));
    const double area = static_cast<double>(h_) * w_;
    const double w1 = X * Y / area;
    const double w2 = (w_ - X) * Y / area;
    const double w3 = X * (h_ - Y) / area;
    const double w4 = 1.0 - w1 - w2 - w3;
    return w1 * block_ssim(0, Y, 0, X) + w2 * block_ssim(0, Y, X, w_) + w3 * block_ssim(Y, h_, 0, X) +
           w4 * block_ssim(Y, h_, X, w_);
  }

  std::vector<double> p_;
  std::vector<int> g_;
  int h_, w_;
};

inline double s_measure(const Tensor& s, const Tensor& y) {
  const Shape sh = s.shape();
  std::vector<double> p(s.values().begin(), s.values().end());
  std::vector<int> g(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = y[i] >= 0.5 ? 1 : 0;
  return StructureMeasure(p, g, static_cast<int>(sh.h), static_cast<int>(sh.w))();
}

}  // namespace oracle
