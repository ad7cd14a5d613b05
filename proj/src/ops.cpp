#include "dsnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace dsnet {
namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

struct ConvGeom {
  std::size_t c, h, w, k, ho, wo;
  long pad, dil, stride;
  std::size_t rows() const { return c * k * k; }
  std::size_t cols() const { return ho * wo; }
  bool pointwise() const { return k == 1 && pad == 0 && stride == 1; }
};

void im2col(const double* x, const ConvGeom& g, double* cols) {
  const std::size_t p = g.cols();
  for (std::size_t c = 0; c < g.c; ++c) {
    const double* xc = x + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = cols + ((c * g.k + ki) * g.k + kj) * p;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ki) * g.dil;
          double* out = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(out, out + g.wo, 0.0);
            continue;
          }
          const double* xr = xc + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kj) * g.dil;
            out[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : xr[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeom& g, double* dx) {
  const std::size_t p = g.cols();
  for (std::size_t c = 0; c < g.c; ++c) {
    double* dxc = dx + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = cols + ((c * g.k + ki) * g.k + kj) * p;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ki) * g.dil;
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dr = dxc + static_cast<std::size_t>(iy) * g.w;
          const double* in = row + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kj) * g.dil;
            if (ix >= 0 && ix < static_cast<long>(g.w)) dr[ix] += in[ox];
          }
        }
      }
    }
  }
}

// Per-axis corner-aligned interpolation table.
struct Axis {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

Axis make_axis(std::size_t in, std::size_t out) {
  Axis a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.frac.resize(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = 0.0;
    if (out > 1) src = static_cast<double>(i * (in - 1)) / static_cast<double>(out - 1);
    auto lo = static_cast<std::size_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    a.lo[i] = lo;
    a.hi[i] = std::min(lo + 1, in - 1);
    a.frac[i] = src - static_cast<double>(lo);
  }
  return a;
}

}  // namespace

void ConvParams::validate() const {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ShapeError("conv2d: kernel_size must be odd and positive, got " + std::to_string(kernel_size));
  }
  if (padding < 0 || dilation < 1 || stride < 1) {
    throw ShapeError("conv2d: invalid padding/dilation/stride");
  }
  if (in_channels < 1 || out_channels < 1) throw ShapeError("conv2d: channel counts must be positive");
  const Shape ws{static_cast<std::size_t>(out_channels), static_cast<std::size_t>(in_channels),
                 static_cast<std::size_t>(kernel_size), static_cast<std::size_t>(kernel_size)};
  if (!weight.defined() || !(weight.shape() == ws)) {
    throw ShapeError("conv2d: weight shape " + (weight.defined() ? weight.shape().str() : std::string("<none>")) +
                     " does not match expected " + ws.str());
  }
  const Shape bs{static_cast<std::size_t>(out_channels), 1, 1, 1};
  if (!bias.defined() || !(bias.shape() == bs)) throw ShapeError("conv2d: bias shape mismatch, expected " + bs.str());
}

std::size_t ConvParams::output_extent(std::size_t input) const {
  const long span = static_cast<long>(dilation) * (kernel_size - 1) + 1;
  const long padded = static_cast<long>(input) + 2L * padding;
  if (padded < span) return 0;
  return static_cast<std::size_t>((padded - span) / stride + 1);
}

Var conv2d(const Var& x, const ConvParams& p) {
  p.validate();
  const Shape xs = x.shape();
  if (xs.c != static_cast<std::size_t>(p.in_channels)) {
    throw ShapeError("conv2d: channels mismatch, input has " + std::to_string(xs.c) + " but layer expects " +
                     std::to_string(p.in_channels));
  }
  const std::size_t ho = p.output_extent(xs.h);
  const std::size_t wo = p.output_extent(xs.w);
  if (ho == 0) throw ShapeError("conv2d: height " + std::to_string(xs.h) + " too small for receptive field");
  if (wo == 0) throw ShapeError("conv2d: width " + std::to_string(xs.w) + " too small for receptive field");

  ConvGeom g{xs.c, xs.h, xs.w, static_cast<std::size_t>(p.kernel_size), ho, wo, p.padding, p.dilation, p.stride};
  const auto out_c = static_cast<std::size_t>(p.out_channels);
  Tensor y(Shape{xs.n, out_c, ho, wo});

  const CMapR wmat(p.weight.value().data(), static_cast<Eigen::Index>(out_c), static_cast<Eigen::Index>(g.rows()));
  AlignedBuffer cols(g.pointwise() ? 0 : g.rows() * g.cols());
  const double* bias = p.bias.value().data();
  for (std::size_t n = 0; n < xs.n; ++n) {
    const double* xn = x.value().plane(n, 0);
    const double* colp = xn;
    if (!g.pointwise()) {
      im2col(xn, g, cols.data());
      colp = cols.data();
    }
    const CMapR cm(colp, static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
    MapR ym(y.plane(n, 0), static_cast<Eigen::Index>(out_c), static_cast<Eigen::Index>(g.cols()));
    ym.noalias() = wmat * cm;
    for (std::size_t o = 0; o < out_c; ++o) ym.row(static_cast<Eigen::Index>(o)).array() += bias[o];
  }

  const Var weight = p.weight;
  const Var bias_var = p.bias;
  return make_node(std::move(y), {x, weight, bias_var}, [x, weight, bias_var, g, out_c](Node& self) {
    const Tensor& gy = self.grad;
    const std::size_t batch = gy.shape().n;
    const auto oc = static_cast<Eigen::Index>(out_c);
    const auto rows = static_cast<Eigen::Index>(g.rows());
    const auto ncols = static_cast<Eigen::Index>(g.cols());
    AlignedBuffer cols(g.pointwise() ? 0 : g.rows() * g.cols());
    AlignedBuffer dcols(g.pointwise() ? 0 : g.rows() * g.cols());
    for (std::size_t n = 0; n < batch; ++n) {
      const CMapR gm(gy.plane(n, 0), oc, ncols);
      if (weight.requires_grad()) {
        const double* colp = x.value().plane(n, 0);
        if (!g.pointwise()) {
          im2col(colp, g, cols.data());
          colp = cols.data();
        }
        const CMapR cm(colp, rows, ncols);
        MapR dw(weight.node()->grad_buffer().data(), oc, rows);
        dw.noalias() += gm * cm.transpose();
      }
      if (bias_var.requires_grad()) {
        double* db = bias_var.node()->grad_buffer().data();
        for (Eigen::Index o = 0; o < oc; ++o) db[o] += gm.row(o).sum();
      }
      if (x.requires_grad()) {
        const CMapR wm(weight.value().data(), oc, rows);
        double* dx = x.node()->grad_buffer().plane(n, 0);
        if (g.pointwise()) {
          MapR dxm(dx, rows, ncols);
          dxm.noalias() += wm.transpose() * gm;
        } else {
          MapR dc(dcols.data(), rows, ncols);
          dc.noalias() = wm.transpose() * gm;
          col2im_add(dcols.data(), g, dx);
        }
      }
    }
  });
}

Var resize_bilinear(const Var& x, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ShapeError("resize_bilinear: zero-sized target");
  const Shape xs = x.shape();
  if (xs.h == 0 || xs.w == 0) throw ShapeError("resize_bilinear: zero-sized input");
  if (out_h == xs.h && out_w == xs.w) return x;

  const Axis ay = make_axis(xs.h, out_h);
  const Axis ax = make_axis(xs.w, out_w);
  Tensor y(Shape{xs.n, xs.c, out_h, out_w});
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t c = 0; c < xs.c; ++c) {
      const double* src = x.value().plane(n, c);
      double* dst = y.plane(n, c);
      for (std::size_t i = 0; i < out_h; ++i) {
        const double* r0 = src + ay.lo[i] * xs.w;
        const double* r1 = src + ay.hi[i] * xs.w;
        for (std::size_t j = 0; j < out_w; ++j) {
          // Difference form keeps constants exact.
          const double top = r0[ax.lo[j]] + ax.frac[j] * (r0[ax.hi[j]] - r0[ax.lo[j]]);
          const double bot = r1[ax.lo[j]] + ax.frac[j] * (r1[ax.hi[j]] - r1[ax.lo[j]]);
          dst[i * out_w + j] = top + ay.frac[i] * (bot - top);
        }
      }
    }
  }
  return make_node(std::move(y), {x}, [x, ay, ax, xs, out_h, out_w](Node& self) {
    Tensor& gx = x.node()->grad_buffer();
    for (std::size_t n = 0; n < xs.n; ++n) {
      for (std::size_t c = 0; c < xs.c; ++c) {
        const double* g = self.grad.plane(n, c);
        double* d = gx.plane(n, c);
        for (std::size_t i = 0; i < out_h; ++i) {
          double* r0 = d + ay.lo[i] * xs.w;
          double* r1 = d + ay.hi[i] * xs.w;
          const double fy = ay.frac[i];
          for (std::size_t j = 0; j < out_w; ++j) {
            const double fx = ax.frac[j];
            const double gv = g[i * out_w + j];
            r0[ax.lo[j]] += gv * (1.0 - fx) * (1.0 - fy);
            r0[ax.hi[j]] += gv * fx * (1.0 - fy);
            r1[ax.lo[j]] += gv * (1.0 - fx) * fy;
            r1[ax.hi[j]] += gv * fx * fy;
          }
        }
      }
    }
  });
}

Var upsample_bilinear(const Var& x, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ShapeError("upsample_bilinear: zero-sized target");
  if (out_h < x.shape().h) throw ShapeError("upsample_bilinear: target height smaller than input height");
  if (out_w < x.shape().w) throw ShapeError("upsample_bilinear: target width smaller than input width");
  return resize_bilinear(x, out_h, out_w);
}

Var global_avg_pool(const Var& x) {
  const Shape xs = x.shape();
  if (xs.h == 0 || xs.w == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  const std::size_t plane = xs.plane();
  Tensor y(Shape{xs.n, xs.c, 1, 1});
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t c = 0; c < xs.c; ++c) {
      const double* p = x.value().plane(n, c);
      double s = 0.0;
      for (std::size_t k = 0; k < plane; ++k) s += p[k];
      y.at(n, c, 0, 0) = s / static_cast<double>(plane);
    }
  }
  return make_node(std::move(y), {x}, [x, xs, plane](Node& self) {
    Tensor& gx = x.node()->grad_buffer();
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t n = 0; n < xs.n; ++n) {
      for (std::size_t c = 0; c < xs.c; ++c) {
        const double g = self.grad.at(n, c, 0, 0) * inv;
        double* d = gx.plane(n, c);
        for (std::size_t k = 0; k < plane; ++k) d[k] += g;
      }
    }
  });
}

Var add(const Var& x, const Var& y) {
  require_same_shape(x.shape(), y.shape(), "add");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] + y.value()[i];
  return make_node(std::move(out), {x, y}, [x, y](Node& self) {
    for (const Var* v : {&x, &y}) {
      if (!v->requires_grad()) continue;
      Tensor& g = v->node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var mul(const Var& x, const Var& y) {
  require_same_shape(x.shape(), y.shape(), "mul");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * y.value()[i];
  return make_node(std::move(out), {x, y}, [x, y](Node& self) {
    if (x.requires_grad()) {
      Tensor& g = x.node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value()[i];
    }
    if (y.requires_grad()) {
      Tensor& g = y.node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value()[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * factor;
  return make_node(std::move(out), {x}, [x, factor](Node& self) {
    Tensor& g = x.node()->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

namespace {
thread_local bool pattern_probe_active = false;
thread_local std::uint64_t pattern_hash = 0;
}  // namespace

ReluPatternProbe::ReluPatternProbe() {
  pattern_probe_active = true;
  pattern_hash = 14695981039346656037ull;
}
ReluPatternProbe::~ReluPatternProbe() { pattern_probe_active = false; }
std::uint64_t ReluPatternProbe::pattern() const { return pattern_hash; }

Var relu(const Var& x) {
  if (pattern_probe_active) {
    for (double v : x.value().values()) pattern_hash = (pattern_hash ^ (v > 0.0 ? 0x9bu : 0x31u)) * 1099511628211ull;
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] > 0.0 ? x.value()[i] : 0.0;
  return make_node(std::move(out), {x}, [x](Node& self) {
    Tensor& g = x.node()->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x.value()[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

double sigmoid_scalar(double x) {
  const double z = std::clamp(x, -40.0, 40.0);
  return 1.0 / (1.0 + std::exp(-z));
}

Var sigmoid(const Var& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(x.value()[i]);
  return make_node(std::move(out), {x}, [x](Node& self) {
    Tensor& g = x.node()->grad_buffer();
    const Tensor& s = self.value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x.value()[i];
      if (v > -40.0 && v < 40.0) g[i] += self.grad[i] * s[i] * (1.0 - s[i]);
    }
  });
}

Var clamp01(const Var& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x.value()[i], 0.0, 1.0);
  return make_node(std::move(out), {x}, [x](Node& self) {
    Tensor& g = x.node()->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x.value()[i];
      if (v > 0.0 && v < 1.0) g[i] += self.grad[i];
    }
  });
}

Var concat_channels(std::span<const Var> xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape first = xs.front().shape();
  std::size_t channels = 0;
  for (const auto& v : xs) {
    const Shape& s = v.shape();
    if (s.n != first.n) throw ShapeError("concat_channels: batch mismatch " + s.str() + " vs " + first.str());
    if (s.h != first.h) throw ShapeError("concat_channels: height mismatch " + s.str() + " vs " + first.str());
    if (s.w != first.w) throw ShapeError("concat_channels: width mismatch " + s.str() + " vs " + first.str());
    channels += s.c;
  }
  Tensor out(Shape{first.n, channels, first.h, first.w});
  const std::size_t plane = first.plane();
  for (std::size_t n = 0; n < first.n; ++n) {
    std::size_t offset = 0;
    for (const auto& v : xs) {
      const std::size_t c = v.shape().c;
      std::copy(v.value().plane(n, 0), v.value().plane(n, 0) + c * plane, out.plane(n, offset));
      offset += c;
    }
  }
  std::vector<Var> parents(xs.begin(), xs.end());
  return make_node(std::move(out), parents, [parents, plane](Node& self) {
    const std::size_t batch = self.value.shape().n;
    for (std::size_t n = 0; n < batch; ++n) {
      std::size_t offset = 0;
      for (const auto& v : parents) {
        const std::size_t c = v.shape().c;
        if (v.requires_grad()) {
          double* g = v.node()->grad_buffer().plane(n, 0);
          const double* src = self.grad.plane(n, offset);
          for (std::size_t k = 0; k < c * plane; ++k) g[k] += src[k];
        }
        offset += c;
      }
    }
  });
}

Var slice_channels(const Var& x, std::size_t begin, std::size_t count) {
  const Shape xs = x.shape();
  if (begin + count > xs.c) throw ShapeError("slice_channels: channel range exceeds " + std::to_string(xs.c));
  Tensor out(Shape{xs.n, count, xs.h, xs.w});
  const std::size_t plane = xs.plane();
  for (std::size_t n = 0; n < xs.n; ++n) {
    std::copy(x.value().plane(n, begin), x.value().plane(n, begin) + count * plane, out.plane(n, 0));
  }
  return make_node(std::move(out), {x}, [x, begin, count, plane](Node& self) {
    Tensor& g = x.node()->grad_buffer();
    for (std::size_t n = 0; n < self.value.shape().n; ++n) {
      double* d = g.plane(n, begin);
      const double* s = self.grad.plane(n, 0);
      for (std::size_t k = 0; k < count * plane; ++k) d[k] += s[k];
    }
  });
}

Var scale_by_sample(const Var& x, const Var& s) {
  const Shape xs = x.shape();
  const Shape ss = s.shape();
  if (ss.n != xs.n) throw ShapeError("scale_by_sample: batch mismatch " + ss.str() + " vs " + xs.str());
  if (ss.c != 1 || ss.h != 1 || ss.w != 1) throw ShapeError("scale_by_sample: scale must be (N, 1, 1, 1), got " + ss.str());
  const std::size_t stride = xs.c * xs.plane();
  Tensor out(xs);
  for (std::size_t n = 0; n < xs.n; ++n) {
    const double f = s.value()[n];
    const double* src = x.value().data() + n * stride;
    double* dst = out.data() + n * stride;
    for (std::size_t k = 0; k < stride; ++k) dst[k] = src[k] * f;
  }
  return make_node(std::move(out), {x, s}, [x, s, stride](Node& self) {
    const std::size_t batch = self.value.shape().n;
    for (std::size_t n = 0; n < batch; ++n) {
      const double* g = self.grad.data() + n * stride;
      if (x.requires_grad()) {
        double* d = x.node()->grad_buffer().data() + n * stride;
        const double f = s.value()[n];
        for (std::size_t k = 0; k < stride; ++k) d[k] += g[k] * f;
      }
      if (s.requires_grad()) {
        const double* src = x.value().data() + n * stride;
        double acc = 0.0;
        for (std::size_t k = 0; k < stride; ++k) acc += g[k] * src[k];
        s.node()->grad_buffer()[n] += acc;
      }
    }
  });
}

Var mul_broadcast_channels(const Var& x, const Var& m) {
  const Shape xs = x.shape();
  const Shape ms = m.shape();
  if (ms.n != xs.n || ms.c != 1 || ms.h != xs.h || ms.w != xs.w) {
    throw ShapeError("mul_broadcast_channels: map " + ms.str() + " incompatible with " + xs.str());
  }
  const std::size_t plane = xs.plane();
  Tensor out(xs);
  for (std::size_t n = 0; n < xs.n; ++n) {
    const double* mp = m.value().plane(n, 0);
    for (std::size_t c = 0; c < xs.c; ++c) {
      const double* src = x.value().plane(n, c);
      double* dst = out.plane(n, c);
      for (std::size_t k = 0; k < plane; ++k) dst[k] = src[k] * mp[k];
    }
  }
  return make_node(std::move(out), {x, m}, [x, m, xs, plane](Node& self) {
    for (std::size_t n = 0; n < xs.n; ++n) {
      const double* mp = m.value().plane(n, 0);
      for (std::size_t c = 0; c < xs.c; ++c) {
        const double* g = self.grad.plane(n, c);
        if (x.requires_grad()) {
          double* d = x.node()->grad_buffer().plane(n, c);
          for (std::size_t k = 0; k < plane; ++k) d[k] += g[k] * mp[k];
        }
        if (m.requires_grad()) {
          double* d = m.node()->grad_buffer().plane(n, 0);
          const double* src = x.value().plane(n, c);
          for (std::size_t k = 0; k < plane; ++k) d[k] += g[k] * src[k];
        }
      }
    }
  });
}

Var sum_all(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return make_node(Tensor(Shape{1, 1, 1, 1}, s), {x}, [x](Node& self) {
    Tensor& g = x.node()->grad_buffer();
    const double gv = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gv;
  });
}

Var mean_all(const Var& x) {
  if (x.value().size() == 0) throw ShapeError("mean_all: empty tensor");
  return scale(sum_all(x), 1.0 / static_cast<double>(x.value().size()));
}

Var stop_gradient(const Var& x) { return Var::constant(x.value()); }

Var elementwise(const Var& x, const Var& y, Elementwise kind) {
  return kind == Elementwise::add ? add(x, y) : mul(x, y);
}

Var activation(const Var& x, Activation kind) { return kind == Activation::relu ? relu(x) : sigmoid(x); }

}  // namespace dsnet
