#include "dsnet/fusion_head.hpp"

#include <string>

namespace dsnet {

BranchReliability branch_reliability(const WeightVector& v_s, const WeightVector& v_t) {
  const double a = v_s.sum();
  const double b = v_t.sum();
  const double total = a + b;
  if (!(total > 0.0)) throw NumericError("branch_reliability: weight sums must be positive");
  return {a / total, b / total};
}

Var branch_reliability(const Var& pair) {
  const Shape s = pair.shape();
  if (s.c != 2 || s.w != 1) throw ShapeError("branch_reliability: expected (N, 2, L, 1), got " + s.str());
  Tensor out(Shape{s.n, 2, 1, 1});
  std::vector<double> sums(2 * s.n);
  for (std::size_t n = 0; n < s.n; ++n) {
    double a = 0.0;
    double b = 0.0;
    for (std::size_t i = 0; i < s.h; ++i) {
      a += pair.value().at(n, 0, i, 0);
      b += pair.value().at(n, 1, i, 0);
    }
    const double total = a + b;
    if (!(total > 0.0)) throw NumericError("branch_reliability: weight sums must be positive");
    out.at(n, 0, 0, 0) = a / total;
    out.at(n, 1, 0, 0) = b / total;
    sums[2 * n] = a;
    sums[2 * n + 1] = b;
  }
  return make_node(std::move(out), {pair}, [pair, s, sums](Node& self) {
    Tensor& g = pair.node()->grad_buffer();
    for (std::size_t n = 0; n < s.n; ++n) {
      const double a = sums[2 * n];
      const double b = sums[2 * n + 1];
      const double t2 = (a + b) * (a + b);
      const double ga = self.grad.at(n, 0, 0, 0);
      const double gb = self.grad.at(n, 1, 0, 0);
      // d(a/t)/da = b/t^2, d(a/t)/db = -a/t^2; symmetric for b/t.
      const double da = (ga * b - gb * b) / t2;
      const double db = (gb * a - ga * a) / t2;
      for (std::size_t i = 0; i < s.h; ++i) {
        g.at(n, 0, i, 0) += da;
        g.at(n, 1, i, 0) += db;
      }
    }
  });
}

Tensor fuse_coarse_maps(const Tensor& s_s, const Tensor& s_t, const BranchReliability& r) {
  require_same_shape(s_s.shape(), s_t.shape(), "fuse_coarse_maps");
  Tensor out(s_s.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = r.eps_s * s_s[i] + r.eps_t * s_t[i];
  return out;
}

Var fuse_coarse_maps(const Var& s_s, const Var& s_t, const Var& eps) {
  require_same_shape(s_s.shape(), s_t.shape(), "fuse_coarse_maps");
  if (eps.shape() != Shape{s_s.shape().n, 2, 1, 1}) {
    throw ShapeError("fuse_coarse_maps: reliability must be (N, 2, 1, 1), got " + eps.shape().str());
  }
  return add(scale_by_sample(s_s, slice_channels(eps, 0, 1)), scale_by_sample(s_t, slice_channels(eps, 1, 1)));
}

Var fuse_coarse_maps_sum(const Var& s_s, const Var& s_t) { return clamp01(add(s_s, s_t)); }

Tensor apply_spatial_attention(const Tensor& f, const Tensor& s_c) {
  return apply_spatial_attention(Var::constant(f), Var::constant(s_c)).value();
}

Var apply_spatial_attention(const Var& f, const Var& s_c) {
  const Shape fs = f.shape();
  const Shape ms = s_c.shape();
  if (ms.c != 1 || ms.n != fs.n) {
    throw ShapeError("apply_spatial_attention: map must be (N, 1, H, W) with N = " + std::to_string(fs.n) + ", got " +
                     ms.str());
  }
  const Var m = resize_bilinear(s_c, fs.h, fs.w);
  return add(mul_broadcast_channels(f, m), f);
}

}  // namespace dsnet
