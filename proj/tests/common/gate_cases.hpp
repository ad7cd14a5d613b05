#pragma once

// Properties of the pairwise softmax and the hard gate, checked over random
// draws. Each function returns the number of violations.

#include <bit>
#include <cmath>
#include <cstdint>

#include "dsnet/caa.hpp"
#include "dsnet/rng.hpp"

namespace gatecases {

using namespace dsnet;

inline constexpr int kTriples = 10000;

inline bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

/// Raw weight draw: mostly moderate, sometimes extreme.
inline double draw_weight(Rng& rng) {
  switch (rng.integer(0, 9)) {
    case 0:
      return rng.uniform(-800.0, 800.0);
    case 1:
      return rng.uniform(-1e-9, 1e-9);
    default:
      return rng.uniform(-8.0, 8.0);
  }
}

/// |v_s + v_t - 1| > 1e-12, or a component outside [0, 1].
inline int sum_to_one_violations(std::uint64_t seed) {
  Rng rng(seed);
  int bad = 0;
  for (int i = 0; i < kTriples; ++i) {
    const GatePair v = cross_normalize(draw_weight(rng), draw_weight(rng));
    if (std::fabs(v.spatial + v.temporal - 1.0) > 1e-12) ++bad;
    if (v.spatial < 0.0 || v.spatial > 1.0 || v.temporal < 0.0 || v.temporal > 1.0) ++bad;
  }
  return bad;
}

/// Shifting both weights by the same constant leaves the output bits
/// unchanged. Operands are multiples of 2^-10 within +-2^20, so every shift
/// is exact in double precision.
inline int shift_invariance_violations(std::uint64_t seed) {
  Rng rng(seed);
  int bad = 0;
  for (int i = 0; i < kTriples; ++i) {
    const double ws = static_cast<double>(rng.integer(-8192, 8192)) / 1024.0;
    const double wt = static_cast<double>(rng.integer(-8192, 8192)) / 1024.0;
    const double c = static_cast<double>(rng.integer(-1 << 20, 1 << 20)) / 1024.0;
    const GatePair a = cross_normalize(ws, wt);
    const GatePair b = cross_normalize(ws + c, wt + c);
    if (!same_bits(a.spatial, b.spatial) || !same_bits(a.temporal, b.temporal)) ++bad;
  }
  return bad;
}

/// One side is zeroed iff |v_t - v_s| > tau; otherwise u equals v bit for
/// bit. The kept side always keeps its exact value. The graph op is held to
/// the same rule.
inline int gate_iff_violations(std::uint64_t seed) {
  Rng rng(seed);
  int bad = 0;
  for (int i = 0; i < kTriples; ++i) {
    const double ws = draw_weight(rng);
    const double wt = draw_weight(rng);
    const double tau = rng.integer(0, 19) == 0 ? static_cast<double>(rng.integer(0, 1)) : rng.uniform();
    const GatePair v = cross_normalize(ws, wt);
    const GatePair u = cross_threshold(v, tau);
    const double gap = v.temporal - v.spatial;
    const bool fires = std::fabs(gap) > tau;
    const int zeros = (u.spatial == 0.0 && v.spatial != 0.0) + (u.temporal == 0.0 && v.temporal != 0.0);
    if (fires) {
      const bool weaker_zeroed = gap > 0 ? (u.spatial == 0.0 && same_bits(u.temporal, v.temporal))
                                         : (u.temporal == 0.0 && same_bits(u.spatial, v.spatial));
      if (!weaker_zeroed || zeros > 1) ++bad;
    } else if (!same_bits(u.spatial, v.spatial) || !same_bits(u.temporal, v.temporal)) {
      ++bad;
    }
    Tensor pair(Shape{1, 2, 1, 1});
    pair[0] = v.spatial;
    pair[1] = v.temporal;
    const Tensor g = cross_threshold(Var::constant(pair), tau).value();
    if (!same_bits(g[0], u.spatial) || !same_bits(g[1], u.temporal)) ++bad;
  }
  return bad;
}

}  // namespace gatecases
