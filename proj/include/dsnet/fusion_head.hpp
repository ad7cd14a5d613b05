#pragma once

#include "dsnet/caa.hpp"
#include "dsnet/dwg.hpp"

namespace dsnet {

/// Per-branch reliability derived from the normalized gate vectors.
struct BranchReliability {
  double eps_s = 0.5;
  double eps_t = 0.5;
};

/// eps_s = sum(v_s) / (sum(v_s) + sum(v_t)), likewise eps_t.
BranchReliability branch_reliability(const WeightVector& v_s, const WeightVector& v_t);
/// Graph form over an (N, 2, L, 1) pair tensor; returns (N, 2, 1, 1) with
/// channel 0 = eps_s, channel 1 = eps_t.
Var branch_reliability(const Var& pair);

/// S_c = eps_s * S_s + eps_t * S_t.
Tensor fuse_coarse_maps(const Tensor& s_s, const Tensor& s_t, const BranchReliability& r);
/// `eps` is the (N, 2, 1, 1) output of branch_reliability.
Var fuse_coarse_maps(const Var& s_s, const Var& s_t, const Var& eps);
/// Plain addition clamped to [0, 1].
Var fuse_coarse_maps_sum(const Var& s_s, const Var& s_t);

/// F_att = F * S_c + F, with S_c resized to F's resolution and broadcast
/// across channels.
Tensor apply_spatial_attention(const Tensor& f, const Tensor& s_c);
Var apply_spatial_attention(const Var& f, const Var& s_c);

}  // namespace dsnet
