#pragma once

#include "dsnet/autograd.hpp"

namespace dsnet {

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy over every element; S is clamped to
/// [1e-7, 1 - 1e-7] first. Throws std::invalid_argument if Y is not binary.
double bce(const Tensor& s, const Tensor& y);
/// Graph form. Gradient is zero where the clamp is active.
Var bce(const Var& s, const Tensor& y);

struct LossReport {
  double l_s = 0.0;
  double l_t = 0.0;
  double l_c = 0.0;
  double l_f = 0.0;
  double total = 0.0;
};

enum class Supervision { multiple, single };

/// Loss terms as graph nodes. Absent maps leave their term undefined and
/// report 0.
struct LossGraph {
  Var l_s, l_t, l_c, l_f;
  Var total;

  LossReport report() const;
};

/// Multiple supervision: total = l_s + l_t + l_c + l_f over the maps that
/// exist. Single supervision: total = l_f; the auxiliary terms are still
/// evaluated for logging but carry no gradient into the total.
LossGraph total_loss(const Var& s_s, const Var& s_t, const Var& s_c, const Var& s_f, const Tensor& y,
                     Supervision mode);

/// Value-only form; an empty tensor marks an absent map.
LossReport total_loss(const Tensor& s_s, const Tensor& s_t, const Tensor& s_c, const Tensor& s_f, const Tensor& y,
                      Supervision mode);

}  // namespace dsnet
