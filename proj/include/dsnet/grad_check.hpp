#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dsnet/autograd.hpp"

namespace dsnet {

/// Builds a scalar from the given input leaves.
using ScalarClosure = std::function<Var(std::span<const Var>)>;

/// Compares reverse-mode gradients of `f` against central differences at
/// every input coordinate and returns
///   max |analytic - numeric| / max(1, |analytic|).
/// `eps` must lie in (0, 1e-2]; a non-scalar closure result is an error.
double grad_check(const ScalarClosure& f, const std::vector<Tensor>& inputs, double eps);

/// Same check over leaves the closure already captures (e.g. module
/// parameters). Leaf values are perturbed in place and restored.
double grad_check_leaves(const std::function<Var()>& f, std::span<const Var> leaves, double eps);

}  // namespace dsnet
