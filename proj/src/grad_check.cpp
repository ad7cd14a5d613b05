#include "dsnet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dsnet {
namespace {

double scalar_of(const Var& v) {
  if (!v.defined() || v.value().size() != 1) {
    throw ShapeError("grad_check: closure must return a scalar, got " +
                     (v.defined() ? v.shape().str() : std::string("<undefined>")));
  }
  return v.value()[0];
}

}  // namespace

double grad_check_leaves(const std::function<Var()>& f, std::span<const Var> leaves, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw std::invalid_argument("grad_check: eps must lie in (0, 1e-2]");
  for (const auto& leaf : leaves) {
    if (!leaf.requires_grad()) throw std::invalid_argument("grad_check: leaf does not require grad");
    const_cast<Var&>(leaf).zero_grad();
  }
  const Var root = f();
  scalar_of(root);
  backward(root);

  std::vector<Tensor> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves) analytic.push_back(leaf.grad());

  double worst = 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    Var leaf = leaves[l];
    Tensor& value = leaf.mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + eps;
      const double plus = scalar_of(f());
      value[i] = saved - eps;
      const double minus = scalar_of(f());
      value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[l][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

double grad_check(const ScalarClosure& f, const std::vector<Tensor>& inputs, double eps) {
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(Var::leaf(t, true));
  return grad_check_leaves([&] { return f(leaves); }, leaves, eps);
}

}  // namespace dsnet
