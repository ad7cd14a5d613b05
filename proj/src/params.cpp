#include "dsnet/params.hpp"

#include <cmath>
#include <stdexcept>

#include "dsnet/rng.hpp"

namespace dsnet {

Var ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Var v = Var::leaf(std::move(init), true);
  index_[name] = entries_.size();
  entries_.push_back({name, v});
  return v;
}

ConvParams ParamStore::conv(const std::string& name, int in_channels, int out_channels, int kernel_size,
                            int padding, int dilation, int stride) {
  ConvParams p;
  p.kernel_size = kernel_size;
  p.padding = padding;
  p.dilation = dilation;
  p.stride = stride;
  p.in_channels = in_channels;
  p.out_channels = out_channels;

  const Shape ws{static_cast<std::size_t>(out_channels), static_cast<std::size_t>(in_channels),
                 static_cast<std::size_t>(kernel_size), static_cast<std::size_t>(kernel_size)};
  Tensor w(ws);
  Rng rng(derive_seed(seed_, fnv1a(name)));
  const double bound = std::sqrt(6.0 / static_cast<double>(in_channels * kernel_size * kernel_size));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);

  p.weight = add(name + ".weight", std::move(w));
  p.bias = add(name + ".bias", Tensor(Shape{static_cast<std::size_t>(out_channels), 1, 1, 1}));
  p.validate();
  return p;
}

const Var& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return entries_[it->second].var;
}

std::size_t ParamStore::count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += e.var.value().size();
  return total;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

}  // namespace dsnet
