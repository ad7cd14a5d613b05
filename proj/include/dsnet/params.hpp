#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dsnet/ops.hpp"

namespace dsnet {

/// Ordered collection of named trainable tensors.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Registers a parameter; throws if the name is taken.
  Var add(const std::string& name, Tensor init);

  /// Uniform He-style fan-in initialization for the weight, zero bias. The
  /// draw is seeded by (store seed, name), so identical names get identical
  /// values regardless of what else the store contains.
  ConvParams conv(const std::string& name, int in_channels, int out_channels, int kernel_size, int padding,
                  int dilation = 1, int stride = 1);

  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  struct Entry {
    std::string name;
    Var var;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t count() const;  // total scalar parameters

  void zero_grad();

 private:
  std::uint64_t seed_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace dsnet
