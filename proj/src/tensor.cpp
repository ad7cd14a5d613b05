#include "dsnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace dsnet {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(values.begin(), values.end()) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

Tensor Tensor::item(std::size_t n) const {
  if (n >= shape_.n) throw ShapeError("batch index " + std::to_string(n) + " out of range for " + shape_.str());
  Shape s{1, shape_.c, shape_.h, shape_.w};
  const auto stride = s.numel();
  std::vector<double> v(data_.begin() + static_cast<std::ptrdiff_t>(n * stride),
                        data_.begin() + static_cast<std::ptrdiff_t>((n + 1) * stride));
  return Tensor(s, std::move(v));
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool bit_identical(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) return false;
  return a.size() == 0 || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack_batch: no items");
  const Shape first = items.front().shape();
  Shape out{0, first.c, first.h, first.w};
  for (const auto& t : items) {
    const Shape& s = t.shape();
    if (s.c != first.c || s.h != first.h || s.w != first.w) {
      throw ShapeError("stack_batch: item shape " + s.str() + " differs from " + first.str());
    }
    out.n += s.n;
  }
  Tensor result(out);
  double* dst = result.data();
  for (const auto& t : items) {
    std::copy(t.data(), t.data() + t.size(), dst);
    dst += t.size();
  }
  return result;
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return;
  const char* dim = a.n != b.n ? "batch" : a.c != b.c ? "channels" : a.h != b.h ? "height" : "width";
  throw ShapeError(std::string(op) + ": " + dim + " mismatch between " + a.str() + " and " + b.str());
}

}  // namespace dsnet
