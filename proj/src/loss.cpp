#include "dsnet/loss.hpp"

#include <cmath>
#include <stdexcept>

#include "dsnet/ops.hpp"

namespace dsnet {

namespace {

void require_binary(const Tensor& y) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      throw std::invalid_argument("bce: ground truth must be binary, found " + std::to_string(y[i]) + " at index " +
                                  std::to_string(i));
    }
  }
}

double clamp_prob(double s) { return std::min(std::max(s, kBceClamp), 1.0 - kBceClamp); }

}  // namespace

double bce(const Tensor& s, const Tensor& y) {
  require_same_shape(s.shape(), y.shape(), "bce");
  require_binary(y);
  if (s.empty()) throw ShapeError("bce: empty map");
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double p = clamp_prob(s[i]);
    acc += y[i] == 1.0 ? std::log(p) : std::log(1.0 - p);
  }
  return -acc / static_cast<double>(s.size());
}

Var bce(const Var& s, const Tensor& y) {
  Tensor out(Shape{1, 1, 1, 1}, bce(s.value(), y));
  return make_node(std::move(out), {s}, [s, y](Node& self) {
    Tensor& g = s.node()->grad_buffer();
    const double scale = -self.grad[0] / static_cast<double>(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = s.value()[i];
      if (v < kBceClamp || v > 1.0 - kBceClamp) continue;
      g[i] += scale * (y[i] == 1.0 ? 1.0 / v : -1.0 / (1.0 - v));
    }
  });
}

LossReport LossGraph::report() const {
  auto val = [](const Var& v) { return v.defined() ? v.value()[0] : 0.0; };
  return {val(l_s), val(l_t), val(l_c), val(l_f), val(total)};
}

LossGraph total_loss(const Var& s_s, const Var& s_t, const Var& s_c, const Var& s_f, const Tensor& y,
                     Supervision mode) {
  if (!s_f.defined()) throw std::invalid_argument("total_loss: final map is required");
  LossGraph g;
  const bool multi = mode == Supervision::multiple;
  auto term = [&](const Var& s) -> Var {
    if (!s.defined()) return {};
    return multi ? bce(s, y) : bce(stop_gradient(s), y);
  };
  g.l_s = term(s_s);
  g.l_t = term(s_t);
  g.l_c = term(s_c);
  g.l_f = bce(s_f, y);
  if (!multi) {
    g.total = g.l_f;
    return g;
  }
  g.total = g.l_s;
  for (const Var* v : {&g.l_t, &g.l_c, &g.l_f}) {
    if (!v->defined()) continue;
    g.total = g.total.defined() ? add(g.total, *v) : *v;
  }
  return g;
}

LossReport total_loss(const Tensor& s_s, const Tensor& s_t, const Tensor& s_c, const Tensor& s_f, const Tensor& y,
                      Supervision mode) {
  LossReport r;
  if (!s_s.empty()) r.l_s = bce(s_s, y);
  if (!s_t.empty()) r.l_t = bce(s_t, y);
  if (!s_c.empty()) r.l_c = bce(s_c, y);
  r.l_f = bce(s_f, y);
  r.total = mode == Supervision::multiple ? ((r.l_s + r.l_t) + r.l_c) + r.l_f : r.l_f;
  return r;
}

}  // namespace dsnet
