#include "coactseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace coact {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void detail::Node::accumulate(const Array& g) {
  if (grad.size() == 0)
    grad = g;
  else
    grad += g;
}

namespace {

void check_shape(const Shape& shape) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  const auto n = static_cast<Eigen::Index>(coact::numel(shape));
  return from(std::move(shape), Array::Constant(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, Array values, bool requires_grad) {
  check_shape(shape);
  if (coact::numel(shape) != static_cast<std::size_t>(values.size()))
    throw ShapeError("shape " + to_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, Array::Constant(1, value), requires_grad);
}

Array& Tensor::mutable_values() {
  if (!node_->is_leaf()) throw std::logic_error("mutable_values() on a non-leaf tensor");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + to_string(shape()));
  return node_->value[0];
}

void Tensor::set_requires_grad(bool on) {
  if (!node_->is_leaf()) throw std::logic_error("requires_grad can only be set on leaves");
  node_->requires_grad = on;
}

Array Tensor::grad() const {
  if (node_->grad.size() == 0) return Array::Zero(node_->value.size());
  return node_->grad;
}

Tensor Tensor::detach() const { return from(shape(), values(), false); }

detail::Node& node_of(const Tensor& t) { return *t.node_; }

Tensor make_result(Shape shape, Array value, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& t : inputs) node->parents.push_back(t.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tape Tape::record(const Tensor& root) {
  Tape tape;
  std::unordered_set<const detail::Node*> seen;
  // Iterative post-order DFS: a node is emitted after all of its parents.
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node_.get(), 0);
  seen.insert(root.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      tape.order_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

bool Tape::contains(const Tensor& t) const {
  return std::find(order_.begin(), order_.end(), t.node_.get()) != order_.end();
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  if (!loss.requires_grad()) return;
  const Tape tape = Tape::record(loss);
  node_of(loss).accumulate(Array::Ones(1));
  const auto& order = tape.order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->is_leaf() || node->grad.size() == 0) continue;
    node->backward(*node);
    node->grad.resize(0);
  }
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

bool is_single(const Tensor& t) { return t.numel() == 1; }

// Result shape for a binary op; identical shapes or one single-element side.
Shape binary_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_single(b)) return a.shape();
  if (is_single(a)) return b.shape();
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                   to_string(b.shape()));
}

// Reduces a full-size gradient to the shape of the operand it belongs to.
Array fit_grad(const Array& g, const detail::Node& operand) {
  if (operand.value.size() == g.size()) return g;
  return Array::Constant(1, g.sum());
}

// Broadcasts a single-element operand to n values for the forward pass.
Array expand(const Array& v, Eigen::Index n) {
  return v.size() == n ? v : Array::Constant(n, v[0]);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Shape shape = binary_shape(a, b, "add");
  const auto n = static_cast<Eigen::Index>(numel(shape));
  Array v = expand(a.values(), n) + expand(b.values(), n);
  return make_result(std::move(shape), std::move(v), {a, b}, [](detail::Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->accumulate(fit_grad(self.grad, *p));
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Shape shape = binary_shape(a, b, "sub");
  const auto n = static_cast<Eigen::Index>(numel(shape));
  Array v = expand(a.values(), n) - expand(b.values(), n);
  return make_result(std::move(shape), std::move(v), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(fit_grad(self.grad, pa));
    if (pb.requires_grad) pb.accumulate(fit_grad(-self.grad, pb));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Shape shape = binary_shape(a, b, "mul");
  const auto n = static_cast<Eigen::Index>(numel(shape));
  Array v = expand(a.values(), n) * expand(b.values(), n);
  return make_result(std::move(shape), std::move(v), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto n = self.grad.size();
    if (pa.requires_grad) pa.accumulate(fit_grad(self.grad * expand(pb.value, n), pa));
    if (pb.requires_grad) pb.accumulate(fit_grad(self.grad * expand(pa.value, n), pb));
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  Shape shape = binary_shape(a, b, "div");
  const auto n = static_cast<Eigen::Index>(numel(shape));
  Array v = expand(a.values(), n) / expand(b.values(), n);
  return make_result(std::move(shape), std::move(v), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto n = self.grad.size();
    const Array bv = expand(pb.value, n);
    if (pa.requires_grad) pa.accumulate(fit_grad(self.grad / bv, pa));
    if (pb.requires_grad) pb.accumulate(fit_grad(-self.grad * self.value / bv, pb));
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_result(a.shape(), a.values() * s, {a}, [s](detail::Node& self) {
    self.parents[0]->accumulate(self.grad * s);
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  return make_result(a.shape(), a.values() + s, {a}, [](detail::Node& self) {
    self.parents[0]->accumulate(self.grad);
  });
}

Tensor square(const Tensor& a) {
  return make_result(a.shape(), a.values().square(), {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    p.accumulate(2.0 * self.grad * p.value);
  });
}

Tensor sigmoid(const Tensor& a) {
  Array v = 1.0 / (1.0 + (-a.values()).exp());
  return make_result(a.shape(), std::move(v), {a}, [](detail::Node& self) {
    self.parents[0]->accumulate(self.grad * self.value * (1.0 - self.value));
  });
}

Tensor abs(const Tensor& a) {
  return make_result(a.shape(), a.values().abs(), {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    p.accumulate(self.grad * p.value.sign());
  });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  const std::size_t channels = slope.numel();
  std::size_t inner = x.numel();
  std::size_t outer = 1;
  if (channels != 1) {
    if (x.rank() < 2 || x.dim(1) != channels)
      throw ShapeError("prelu: slope of " + std::to_string(channels) +
                       " channels does not match input " + to_string(x.shape()));
    outer = x.dim(0);
    inner = x.numel() / (outer * channels);
  }
  Array v(x.values().size());
  const Array& xv = x.values();
  const Array& sv = slope.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t c = 0; c < channels; ++c) {
      const auto off = static_cast<Eigen::Index>((o * channels + c) * inner);
      const auto n = static_cast<Eigen::Index>(inner);
      const double s = sv[static_cast<Eigen::Index>(c)];
      v.segment(off, n) = (xv.segment(off, n) > 0.0).select(xv.segment(off, n), s * xv.segment(off, n));
    }
  return make_result(x.shape(), std::move(v), {x, slope},
                     [outer, channels, inner](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& ps = *self.parents[1];
    const auto n = static_cast<Eigen::Index>(inner);
    Array gx;
    Array gs;
    if (px.requires_grad) gx.resize(px.value.size());
    if (ps.requires_grad) gs = Array::Zero(static_cast<Eigen::Index>(channels));
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t c = 0; c < channels; ++c) {
        const auto off = static_cast<Eigen::Index>((o * channels + c) * inner);
        const auto xs = px.value.segment(off, n);
        const auto gs_out = self.grad.segment(off, n);
        const auto ci = static_cast<Eigen::Index>(c);
        if (px.requires_grad)
          gx.segment(off, n) = (xs > 0.0).select(gs_out, ps.value[ci] * gs_out);
        if (ps.requires_grad) gs[ci] += ((xs > 0.0).select(0.0, xs) * gs_out).sum();
      }
    if (px.requires_grad) px.accumulate(gx);
    if (ps.requires_grad) ps.accumulate(gs);
  });
}

Tensor sum(const Tensor& a) {
  return make_result({}, Array::Constant(1, a.values().sum()), {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    p.accumulate(Array::Constant(p.value.size(), self.grad[0]));
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  return make_result({}, Array::Constant(1, a.values().sum() / n), {a}, [n](detail::Node& self) {
    auto& p = *self.parents[0];
    p.accumulate(Array::Constant(p.value.size(), self.grad[0] / n));
  });
}

// ---------------------------------------------------------------------------
// Structural ops. Each views a row-major tensor as [outer, axis, inner].

namespace {

struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape));
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

}  // namespace

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Shape shape = parts[0].shape();
  if (axis >= shape.size()) throw ShapeError("concat: axis out of range for " + to_string(shape));
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size()) throw ShapeError("concat: rank mismatch");
    s[axis] = shape[axis];
    if (s != shape)
      throw ShapeError("concat: " + to_string(p.shape()) + " incompatible with " +
                       to_string(parts[0].shape()) + " along axis " + std::to_string(axis));
    total += p.dim(axis);
  }
  shape[axis] = total;
  const AxisView out = axis_view(shape, axis);
  std::vector<std::size_t> extents;
  Array v(static_cast<Eigen::Index>(numel(shape)));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t block = p.dim(axis) * out.inner;
    extents.push_back(p.dim(axis));
    for (std::size_t o = 0; o < out.outer; ++o)
      v.segment(static_cast<Eigen::Index>(o * out.extent * out.inner + offset * out.inner),
                static_cast<Eigen::Index>(block)) =
          p.values().segment(static_cast<Eigen::Index>(o * block), static_cast<Eigen::Index>(block));
    offset += p.dim(axis);
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(std::move(shape), std::move(v), std::move(inputs),
                     [out, extents](detail::Node& self) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = *self.parents[i];
      const std::size_t block = extents[i] * out.inner;
      if (p.requires_grad) {
        Array g(p.value.size());
        for (std::size_t o = 0; o < out.outer; ++o)
          g.segment(static_cast<Eigen::Index>(o * block), static_cast<Eigen::Index>(block)) =
              self.grad.segment(static_cast<Eigen::Index>(o * out.extent * out.inner + offset * out.inner),
                                static_cast<Eigen::Index>(block));
        p.accumulate(g);
      }
      offset += extents[i];
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisView in = axis_view(a.shape(), axis);
  if (begin >= end || end > in.extent)
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for axis " + std::to_string(axis) + " of " + to_string(a.shape()));
  Shape shape = a.shape();
  shape[axis] = end - begin;
  const std::size_t block = (end - begin) * in.inner;
  Array v(static_cast<Eigen::Index>(in.outer * block));
  for (std::size_t o = 0; o < in.outer; ++o)
    v.segment(static_cast<Eigen::Index>(o * block), static_cast<Eigen::Index>(block)) =
        a.values().segment(static_cast<Eigen::Index>((o * in.extent + begin) * in.inner),
                           static_cast<Eigen::Index>(block));
  return make_result(std::move(shape), std::move(v), {a}, [in, begin, block](detail::Node& self) {
    auto& p = *self.parents[0];
    Array g = Array::Zero(p.value.size());
    for (std::size_t o = 0; o < in.outer; ++o)
      g.segment(static_cast<Eigen::Index>((o * in.extent + begin) * in.inner),
                static_cast<Eigen::Index>(block)) =
          self.grad.segment(static_cast<Eigen::Index>(o * block), static_cast<Eigen::Index>(block));
    p.accumulate(g);
  });
}

namespace {

// Calls fn(src_flat, dst_flat) for every element of `src` placed at offset
// `before` inside a tensor of shape `dst`.
template <class Fn>
void for_each_embedded(const Shape& src, const Shape& dst, const std::vector<std::size_t>& before, Fn&& fn) {
  const std::size_t rank = src.size();
  const std::size_t total = numel(src);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t d = 0;
    for (std::size_t ax = 0; ax < rank; ++ax) d = d * dst[ax] + idx[ax] + before[ax];
    fn(flat, d);
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++idx[ax] < src[ax]) break;
      idx[ax] = 0;
    }
  }
}

}  // namespace

Tensor pad(const Tensor& a, const std::vector<std::size_t>& before,
           const std::vector<std::size_t>& after, double value) {
  if (before.size() != a.rank() || after.size() != a.rank())
    throw ShapeError("pad: expected " + std::to_string(a.rank()) + " per-axis amounts");
  Shape shape = a.shape();
  for (std::size_t i = 0; i < shape.size(); ++i) shape[i] += before[i] + after[i];
  Array v = Array::Constant(static_cast<Eigen::Index>(numel(shape)), value);
  const Array& src = a.values();
  for_each_embedded(a.shape(), shape, before, [&](std::size_t s, std::size_t d) {
    v[static_cast<Eigen::Index>(d)] = src[static_cast<Eigen::Index>(s)];
  });
  Shape src_shape = a.shape();
  return make_result(shape, std::move(v), {a}, [src_shape, shape, before](detail::Node& self) {
    auto& p = *self.parents[0];
    Array g(p.value.size());
    for_each_embedded(src_shape, shape, before, [&](std::size_t s, std::size_t d) {
      g[static_cast<Eigen::Index>(s)] = self.grad[static_cast<Eigen::Index>(d)];
    });
    p.accumulate(g);
  });
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs,
                           const GradCheckOptions& opts) {
  for (auto& t : inputs) {
    if (!t.is_leaf() || !t.requires_grad())
      throw std::invalid_argument("grad_check inputs must be leaves that require grad");
    t.zero_grad();
  }
  backward(f());
  std::vector<Array> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) analytic.push_back(t.grad());

  GradCheckResult result;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Array& values = inputs[ti].mutable_values();
    const std::size_t n = static_cast<std::size_t>(values.size());
    const std::size_t probes =
        opts.max_coords_per_tensor == 0 ? n : std::min(n, opts.max_coords_per_tensor);
    for (std::size_t k = 0; k < probes; ++k) {
      const std::size_t i = probes <= 1 ? 0 : k * (n - 1) / (probes - 1);
      const auto ii = static_cast<Eigen::Index>(i);
      const double saved = values[ii];
      values[ii] = saved + opts.eps;
      const double plus = f().item();
      values[ii] = saved - opts.eps;
      const double minus = f().item();
      values[ii] = saved;
      const double numeric = (plus - minus) / (2.0 * opts.eps);
      const double a = analytic[ti][ii];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++result.coords_checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_tensor = ti;
        result.worst_index = i;
      }
    }
  }
  for (auto& t : inputs) t.zero_grad();
  return result;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor probe = Tensor::from(x.shape(), x.values(), true);
  Tensor inputs[] = {probe};
  return grad_check([&] { return f(probe); }, inputs, {eps, 0}).max_rel_error;
}

}  // namespace coact
