#pragma once

// Dense row-major tensors of doubles with define-by-run reverse-mode
// differentiation. Every op on a tensor that requires a gradient records its
// inputs and a backward rule; backward() orders the recorded graph into a
// tape and replays it in reverse.

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace coact {

using Shape = std::vector<std::size_t>;
using Array = Eigen::ArrayXd;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  Array value;
  Array grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  void accumulate(const Array& g);
};

}  // namespace detail

/// Handle to a tensor node. Copies share the node (and therefore the
/// gradient); use clone() or detach() for an independent value.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, Array values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return static_cast<std::size_t>(node_->value.size()); }

  const Array& values() const { return node_->value; }
  /// Mutable access for optimizers and initializers. Only valid on leaves.
  Array& mutable_values();
  double item() const;
  double operator[](std::size_t i) const { return node_->value[static_cast<Eigen::Index>(i)]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return node_->grad.size() > 0; }
  /// Gradient after backward(); zeros if no gradient has reached this tensor.
  Array grad() const;
  void zero_grad() { node_->grad.resize(0); }

  bool is_leaf() const { return node_->is_leaf(); }
  Tensor detach() const;
  Tensor clone() const { return detach(); }
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend class Tape;
  friend Tensor make_result(Shape shape, Array value, std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward);
  friend detail::Node& node_of(const Tensor& t);
};

/// Builds an op output. `backward` is only kept (and inputs only referenced)
/// when at least one input requires a gradient.
Tensor make_result(Shape shape, Array value, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward);
detail::Node& node_of(const Tensor& t);

/// Topologically ordered record of the graph that produced a tensor.
class Tape {
 public:
  static Tape record(const Tensor& root);
  std::size_t size() const { return order_.size(); }
  /// Inputs precede outputs; the root is last.
  const std::vector<detail::Node*>& order() const { return order_; }
  bool contains(const Tensor& t) const;

 private:
  std::vector<detail::Node*> order_;
};

/// Reverse-mode pass from a scalar loss. Leaf gradients accumulate across
/// calls until zero_grad().
void backward(const Tensor& loss);

// Elementwise ops. Binary ops take identical shapes or a single-element side.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor abs(const Tensor& a);
/// PReLU with one slope or one slope per channel (axis 1).
Tensor prelu(const Tensor& x, const Tensor& slope);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
inline Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
/// Constant padding; `before`/`after` give the amount per axis.
Tensor pad(const Tensor& a, const std::vector<std::size_t>& before,
           const std::vector<std::size_t>& after, double value = 0.0);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }

struct GradCheckOptions {
  double eps = 1e-4;
  /// Coordinates probed per tensor; 0 probes all of them. When limited, the
  /// probed coordinates are an evenly strided subset that always includes the
  /// first and last element.
  std::size_t max_coords_per_tensor = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
};

/// Compares backward() gradients of a scalar function against central
/// differences. Error per coordinate is |a - n| / max(1, |a|, |n|).
GradCheckResult grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs,
                           const GradCheckOptions& opts = {});
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps);

}  // namespace coact
