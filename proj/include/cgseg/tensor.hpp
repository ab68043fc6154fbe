#pragma once

// Dense NCHW tensors with a tape-free reverse-mode autodiff graph.
//
// A Tensor is a shared handle onto a node that owns its values, its gradient
// buffer and (for op results) the rule that pushes the gradient back to its
// operands. Copies of a handle alias the same storage; use clone() for a deep
// copy and detach() to cut a value out of the graph.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace cgseg {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool previous_;
};

template <class T>
class Tensor {
public:
  using value_type = T;
  using node_type = detail::Node<T>;

  Tensor() : Tensor(Shape{}, T{0}) {}

  explicit Tensor(Shape shape, T fill = T{0}, bool requires_grad = false)
      : node_(std::make_shared<node_type>()) {
    for (auto d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
    }
    const auto n = shape_size(shape);
    node_->shape = std::move(shape);
    node_->value.assign(n, fill);
    node_->grad.assign(n, T{0});
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<node_type>()) {
    if (shape_size(shape) != values.size()) {
      throw ShapeError("shape " + to_string(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->grad.assign(values.size(), T{0});
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor(Shape{1}, v, requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }

  T& operator[](std::size_t i) { return node_->value[i]; }
  const T& operator[](std::size_t i) const { return node_->value[i]; }

  T item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const { return !node_->backward; }
  bool consumed() const { return node_->consumed; }

  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T{0}); }

  /// Deep copy of values; the copy is a fresh leaf.
  Tensor clone() const {
    Tensor out(shape(), node_->value, node_->requires_grad && is_leaf());
    return out;
  }

  /// Same values, no graph, no gradient.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<node_type>& node() const { return node_; }

private:
  std::shared_ptr<node_type> node_;
};

namespace detail {

template <class T>
bool tracks(const Tensor<T>& t) {
  return t.requires_grad();
}

/// Builds an op result; records the backward rule only if some operand
/// participates in differentiation and grad mode is on.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::vector<Tensor<T>> operands,
                      std::function<void(Node<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(values));
  if (!grad_mode()) return out;
  bool any = false;
  for (const auto& op : operands) any = any || tracks(op);
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (auto& op : operands) {
    if (op.consumed()) throw GraphError("operand belongs to a graph that was already consumed");
    node.parents.push_back(op.node());
  }
  node.backward = std::move(backward);
  return out;
}

}  // namespace detail

/// Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable from
/// `loss`, then releases the graph. A consumed graph cannot be replayed.
template <class T>
void backward(Tensor<T>& loss) {
  if (loss.size() != 1) throw ShapeError("backward() needs a scalar loss, got " + to_string(loss.shape()));
  if (loss.consumed()) throw GraphError("backward() called twice on the same graph");
  if (!loss.requires_grad()) throw GraphError("loss does not depend on any requires_grad tensor");

  using NodePtr = detail::Node<T>*;
  std::vector<NodePtr> order;
  std::unordered_set<NodePtr> seen;
  std::vector<std::pair<NodePtr, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodePtr parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
  for (NodePtr node : order) {
    if (node->backward) {
      node->backward = nullptr;
      node->parents.clear();
      node->consumed = true;
    }
  }
  loss.node()->consumed = true;
}

// ---------------------------------------------------------------------------
// Elementwise and reduction ops

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  return detail::make_result<T>(a.shape(), std::move(v), {a, b}, [](detail::Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  return detail::make_result<T>(a.shape(), std::move(v), {a, b}, [](detail::Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T g = self.grad[i];
      if (pa.requires_grad) pa.grad[i] += g * pb.value[i];
      if (pb.requires_grad) pb.grad[i] += g * pa.value[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * factor;
  return detail::make_result<T>(a.shape(), std::move(v), {a}, [factor](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * factor;
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T s{0};
  for (T x : a.data()) s += x;
  return detail::make_result<T>(Shape{1}, {s}, {a}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    for (auto& g : p.grad) g += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T{1} / static_cast<T>(a.size()));
}

/// Concatenates two NCHW tensors along the channel axis.
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<T> v(n * (ca + cb) * hw);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().begin() + i * ca * hw, ca * hw, v.begin() + i * (ca + cb) * hw);
    std::copy_n(b.data().begin() + i * cb * hw, cb * hw, v.begin() + (i * (ca + cb) + ca) * hw);
  }
  return detail::make_result<T>(Shape{n, ca + cb, a.dim(2), a.dim(3)}, std::move(v), {a, b},
                                [n, ca, cb, hw](detail::Node<T>& self) {
                                  auto& pa = *self.parents[0];
                                  auto& pb = *self.parents[1];
                                  for (std::size_t i = 0; i < n; ++i) {
                                    const T* g = self.grad.data() + i * (ca + cb) * hw;
                                    if (pa.requires_grad) {
                                      for (std::size_t k = 0; k < ca * hw; ++k) pa.grad[i * ca * hw + k] += g[k];
                                    }
                                    if (pb.requires_grad) {
                                      for (std::size_t k = 0; k < cb * hw; ++k)
                                        pb.grad[i * cb * hw + k] += g[ca * hw + k];
                                    }
                                  }
                                });
}

/// Adds a per-channel bias to an NCHW tensor.
template <class T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (x.rank() != 4 || bias.size() != x.dim(1)) {
    throw ShapeError("add_channel_bias: bias " + to_string(bias.shape()) + " vs input " +
                     to_string(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> v(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t k = 0; k < hw; ++k) v[(i * c + ch) * hw + k] += bias[ch];
  return detail::make_result<T>(x.shape(), std::move(v), {x, bias}, [n, c, hw](detail::Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    if (px.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
          T s{0};
          for (std::size_t k = 0; k < hw; ++k) s += self.grad[(i * c + ch) * hw + k];
          pb.grad[ch] += s;
        }
    }
  });
}

}  // namespace cgseg
