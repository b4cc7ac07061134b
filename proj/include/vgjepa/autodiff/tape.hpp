// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "vgjepa/autodiff/tensor.hpp"

namespace vgjepa::ad {

template <class T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t i) const { return value().dim(i); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const { return tape->requires_grad(*this); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
// sweep visits every node after all of its consumers.
template <class T>
class Tape {
 public:
  using Backward = std::function<void(const Tensor<T>& out_grad, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> v) { return push(std::move(v), false, nullptr); }
  Var<T> leaf(Tensor<T> v, bool requires_grad) {
    return push(std::move(v), requires_grad, nullptr);
  }

  // Records an op result. The backward closure runs only if the result
  // requires grad and received a gradient during the sweep.
  Var<T> record(Tensor<T> v, bool requires_grad, Backward backward) {
    if (!v.all_finite()) {
      throw NumericError("non-finite value produced in forward pass");
    }
    return push(std::move(v), requires_grad,
                requires_grad ? std::move(backward) : nullptr);
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient buffer of a node; zero-initialized on first access.
  Tensor<T>& grad_buffer(int id) {
    Node& n = nodes_.at(id);
    if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  void accumulate(int id, const Tensor<T>& g) {
    if (!nodes_.at(id).requires_grad) return;
    Tensor<T>& buf = grad_buffer(id);
    T* dst = buf.ptr();
    const T* src = g.ptr();
    for (std::size_t i = 0, n = buf.size(); i < n; ++i) dst[i] += src[i];
  }

  // Gradient of a node after backward(); zeros if none flowed.
  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.size() != n.value.size()) return Tensor<T>(n.value.shape());
    return n.grad;
  }

  void backward(Var<T> loss) {
    if (loss.tape != this) throw NumericError("loss belongs to another tape");
    if (value(loss).size() != 1) {
      throw NumericError("backward() needs a scalar loss, got shape " +
                         shape_str(value(loss).shape()));
    }
    if (!nodes_[loss.id].requires_grad) return;
    grad_buffer(loss.id)[0] = T{1};
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() != n.value.size()) continue;
      // Move the closure out so it may append-free mutate other nodes.
      Backward fn = std::move(n.backward);
      Tensor<T> g = std::move(n.grad);
      fn(g, *this);
      nodes_[i].grad = std::move(g);
    }
  }

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var<T> push(Tensor<T> v, bool rg, Backward bw) {
    nodes_.push_back(Node{std::move(v), Tensor<T>(), rg, std::move(bw)});
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  std::deque<Node> nodes_;  // deque: references survive push_back
};

}  // namespace vgjepa::ad
