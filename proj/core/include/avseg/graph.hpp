#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <utility>
#include <vector>

#include "avseg/params.hpp"
#include "avseg/tensor.hpp"

namespace avseg {

// Reverse-mode automatic differentiation over a per-forward tape. Nodes are
// appended in evaluation order, which is already a valid topological order,
// so backward is a single reverse sweep. Gradients accumulate (+=) into
// parents, which handles fan-out naturally.
template <typename T>
class Graph;

template <typename T>
struct Node {
  Tensor<T> owned;                       // value storage, empty for external leaves
  const Tensor<T>* external = nullptr;   // parameter-backed leaves point here
  Tensor<T> grad;                        // allocated on first touch in backward
  bool requires_grad = false;
  Parameter<T>* param = nullptr;
  std::function<void(Node<T>&)> backward;

  const Tensor<T>& value() const { return external ? *external : owned; }
  const Shape& shape() const { return value().shape(); }
  bool has_grad() const { return !grad.empty(); }
  Tensor<T>& ensure_grad() {
    if (grad.empty()) grad = Tensor<T>(value().shape());
    return grad;
  }
};

template <typename T>
struct Var {
  Node<T>* node = nullptr;

  bool valid() const { return node != nullptr; }
  explicit operator bool() const { return valid(); }
  const Tensor<T>& value() const { return node->value(); }
  const Shape& shape() const { return node->value().shape(); }
};

template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Constant leaf (no gradient), value copied in.
  Var<T> input(Tensor<T> value) {
    Node<T>& n = nodes_.emplace_back();
    n.owned = std::move(value);
    return {&n};
  }

  // Differentiable leaf that is not a model parameter (test harnesses).
  Var<T> variable(Tensor<T> value) {
    Node<T>& n = nodes_.emplace_back();
    n.owned = std::move(value);
    n.requires_grad = true;
    return {&n};
  }

  // Parameter-backed leaf; the tensor is referenced, not copied. Gradient
  // flows only if the parameter is trainable.
  Var<T> param(Parameter<T>& p) {
    Node<T>& n = nodes_.emplace_back();
    n.external = &p.value;
    n.param = &p;
    n.requires_grad = p.trainable;
    if (p.trainable) param_leaves_.emplace_back(&p, &n);
    return {&n};
  }

  Node<T>& make(Tensor<T> value, std::initializer_list<Node<T>*> parents) {
    Node<T>& n = nodes_.emplace_back();
    n.owned = std::move(value);
    for (Node<T>* p : parents) {
      if (p && p->requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    return n;
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse.
  void backward(Var<T> loss) {
    if (!loss.valid() || loss.value().numel() != 1) {
      throw ShapeError("backward expects a scalar loss node");
    }
    loss.node->ensure_grad()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& n = *it;
      if (n.requires_grad && n.has_grad() && n.backward) n.backward(n);
    }
  }

  // Adds scale * d(loss)/d(param) into each trainable parameter's grad
  // buffer, in leaf creation order (deterministic).
  void accumulate_param_grads(T scale) {
    for (auto& [p, n] : param_leaves_) {
      if (n->has_grad()) axpy_inplace(p->grad, scale, n->grad);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node<T>> nodes_;  // deque: stable addresses across growth
  std::vector<std::pair<Parameter<T>*, Node<T>*>> param_leaves_;
};

}  // namespace avseg
