#pragma once

#include <concepts>
#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <utility>

#include "lipnet/error.hpp"
#include "lipnet/tensor.hpp"

namespace lipnet {

/// Trainable tensor with its gradient accumulator.
template <std::floating_point T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;
  // Frozen parameters enter the tape as constants and are skipped by the optimizer.
  bool frozen = false;

  Parameter() = default;
  explicit Parameter(Tensor<T> v) : value(std::move(v)), grad(Tensor<T>::zeros(value.shape())) {}

  void zero_grad() {
    if (grad.shape() != value.shape()) {
      grad = Tensor<T>::zeros(value.shape());
    } else {
      grad.fill(T{0});
    }
  }
};

template <std::floating_point T>
class Tape;

/// Handle to a value recorded on a Tape.
template <std::floating_point T>
class Var {
 public:
  Var() = default;

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor<T>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(*this); }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of executed primitives for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so every node's inputs precede it.
/// backward() walks the record once in reverse; gradient accumulation order is
/// therefore fixed by the forward order. A tape belongs to one thread.
template <std::floating_point T>
class Tape {
 public:
  // Receives the node's output gradient; adds into input gradients via grad_sink().
  using Backward = std::function<void(Tape&, const Tensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push("constant", std::move(value), false, {}, nullptr); }

  // Differentiable input whose gradient is read back with grad().
  Var<T> leaf(Tensor<T> value) { return push("leaf", std::move(value), true, {}, nullptr); }

  Var<T> param(Parameter<T>& p) {
    return push("param", p.value, !p.frozen, {}, p.frozen ? nullptr : &p);
  }

  Var<T> record(std::string_view op, Tensor<T> value, bool requires_grad, Backward backward) {
    value.check_finite(op);
    return push(op, std::move(value), requires_grad, std::move(backward), nullptr);
  }

  const Tensor<T>& value(const Var<T>& v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(const Var<T>& v) const { return nodes_.at(v.id()).requires_grad; }

  // Gradient accumulator of v, allocated on first use; null when v is not differentiable.
  Tensor<T>* grad_sink(const Var<T>& v) {
    Node& n = nodes_.at(v.id());
    if (!n.requires_grad) return nullptr;
    if (!n.has_grad) {
      n.grad = Tensor<T>::zeros(n.value.shape());
      n.has_grad = true;
    }
    return &n.grad;
  }

  const Tensor<T>& grad(const Var<T>& v) const {
    const Node& n = nodes_.at(v.id());
    if (!n.has_grad) {
      throw ContractError("no gradient recorded for node '" + n.op + "'");
    }
    return n.grad;
  }

  void backward(const Var<T>& loss) {
    if (backward_done_) throw ContractError("backward() already ran on this tape");
    Node& root = nodes_.at(loss.id());
    if (root.value.size() != 1) {
      throw ContractError("backward() needs a scalar loss, got shape " +
                          to_string(root.value.shape()));
    }
    if (!root.requires_grad) {
      throw ContractError("loss does not depend on any differentiable input");
    }
    backward_done_ = true;
    grad_sink(loss)->fill(T{1});
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.has_grad) continue;
      if (!n.grad.all_finite()) {
        throw NumericError("non-finite gradient flowing into op '" + n.op + "'");
      }
      if (n.backward) {
        n.backward(*this, n.grad);
        // Interior gradients are consumed exactly once; release them.
        if (i != loss.id()) {
          n.grad = Tensor<T>{};
          n.has_grad = false;
        }
      } else if (n.param != nullptr) {
        n.param->grad += n.grad;
      }
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
    Parameter<T>* param = nullptr;
  };

  Var<T> push(std::string_view op, Tensor<T> value, bool requires_grad, Backward backward,
              Parameter<T>* param) {
    Node n;
    n.op = std::string(op);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(backward);
    n.param = param;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  // deque keeps value references stable while new nodes are appended.
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace lipnet
