#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "ssrstf/tensor.hpp"

namespace ssrstf {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  explicit operator bool() const { return valid(); }
  Tape<T>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records primitive operations in execution order so that backward() can
/// replay their adjoints in reverse. Node ids are strictly increasing, so the
/// record order is already a topological order and cycles cannot be formed.
///
/// A tape is single-threaded and is consumed by exactly one backward pass.
template <typename T>
class Tape {
 public:
  /// Called during backward with the tape and the id of the node whose
  /// gradient is being propagated to its inputs.
  using Backward = std::function<void(Tape&, std::size_t)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  /// Leaf that never receives a gradient (input data, targets).
  Var<T> constant(Tensor<T> value) { return push(std::move(value), nullptr, false); }

  /// Owned leaf that receives a gradient.
  Var<T> variable(Tensor<T> value) {
    return push(std::move(value), nullptr, grad_enabled_);
  }

  /// Leaf referencing externally owned storage (model parameters). The tensor
  /// must outlive the tape and stay unmodified until backward completes.
  Var<T> parameter(const Tensor<T>& value) {
    Node n;
    n.external = &value;
    n.requires_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  /// Records the result of a primitive. The closure is kept only when some
  /// input requires a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward fn) {
    return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                  std::move(fn));
  }
  Var<T> record(Tensor<T> value, std::span<const Var<T>> inputs, Backward fn) {
    bool needs = false;
    if (grad_enabled_)
      for (const auto& v : inputs)
        if (v.valid() && requires_grad(v.id())) needs = true;
    return push(std::move(value), needs ? std::move(fn) : nullptr, needs);
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient slot of a node, allocated as zeros on first use.
  Tensor<T>& grad_slot(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad = Tensor<T>::zeros(value(id).shape());
    return n.grad;
  }
  bool has_grad(std::size_t id) const { return !nodes_.at(id).grad.empty(); }

  /// Gradient of the last backward pass w.r.t. leaf `v`; zeros when unreachable.
  const Tensor<T>& grad(const Var<T>& v) { return grad_slot(v.id()); }

  /// Reverse-mode sweep seeded with d(loss)/d(loss) = 1. `loss` must hold one element.
  void backward(const Var<T>& loss) {
    if (consumed_) throw UsageError("tape already consumed by a previous backward pass");
    if (loss.tape() != this) throw UsageError("loss variable belongs to a different tape");
    if (loss.value().size() != 1)
      throw UsageError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
    consumed_ = true;
    if (!requires_grad(loss.id())) return;
    grad_slot(loss.id())[0] = T(1);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, id);
      if (id != loss.id()) n.grad = Tensor<T>();  // only leaf gradients are kept
    }
  }

  bool consumed() const { return consumed_; }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    Backward backward;
    bool requires_grad = false;
  };

  Var<T> push(Tensor<T> value, Backward fn, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.backward = std::move(fn);
    n.requires_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
  bool consumed_ = false;
};

}  // namespace ssrstf
