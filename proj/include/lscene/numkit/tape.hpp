#pragma once

#include <algorithm>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "lscene/numkit/tensor.hpp"

namespace lscene::numkit {

template <typename T>
class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<T>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode gradient tape. Nodes are appended in evaluation order, so
// parents always precede children and a reverse sweep is a reverse
// topological order. Single-threaded; independent passes use independent
// tapes.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value) {
    check_finite(value, "leaf");
    return push("leaf", std::move(value), {}, nullptr, true);
  }

  Var<T> constant(Tensor<T> value) {
    check_finite(value, "constant");
    return push("constant", std::move(value), {}, nullptr, false);
  }

  // Used by op implementations. The node requires grad iff any parent does.
  Var<T> record(std::string_view op, Tensor<T> value,
                std::initializer_list<Var<T>> parents, BackwardFn backward) {
    return record(op, std::move(value), std::vector<Var<T>>(parents),
                  std::move(backward));
  }

  Var<T> record(std::string_view op, Tensor<T> value,
                const std::vector<Var<T>>& parents, BackwardFn backward) {
    check_finite(value, op);
    std::vector<std::size_t> ids;
    ids.reserve(parents.size());
    bool needs = false;
    for (const auto& p : parents) {
      if (&p.tape() != this) {
        throw ContractError(std::string(op) + ": operand from another tape");
      }
      ids.push_back(p.id());
      needs = needs || nodes_[p.id()].requires_grad;
    }
    return push(op, std::move(value), std::move(ids),
                needs ? std::move(backward) : nullptr, needs);
  }

  const Tensor<T>& value(const Var<T>& v) const { return nodes_.at(v.id()).value; }
  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient buffer of the node itself (read side of a backward rule).
  std::span<const T> grad_of(std::size_t id) const { return nodes_[id].grad; }

  // Accumulation target for a parent; empty span when the parent does not
  // require a gradient.
  std::span<T> grad_sink(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return {};
    if (n.grad.empty()) n.grad.assign(n.value.size(), T{0});
    return n.grad;
  }

  const std::vector<std::size_t>& parents(std::size_t id) const {
    return nodes_[id].parents;
  }

  // Gradient of the last backward() sweep w.r.t. `v`; zeros if unreached.
  Tensor<T> grad(const Var<T>& v) const {
    const Node& n = nodes_.at(v.id());
    if (n.grad.empty()) return Tensor<T>(n.value.shape());
    return Tensor<T>(n.value.shape(), n.grad);
  }

  void backward(const Var<T>& loss) {
    const Node& root = nodes_.at(loss.id());
    if (root.value.size() != 1) {
      throw ContractError("backward: loss must be a scalar, got " +
                          shape_str(root.value.shape()));
    }
    if (swept_) throw ContractError("backward: tape already swept");
    swept_ = true;
    if (!root.requires_grad) return;
    nodes_[loss.id()].grad.assign(1, T{1});
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }
  std::string_view op_name(std::size_t id) const { return nodes_[id].op; }

 private:
  struct Node {
    std::string_view op;
    Tensor<T> value;
    std::vector<T> grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var<T> push(std::string_view op, Tensor<T> value, std::vector<std::size_t> parents,
              BackwardFn backward, bool requires_grad) {
    nodes_.push_back(Node{op, std::move(value), {}, std::move(parents),
                          std::move(backward), requires_grad});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;  // deque: references stay valid as nodes are appended
  bool swept_ = false;
};

}  // namespace lscene::numkit
