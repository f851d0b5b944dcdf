#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pvtadp/autodiff/param_store.h"
#include "pvtadp/core/tensor.h"

namespace pvtadp {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  Tape<T>& tape() const { return *tape_; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recording. Nodes are appended in evaluation order, so the
/// node list is always topologically sorted; backward walks it in reverse and
/// visits each node once.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out, const Tensor<T>& out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Tensor<T> value);
  Var<T> leaf(Tensor<T> value, bool requires_grad = true);
  // Leaf whose gradient is flushed into `p.grad` at the end of every backward().
  Var<T> parameter(Parameter<T>& p);

  // Appends an op result. `backward` may be empty for non-differentiable ops;
  // it is dropped when no input requires a gradient.
  Var<T> record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                BackwardFn backward);
  Var<T> record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs,
                BackwardFn backward);

  // Requires a single-element loss recorded on this tape. Intermediate
  // gradients are recomputed on every call; leaf and parameter gradients
  // accumulate until zeroed.
  void backward(const Var<T>& loss);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::string_view op(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }

  bool has_grad(const Var<T>& v) const { return nodes_.at(v.id()).has_grad; }
  // Gradient of a leaf after backward(); throws if none was produced.
  const Tensor<T>& grad(const Var<T>& v) const;
  void zero_grad();

  // Used by op backward functions. Returns a zero-initialised buffer on first
  // touch, nullptr when the node does not need a gradient.
  T* grad_buffer(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  void add_flops(std::string_view op, std::uint64_t n);
  std::uint64_t flops() const;
  std::uint64_t flops(std::string_view op) const;
  void reset_flops() { flops_.clear(); }

 private:
  struct Node {
    std::string_view op;
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool is_leaf = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
  };

  Var<T> push(Node node);

  bool grad_enabled_;
  std::deque<Node> nodes_;  // stable references while recording
  std::map<std::string, std::uint64_t, std::less<>> flops_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace pvtadp
