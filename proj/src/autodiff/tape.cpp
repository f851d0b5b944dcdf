#include "pvtadp/autodiff/tape.h"

#include <numeric>

namespace pvtadp {

template <typename T>
Var<T> Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  n.is_leaf = true;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node n;
  n.op = "leaf";
  n.value = std::move(value);
  n.is_leaf = true;
  n.requires_grad = requires_grad && grad_enabled_;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  Node n;
  n.op = "parameter";
  n.value = p.value;
  n.is_leaf = true;
  n.requires_grad = p.trainable && grad_enabled_;
  n.param = &p;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value, const std::vector<Var<T>>& inputs,
                       BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by op '" + std::string(op) + "'");
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const auto& in : inputs) {
      if (&in.tape() != this) throw ShapeError("op '" + std::string(op) + "' mixes tapes");
      if (nodes_[in.id()].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                       BackwardFn backward) {
  return record(op, std::move(value), std::vector<Var<T>>(inputs), std::move(backward));
}

template <typename T>
T* Tape<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    if (n.grad.shape() != n.value.shape()) {
      n.grad = Tensor<T>(n.value.shape());
    } else {
      n.grad.fill(T(0));
    }
    n.has_grad = true;
  }
  return n.grad.data();
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (!loss.valid() || &loss.tape() != this) throw ShapeError("backward: loss is not on this tape");
  Node& root = nodes_.at(loss.id());
  if (root.value.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + to_string(root.value.shape()));
  }
  if (!root.requires_grad) throw ShapeError("backward: loss does not depend on any gradient-carrying input");

  for (std::size_t i = 0; i <= loss.id(); ++i) {
    Node& n = nodes_[i];
    if (!n.is_leaf || n.param) n.has_grad = false;
  }
  grad_buffer(loss.id())[0] += T(1);

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) {
      n.backward(*this, n.grad, n.value);
    }
    if (!n.grad.all_finite()) {
      throw NumericError("non-finite gradient at op '" + std::string(n.op) + "'");
    }
  }

  for (std::size_t i = 0; i <= loss.id(); ++i) {
    Node& n = nodes_[i];
    if (n.param && n.has_grad) {
      T* dst = n.param->grad.data();
      const T* src = n.grad.data();
      for (std::size_t k = 0; k < n.grad.numel(); ++k) dst[k] += src[k];
      n.has_grad = false;
    }
  }
}

template <typename T>
const Tensor<T>& Tape<T>::grad(const Var<T>& v) const {
  const Node& n = nodes_.at(v.id());
  if (!n.has_grad) throw ShapeError("no gradient recorded for node " + std::to_string(v.id()));
  return n.grad;
}

template <typename T>
void Tape<T>::zero_grad() {
  for (auto& n : nodes_) n.has_grad = false;
}

template <typename T>
void Tape<T>::add_flops(std::string_view op, std::uint64_t n) {
  auto it = flops_.find(op);
  if (it == flops_.end()) {
    flops_.emplace(std::string(op), n);
  } else {
    it->second += n;
  }
}

template <typename T>
std::uint64_t Tape<T>::flops() const {
  std::uint64_t total = 0;
  for (const auto& [_, n] : flops_) total += n;
  return total;
}

template <typename T>
std::uint64_t Tape<T>::flops(std::string_view op) const {
  auto it = flops_.find(op);
  return it == flops_.end() ? 0 : it->second;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace pvtadp
