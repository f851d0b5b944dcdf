#include "pvtadp/autodiff/param_store.h"

namespace pvtadp {

template <typename T>
Parameter<T>& ParamStore<T>::add(const std::string& name, Tensor<T> value, bool trainable) {
  if (index_.count(name)) throw ShapeError("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter<T>>();
  p->name = name;
  p->trainable = trainable;
  if (trainable) p->grad = Tensor<T>(value.shape());
  p->value = std::move(value);
  index_.emplace(name, entries_.size());
  entries_.push_back(std::move(p));
  return *entries_.back();
}

template <typename T>
Parameter<T>* ParamStore<T>::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : entries_[it->second].get();
}

template <typename T>
const Parameter<T>* ParamStore<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : entries_[it->second].get();
}

template <typename T>
Parameter<T>& ParamStore<T>::get(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw ShapeError("unknown parameter: " + name);
}

template <typename T>
const Parameter<T>& ParamStore<T>::get(const std::string& name) const {
  if (auto* p = find(name)) return *p;
  throw ShapeError("unknown parameter: " + name);
}

template <typename T>
std::size_t ParamStore<T>::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_) {
    if (p->trainable) n += p->value.numel();
  }
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : entries_) {
    if (p->trainable) p->grad.fill(T(0));
  }
}

template <typename T>
std::size_t ParamStore<T>::copy_values_from(const ParamStore& other) {
  std::size_t copied = 0;
  for (auto& p : entries_) {
    const auto* src = other.find(p->name);
    if (src && src->value.shape() == p->value.shape()) {
      p->value = src->value;
      ++copied;
    }
  }
  return copied;
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace pvtadp
