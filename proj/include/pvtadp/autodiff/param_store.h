#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "pvtadp/core/tensor.h"

namespace pvtadp {

/// A named tensor owned by a ParamStore. Trainable entries carry a gradient
/// slot; non-trainable entries are buffers (batch-norm running statistics).
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
};

/// Ordered, name-addressable collection of parameters. Entries have stable
/// addresses for the lifetime of the store, including across moves.
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Parameter<T>& add(const std::string& name, Tensor<T> value, bool trainable = true);

  Parameter<T>& get(const std::string& name);
  const Parameter<T>& get(const std::string& name) const;
  Parameter<T>* find(const std::string& name);
  const Parameter<T>* find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *entries_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *entries_[i]; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  // Number of trainable scalars.
  std::size_t trainable_count() const;

  void zero_grad();

  // Copies values of every entry present in both stores with equal shape.
  // Returns the number of entries copied.
  std::size_t copy_values_from(const ParamStore& other);

 private:
  std::vector<std::unique_ptr<Parameter<T>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace pvtadp
