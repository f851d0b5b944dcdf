#pragma once

#include <cstdint>
#include <vector>

#include "pvtadp/autodiff/param_store.h"

namespace pvtadp::train {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// Adam over every trainable entry of a store, in store order. Moments are
// created lazily for entries added after construction.
template <typename T>
class Adam {
 public:
  Adam(ParamStore<T>& params, AdamConfig cfg);

  // Throws NumericError before touching any parameter if a gradient is not finite.
  void step();

  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }
  const AdamConfig& config() const { return cfg_; }

  Tensor<T>& first_moment(const std::string& name);
  Tensor<T>& second_moment(const std::string& name);

 private:
  struct Slot {
    Parameter<T>* param;
    Tensor<T> m, v;
  };
  Slot& slot(const std::string& name);
  void sync();

  ParamStore<T>& params_;
  AdamConfig cfg_;
  std::vector<Slot> slots_;
  std::uint64_t t_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

// Tracks a metric to maximise. update() returns true once `patience`
// consecutive epochs have failed to beat the best by more than min_delta.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience = 5, double min_delta = 1e-4);

  bool update(double value);
  bool improved() const { return improved_; }
  bool has_best() const { return has_best_; }
  double best() const { return best_; }
  std::size_t bad_epochs() const { return bad_; }
  bool should_stop() const { return bad_ >= patience_; }

  void restore(bool has_best, double best, std::size_t bad_epochs);

 private:
  std::size_t patience_;
  double min_delta_;
  bool has_best_ = false;
  bool improved_ = false;
  double best_ = 0;
  std::size_t bad_ = 0;
};

}  // namespace pvtadp::train
