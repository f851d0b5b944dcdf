#include "pvtadp/train/optim.h"

#include <cmath>
#include <stdexcept>

namespace pvtadp::train {

void AdamConfig::validate() const {
  if (!(lr > 0)) throw std::invalid_argument("learning rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw std::invalid_argument("adam betas must be in [0,1)");
  if (!(eps > 0)) throw std::invalid_argument("adam eps must be positive");
}

template <typename T>
Adam<T>::Adam(ParamStore<T>& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
  cfg_.validate();
  sync();
}

template <typename T>
void Adam<T>::sync() {
  std::size_t k = 0;
  for (auto& p : params_) {
    if (!p->trainable) continue;
    if (k < slots_.size()) {
      if (slots_[k].param != p.get()) throw ShapeError("adam: parameter store was reordered");
    } else {
      slots_.push_back({p.get(), Tensor<T>(p->value.shape()), Tensor<T>(p->value.shape())});
    }
    ++k;
  }
}

template <typename T>
typename Adam<T>::Slot& Adam<T>::slot(const std::string& name) {
  sync();
  for (auto& s : slots_) {
    if (s.param->name == name) return s;
  }
  throw ShapeError("adam: no trainable parameter named " + name);
}

template <typename T>
Tensor<T>& Adam<T>::first_moment(const std::string& name) {
  return slot(name).m;
}

template <typename T>
Tensor<T>& Adam<T>::second_moment(const std::string& name) {
  return slot(name).v;
}

template <typename T>
void Adam<T>::step() {
  sync();
  for (const auto& s : slots_) {
    if (!s.param->grad.all_finite()) throw NumericError("adam: non-finite gradient for " + s.param->name);
  }
  ++t_;
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  const T c1 = static_cast<T>(1 - std::pow(cfg_.beta1, static_cast<double>(t_)));
  const T c2 = static_cast<T>(1 - std::pow(cfg_.beta2, static_cast<double>(t_)));
  const T lr = static_cast<T>(cfg_.lr), eps = static_cast<T>(cfg_.eps);
  for (auto& s : slots_) {
    T* w = s.param->value.data();
    const T* g = s.param->grad.data();
    T* m = s.m.data();
    T* v = s.v.data();
    for (std::size_t i = 0; i < s.m.numel(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

EarlyStopping::EarlyStopping(std::size_t patience, double min_delta) : patience_(patience), min_delta_(min_delta) {
  if (patience == 0) throw std::invalid_argument("early-stopping patience must be >= 1");
  if (!(min_delta >= 0)) throw std::invalid_argument("early-stopping min_delta must be non-negative");
}

bool EarlyStopping::update(double value) {
  improved_ = !has_best_ || value > best_ + min_delta_;
  if (improved_) {
    best_ = value;
    has_best_ = true;
    bad_ = 0;
  } else {
    ++bad_;
  }
  return should_stop();
}

void EarlyStopping::restore(bool has_best, double best, std::size_t bad_epochs) {
  has_best_ = has_best;
  best_ = best;
  bad_ = bad_epochs;
  improved_ = false;
}

}  // namespace pvtadp::train
