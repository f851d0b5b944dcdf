#pragma once

#include <cstddef>
#include <string>

#include "pvtadp/autodiff/ops.h"
#include "pvtadp/core/rng.h"
#include "pvtadp/nn/context.h"

namespace pvtadp::nn {

// He-uniform: U(-b, b) with b = sqrt(6 / fan_in).
template <typename T>
Tensor<T> he_uniform(Shape shape, std::size_t fan_in, Rng& rng);

template <typename T>
class Conv2d {
 public:
  struct Spec {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;
    bool bias = true;
  };

  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, const Spec& spec, Rng& rng);

  Var<T> forward(Context<T>& ctx, const Var<T>& x) const;

  const Spec& spec() const { return spec_; }
  Parameter<T>& weight() const { return *weight_; }
  Parameter<T>* bias() const { return bias_; }

 private:
  Spec spec_;
  Parameter<T>* weight_ = nullptr;
  Parameter<T>* bias_ = nullptr;
};

// y = x W + b over the last axis; any leading axes are flattened.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, bool bias,
         Rng& rng);

  Var<T> forward(Context<T>& ctx, const Var<T>& x) const;

  Parameter<T>& weight() const { return *weight_; }
  Parameter<T>* bias() const { return bias_; }

 private:
  std::size_t in_ = 0, out_ = 0;
  Parameter<T>* weight_ = nullptr;
  Parameter<T>* bias_ = nullptr;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParamStore<T>& store, const std::string& name, std::size_t channels);

  Var<T> forward(Context<T>& ctx, const Var<T>& x) const;

  Parameter<T>& gamma() const { return *gamma_; }
  Parameter<T>& beta() const { return *beta_; }
  Parameter<T>& running_mean() const { return *mean_; }
  Parameter<T>& running_var() const { return *var_; }

 private:
  Parameter<T>* gamma_ = nullptr;
  Parameter<T>* beta_ = nullptr;
  Parameter<T>* mean_ = nullptr;
  Parameter<T>* var_ = nullptr;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore<T>& store, const std::string& name, std::size_t channels, T eps = T(1e-6));

  Var<T> forward(Context<T>& ctx, const Var<T>& x) const;

 private:
  Parameter<T>* gamma_ = nullptr;
  Parameter<T>* beta_ = nullptr;
  T eps_ = T(1e-6);
};

enum class Activation { kRelu, kLeakyRelu, kGelu };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);

template <typename T>
Var<T> activate(Activation a, const Var<T>& x);

extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class Linear<float>;
extern template class Linear<double>;
extern template class BatchNorm2d<float>;
extern template class BatchNorm2d<double>;
extern template class LayerNorm<float>;
extern template class LayerNorm<double>;

}  // namespace pvtadp::nn
