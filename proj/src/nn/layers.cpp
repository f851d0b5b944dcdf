#include "pvtadp/nn/layers.h"

#include <cmath>

namespace pvtadp::nn {

template <typename T>
Tensor<T> he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
Conv2d<T>::Conv2d(ParamStore<T>& store, const std::string& name, const Spec& spec, Rng& rng) : spec_(spec) {
  if (spec.in_channels == 0 || spec.out_channels == 0 || spec.kernel == 0 || spec.groups == 0 ||
      spec.in_channels % spec.groups != 0 || spec.out_channels % spec.groups != 0) {
    throw ShapeError("conv " + name + ": inconsistent channel/group configuration");
  }
  const std::size_t cin_g = spec.in_channels / spec.groups;
  const std::size_t fan_in = cin_g * spec.kernel * spec.kernel;
  weight_ = &store.add(name + ".weight",
                       he_uniform<T>({spec.out_channels, cin_g, spec.kernel, spec.kernel}, fan_in, rng));
  if (spec.bias) bias_ = &store.add(name + ".bias", Tensor<T>({spec.out_channels}));
}

template <typename T>
Var<T> Conv2d<T>::forward(Context<T>& ctx, const Var<T>& x) const {
  std::optional<Var<T>> b;
  if (bias_) b = ctx.bind(*bias_);
  return conv2d(x, ctx.bind(*weight_), b,
                Conv2dOptions{.stride = spec_.stride, .padding = spec_.padding, .groups = spec_.groups});
}

template <typename T>
Linear<T>::Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, bool bias,
                  Rng& rng)
    : in_(in), out_(out) {
  weight_ = &store.add(name + ".weight", he_uniform<T>({in, out}, in, rng));
  if (bias) bias_ = &store.add(name + ".bias", Tensor<T>({out}));
}

template <typename T>
Var<T> Linear<T>::forward(Context<T>& ctx, const Var<T>& x) const {
  const Shape& s = x.shape();
  if (s.back() != in_) {
    throw ShapeError("linear: expected last axis " + std::to_string(in_) + ", got " + to_string(s));
  }
  Var<T> flat = s.size() == 2 ? x : reshape(x, Shape{numel(s) / in_, in_});
  Var<T> y = matmul(flat, ctx.bind(*weight_));
  if (bias_) y = add(y, ctx.bind(*bias_));
  if (s.size() == 2) return y;
  Shape out = s;
  out.back() = out_;
  return reshape(y, out);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(ParamStore<T>& store, const std::string& name, std::size_t channels) {
  gamma_ = &store.add(name + ".gamma", Tensor<T>({channels}, T(1)));
  beta_ = &store.add(name + ".beta", Tensor<T>({channels}, T(0)));
  mean_ = &store.add(name + ".running_mean", Tensor<T>({channels}, T(0)), false);
  var_ = &store.add(name + ".running_var", Tensor<T>({channels}, T(1)), false);
}

template <typename T>
Var<T> BatchNorm2d<T>::forward(Context<T>& ctx, const Var<T>& x) const {
  return batch_norm2d(x, ctx.bind(*gamma_), ctx.bind(*beta_), *mean_, *var_, BatchNormOptions{}, ctx.training());
}

template <typename T>
LayerNorm<T>::LayerNorm(ParamStore<T>& store, const std::string& name, std::size_t channels, T eps)
    : eps_(eps) {
  gamma_ = &store.add(name + ".gamma", Tensor<T>({channels}, T(1)));
  beta_ = &store.add(name + ".beta", Tensor<T>({channels}, T(0)));
}

template <typename T>
Var<T> LayerNorm<T>::forward(Context<T>& ctx, const Var<T>& x) const {
  return layer_norm(x, ctx.bind(*gamma_), ctx.bind(*beta_), eps_);
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "gelu") return Activation::kGelu;
  throw std::invalid_argument("unknown activation '" + name + "' (expected relu, leaky_relu or gelu)");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kGelu: return "gelu";
  }
  return "relu";
}

template <typename T>
Var<T> activate(Activation a, const Var<T>& x) {
  switch (a) {
    case Activation::kRelu: return relu(x);
    case Activation::kLeakyRelu: return leaky_relu(x);
    case Activation::kGelu: return gelu(x);
  }
  return relu(x);
}

template Tensor<float> he_uniform<float>(Shape, std::size_t, Rng&);
template Tensor<double> he_uniform<double>(Shape, std::size_t, Rng&);
template Var<float> activate<float>(Activation, const Var<float>&);
template Var<double> activate<double>(Activation, const Var<double>&);
template class Conv2d<float>;
template class Conv2d<double>;
template class Linear<float>;
template class Linear<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;

}  // namespace pvtadp::nn
