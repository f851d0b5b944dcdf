#include "pvtadp/nn/blocks.h"

namespace pvtadp::nn {

namespace {

void require_channels(const Shape& s, std::size_t channels, const char* block) {
  if (s.size() != 4 || s[1] != channels) {
    throw ShapeError(std::string(block) + ": expected [B," + std::to_string(channels) + ",H,W], got " +
                     to_string(s));
  }
}

template <typename T>
Conv2d<T> make_conv(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, std::size_t k,
               bool bias, Rng& rng) {
  return Conv2d<T>(store, name,
                   typename Conv2d<T>::Spec{.in_channels = in, .out_channels = out, .kernel = k,
                                            .stride = 1, .padding = k / 2, .groups = 1, .bias = bias},
                   rng);
}

}  // namespace

template <typename T>
SEBlock<T>::SEBlock(ParamStore<T>& store, const std::string& name, std::size_t channels, std::size_t reduction,
                    Rng& rng)
    : channels_(channels) {
  if (reduction == 0 || channels / reduction < 1) {
    throw ShapeError("se " + name + ": reduction " + std::to_string(reduction) + " leaves no hidden units for " +
                     std::to_string(channels) + " channels");
  }
  const std::size_t hidden = channels / reduction;
  w1_ = &store.add(name + ".w1", he_uniform<T>({channels, hidden}, channels, rng));
  w2_ = &store.add(name + ".w2", he_uniform<T>({hidden, channels}, hidden, rng));
}

template <typename T>
Var<T> SEBlock<T>::gates(Context<T>& ctx, const Var<T>& u) const {
  require_channels(u.shape(), channels_, "se");
  const Var<T> z = global_avg_pool(u);
  return sigmoid(matmul(relu(matmul(z, ctx.bind(*w1_))), ctx.bind(*w2_)));
}

template <typename T>
Var<T> SEBlock<T>::forward(Context<T>& ctx, const Var<T>& u) const {
  const Var<T> s = gates(ctx, u);
  return mul(u, reshape(s, Shape{u.dim(0), channels_, 1, 1}));
}

template <typename T>
ResidualSEBlock<T>::ResidualSEBlock(ParamStore<T>& store, const std::string& name, std::size_t in_channels,
                                    std::size_t out_channels, std::size_t se_reduction, Rng& rng)
    : in_(in_channels), out_(out_channels) {
  reduce_ = make_conv<T>(store, name + ".reduce", in_channels, out_channels, 1, false, rng);
  bn_reduce_ = BatchNorm2d<T>(store, name + ".reduce_bn", out_channels);
  conv_a_ = make_conv<T>(store, name + ".conv_a", out_channels, out_channels, 3, false, rng);
  bn_a_ = BatchNorm2d<T>(store, name + ".bn_a", out_channels);
  conv_b_ = make_conv<T>(store, name + ".conv_b", out_channels, out_channels, 3, false, rng);
  bn_b_ = BatchNorm2d<T>(store, name + ".bn_b", out_channels);
  se_ = SEBlock<T>(store, name + ".se", out_channels, se_reduction, rng);
  if (in_channels != out_channels) {
    proj_ = make_conv<T>(store, name + ".proj", in_channels, out_channels, 1, false, rng);
    proj_bn_ = BatchNorm2d<T>(store, name + ".proj_bn", out_channels);
  }
}

template <typename T>
Var<T> ResidualSEBlock<T>::forward(Context<T>& ctx, const Var<T>& x) const {
  require_channels(x.shape(), in_, "residual_se");
  Var<T> h = relu(bn_reduce_.forward(ctx, reduce_.forward(ctx, x)));
  h = relu(bn_a_.forward(ctx, conv_a_.forward(ctx, h)));
  h = bn_b_.forward(ctx, conv_b_.forward(ctx, h));
  h = se_.forward(ctx, h);
  const Var<T> shortcut = proj_ ? proj_bn_->forward(ctx, proj_->forward(ctx, x)) : x;
  if (h.shape() != shortcut.shape()) {
    throw ShapeError("residual_se: branch " + to_string(h.shape()) + " vs shortcut " + to_string(shortcut.shape()));
  }
  return relu(add(h, shortcut));
}

template <typename T>
AdapterBlock<T>::AdapterBlock(ParamStore<T>& store, const std::string& name, std::size_t in_channels,
                              std::size_t out_channels, std::size_t bottleneck, Activation act, bool shared,
                              Rng& rng)
    : in_(in_channels), act_(act), shared_(shared) {
  if (bottleneck == 0 || bottleneck >= in_channels) {
    throw ShapeError("adapter " + name + ": bottleneck " + std::to_string(bottleneck) +
                     " must be in [1, " + std::to_string(in_channels) + ")");
  }
  main_down_ = make_conv<T>(store, name + ".main_down", in_channels, bottleneck, 1, false, rng);
  main_up_ = make_conv<T>(store, name + ".main_up", bottleneck, out_channels, 1, false, rng);
  if (!shared) {
    par_down_ = make_conv<T>(store, name + ".par_down", in_channels, bottleneck, 1, false, rng);
    par_up_ = make_conv<T>(store, name + ".par_up", bottleneck, out_channels, 1, false, rng);
  }
}

template <typename T>
Var<T> AdapterBlock<T>::forward(Context<T>& ctx, const Var<T>& h) const {
  require_channels(h.shape(), in_, "adapter");
  const Var<T> main = main_up_.forward(ctx, activate(act_, main_down_.forward(ctx, h)));
  const Conv2d<T>& down = shared_ ? main_down_ : par_down_;
  const Conv2d<T>& up = shared_ ? main_up_ : par_up_;
  const Var<T> parallel = up.forward(ctx, activate(act_, down.forward(ctx, h)));
  return add(main, parallel);
}

template <typename T>
CBRBlock<T>::CBRBlock(ParamStore<T>& store, const std::string& name, std::size_t in_channels,
                      std::size_t out_channels, Rng& rng) {
  conv_ = make_conv<T>(store, name + ".conv", in_channels, out_channels, 1, false, rng);
  bn_ = BatchNorm2d<T>(store, name + ".bn", out_channels);
}

template <typename T>
Var<T> CBRBlock<T>::forward(Context<T>& ctx, const Var<T>& x) const {
  require_channels(x.shape(), conv_.spec().in_channels, "cbr");
  return relu(bn_.forward(ctx, conv_.forward(ctx, x)));
}

template <typename T>
PlainConvBlock<T>::PlainConvBlock(ParamStore<T>& store, const std::string& name, std::size_t in_channels,
                                  std::size_t out_channels, Rng& rng) {
  conv_a_ = make_conv<T>(store, name + ".conv_a", in_channels, out_channels, 3, false, rng);
  bn_a_ = BatchNorm2d<T>(store, name + ".bn_a", out_channels);
  conv_b_ = make_conv<T>(store, name + ".conv_b", out_channels, out_channels, 3, false, rng);
  bn_b_ = BatchNorm2d<T>(store, name + ".bn_b", out_channels);
}

template <typename T>
Var<T> PlainConvBlock<T>::forward(Context<T>& ctx, const Var<T>& x) const {
  require_channels(x.shape(), conv_a_.spec().in_channels, "plain_block");
  const Var<T> h = relu(bn_a_.forward(ctx, conv_a_.forward(ctx, x)));
  return relu(bn_b_.forward(ctx, conv_b_.forward(ctx, h)));
}

template class SEBlock<float>;
template class SEBlock<double>;
template class ResidualSEBlock<float>;
template class ResidualSEBlock<double>;
template class AdapterBlock<float>;
template class AdapterBlock<double>;
template class CBRBlock<float>;
template class CBRBlock<double>;
template class PlainConvBlock<float>;
template class PlainConvBlock<double>;

}  // namespace pvtadp::nn
