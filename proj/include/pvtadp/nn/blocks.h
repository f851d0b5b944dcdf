#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "pvtadp/nn/layers.h"

namespace pvtadp::nn {

// Squeeze-and-excitation: u * sigmoid(relu(gap(u) W1) W2), one gate per channel.
template <typename T>
class SEBlock {
 public:
  SEBlock() = default;
  SEBlock(ParamStore<T>& store, const std::string& name, std::size_t channels, std::size_t reduction,
          Rng& rng);

  Var<T> forward(Context<T>& ctx, const Var<T>& u) const;
  // The [B, C] gate vector alone.
  Var<T> gates(Context<T>& ctx, const Var<T>& u) const;

  std::size_t channels() const { return channels_; }
  Parameter<T>& w1() const { return *w1_; }
  Parameter<T>& w2() const { return *w2_; }

 private:
  std::size_t channels_ = 0;
  Parameter<T>* w1_ = nullptr;  // [C, C/r]
  Parameter<T>* w2_ = nullptr;  // [C/r, C]
};

// relu(branch(x) + shortcut(x)), branch = 1x1 reduce -> BN -> ReLU -> 3x3 -> BN
// -> ReLU -> 3x3 -> BN -> SE. The shortcut is a 1x1 conv + BN only when the
// channel counts differ.
template <typename T>
class ResidualSEBlock {
 public:
  ResidualSEBlock() = default;
  ResidualSEBlock(ParamStore<T>& store, const std::string& name, std::size_t in_channels,
                  std::size_t out_channels, std::size_t se_reduction, Rng& rng);

  Var<T> forward(Context<T>& ctx, const Var<T>& x) const;

  bool has_projection() const { return proj_.has_value(); }

 private:
  std::size_t in_ = 0, out_ = 0;
  Conv2d<T> reduce_, conv_a_, conv_b_;
  BatchNorm2d<T> bn_reduce_, bn_a_, bn_b_;
  SEBlock<T> se_;
  std::optional<Conv2d<T>> proj_;
  std::optional<BatchNorm2d<T>> proj_bn_;
};

// Two bottleneck pathways up(f(down(h))) summed. With `shared` set, the second
// pathway reuses the first one's weights, which makes the output 2x one pathway.
template <typename T>
class AdapterBlock {
 public:
  AdapterBlock() = default;
  AdapterBlock(ParamStore<T>& store, const std::string& name, std::size_t in_channels,
               std::size_t out_channels, std::size_t bottleneck, Activation act, bool shared, Rng& rng);

  Var<T> forward(Context<T>& ctx, const Var<T>& h) const;

  Conv2d<T>& main_down() { return main_down_; }
  Conv2d<T>& main_up() { return main_up_; }
  Conv2d<T>& par_down() { return shared_ ? main_down_ : par_down_; }
  Conv2d<T>& par_up() { return shared_ ? main_up_ : par_up_; }

 private:
  std::size_t in_ = 0;
  Activation act_ = Activation::kRelu;
  bool shared_ = false;
  Conv2d<T> main_down_, main_up_, par_down_, par_up_;
};

// ReLU(BN(conv1x1(x)))
template <typename T>
class CBRBlock {
 public:
  CBRBlock() = default;
  CBRBlock(ParamStore<T>& store, const std::string& name, std::size_t in_channels, std::size_t out_channels,
           Rng& rng);

  Var<T> forward(Context<T>& ctx, const Var<T>& x) const;

  Conv2d<T>& conv() { return conv_; }
  BatchNorm2d<T>& bn() { return bn_; }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
};

// Two conv3x3 -> BN -> ReLU layers.
template <typename T>
class PlainConvBlock {
 public:
  PlainConvBlock() = default;
  PlainConvBlock(ParamStore<T>& store, const std::string& name, std::size_t in_channels,
                 std::size_t out_channels, Rng& rng);

  Var<T> forward(Context<T>& ctx, const Var<T>& x) const;

 private:
  Conv2d<T> conv_a_, conv_b_;
  BatchNorm2d<T> bn_a_, bn_b_;
};

extern template class SEBlock<float>;
extern template class SEBlock<double>;
extern template class ResidualSEBlock<float>;
extern template class ResidualSEBlock<double>;
extern template class AdapterBlock<float>;
extern template class AdapterBlock<double>;
extern template class CBRBlock<float>;
extern template class CBRBlock<double>;
extern template class PlainConvBlock<float>;
extern template class PlainConvBlock<double>;

}  // namespace pvtadp::nn
