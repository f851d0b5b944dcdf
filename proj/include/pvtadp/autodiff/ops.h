#pragma once

// Differentiable tensor operations. Every op records its result on the tape
// of its first input and registers a backward closure when any input needs a
// gradient.

#include <cstddef>
#include <optional>
#include <type_traits>
#include <vector>

#include "pvtadp/autodiff/param_store.h"
#include "pvtadp/autodiff/tape.h"

namespace pvtadp {

// ---- elementwise / broadcasting -------------------------------------------

// `b` may broadcast onto `a` (numpy rules, one-sided): scalars, per-channel
// [B,C,1,1] vectors and trailing bias vectors are the cases used by the model.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& x, T factor);

template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> leaky_relu(const Var<T>& x, T negative_slope = T(0.01));
// tanh approximation.
template <typename T> Var<T> gelu(const Var<T>& x);
// Output clamped into the open interval (0, 1) so that saturation never
// yields exactly 0 or 1.
template <typename T> Var<T> sigmoid(const Var<T>& x);

// ---- reductions -----------------------------------------------------------

template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
// [B,C,H,W] -> [B,C]
template <typename T> Var<T> global_avg_pool(const Var<T>& x);

// ---- linear algebra -------------------------------------------------------

// [M,K] x [K,N] -> [M,N]
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// [G,M,K] x [G,K,N] -> [G,M,N]
template <typename T> Var<T> bmm(const Var<T>& a, const Var<T>& b);

// ---- layout ---------------------------------------------------------------

template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
template <typename T> Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& axes);
template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& xs);
// Zero-pads the bottom and right edges of a [B,C,H,W] map.
template <typename T> Var<T> pad2d_end(const Var<T>& x, std::size_t pad_bottom, std::size_t pad_right);

// ---- convolution & resampling ---------------------------------------------

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

// Cross-correlation. x [B,Cin,H,W], weight [Cout,Cin/groups,kh,kw], bias [Cout].
// Output size floor((H + 2p - kh)/s) + 1 per spatial axis.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const std::optional<std::type_identity_t<Var<T>>>& bias,
              const Conv2dOptions& opts = {});

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding);

// Bilinear, align_corners = false. factor must be a power of two.
template <typename T> Var<T> upsample_bilinear(const Var<T>& x, std::size_t factor);
template <typename T> Var<T> upsample_bilinear_2x(const Var<T>& x);
// Average pooling with kernel = stride = factor (power of two).
template <typename T> Var<T> downsample(const Var<T>& x, std::size_t factor);

// ---- normalisation --------------------------------------------------------

template <typename T> Var<T> softmax(const Var<T>& x, std::size_t axis);

// Normalises over the last axis; gamma/beta have that axis' length.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps);

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

// Per-channel normalisation of [B,C,H,W]. Training mode uses batch statistics
// and updates the running buffers; eval mode uses the running buffers.
template <typename T>
Var<T> batch_norm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                    Parameter<T>& running_mean, Parameter<T>& running_var,
                    const BatchNormOptions& opts, bool training);

}  // namespace pvtadp
