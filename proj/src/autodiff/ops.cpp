#include "pvtadp/autodiff/ops.h"

#include <cmath>
#include <limits>
#include <numeric>

#include "kernels.h"

namespace pvtadp {

namespace {

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

// Index mapping from an element of `a` to the element of `b` it pairs with
// under one-sided broadcasting.
class BroadcastPlan {
 public:
  BroadcastPlan(const Shape& a, const Shape& b, const char* op) {
    const std::size_t an = numel(a);
    bn_ = numel(b);
    if (a == b) {
      kind_ = Kind::kSame;
      return;
    }
    if (bn_ == 1) {
      kind_ = Kind::kScalar;
      return;
    }
    if (!broadcastable_to(b, a)) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(b) + " onto " + to_string(a));
    }
    Shape padded(a.size() - b.size(), 1);
    padded.insert(padded.end(), b.begin(), b.end());

    // [1,..,1, a_k, .., a_n]
    std::size_t lead = 0;
    while (lead < padded.size() && padded[lead] == 1) ++lead;
    bool suffix = true;
    for (std::size_t i = lead; i < padded.size(); ++i) suffix &= padded[i] == a[i];
    if (suffix) {
      kind_ = Kind::kSuffix;
      return;
    }
    // [a_0, .., a_k, 1, .., 1]
    std::size_t head = 0;
    while (head < padded.size() && padded[head] == a[head]) ++head;
    bool prefix = true;
    for (std::size_t i = head; i < padded.size(); ++i) prefix &= padded[i] == 1;
    if (prefix) {
      kind_ = Kind::kPrefix;
      inner_ = an / bn_;
      return;
    }

    kind_ = Kind::kGeneral;
    Shape bstride(padded.size(), 0);
    std::size_t s = 1;
    for (std::size_t i = padded.size(); i-- > 0;) {
      bstride[i] = padded[i] == 1 ? 0 : s;
      s *= padded[i];
    }
    map_.resize(an);
    std::vector<std::size_t> idx(a.size(), 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < an; ++i) {
      map_[i] = off;
      for (std::size_t d = a.size(); d-- > 0;) {
        ++idx[d];
        off += bstride[d];
        if (idx[d] < a[d]) break;
        off -= bstride[d] * a[d];
        idx[d] = 0;
      }
    }
  }

  std::size_t operator()(std::size_t i) const {
    switch (kind_) {
      case Kind::kSame: return i;
      case Kind::kScalar: return 0;
      case Kind::kSuffix: return i % bn_;
      case Kind::kPrefix: return i / inner_;
      case Kind::kGeneral: return map_[i];
    }
    return 0;
  }

 private:
  enum class Kind { kSame, kScalar, kSuffix, kPrefix, kGeneral };
  Kind kind_ = Kind::kSame;
  std::size_t bn_ = 1;
  std::size_t inner_ = 1;
  std::vector<std::size_t> map_;
};

template <typename T>
void require_rank(const Var<T>& x, std::size_t rank, const char* op) {
  if (x.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(x.shape()));
  }
}

template <typename T, typename Fwd, typename Bwd>
Var<T> unary(const char* name, const Var<T>& x, Fwd fwd, Bwd dfdx) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = fwd(xv[i]);
  const std::size_t xid = x.id();
  return x.tape().record(name, std::move(out), {x},
                         [xid, dfdx](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                           T* dx = tape.grad_buffer(xid);
                           const Tensor<T>& xv = tape.value(xid);
                           for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += g[i] * dfdx(xv[i]);
                         });
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding) {
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (kernel == 0) throw ShapeError("conv2d: kernel size must be positive");
  if (in + 2 * padding < kernel) {
    throw ShapeError("conv2d: kernel " + std::to_string(kernel) + " larger than padded input " +
                     std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

// ============================================================================
// Elementwise
// ============================================================================

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  BroadcastPlan plan(a.shape(), b.shape(), "add");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] + bv[plan(i)];
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record("add", std::move(out), {a, b},
                         [aid, bid, plan = std::move(plan)](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                           if (T* da = tape.grad_buffer(aid)) {
                             for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i];
                           }
                           if (T* db = tape.grad_buffer(bid)) {
                             for (std::size_t i = 0; i < g.numel(); ++i) db[plan(i)] += g[i];
                           }
                         });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  BroadcastPlan plan(a.shape(), b.shape(), "sub");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] - bv[plan(i)];
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record("sub", std::move(out), {a, b},
                         [aid, bid, plan = std::move(plan)](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                           if (T* da = tape.grad_buffer(aid)) {
                             for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i];
                           }
                           if (T* db = tape.grad_buffer(bid)) {
                             for (std::size_t i = 0; i < g.numel(); ++i) db[plan(i)] -= g[i];
                           }
                         });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  BroadcastPlan plan(a.shape(), b.shape(), "mul");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] * bv[plan(i)];
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record("mul", std::move(out), {a, b},
                         [aid, bid, plan = std::move(plan)](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                           const Tensor<T>& av = tape.value(aid);
                           const Tensor<T>& bv = tape.value(bid);
                           if (T* da = tape.grad_buffer(aid)) {
                             for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * bv[plan(i)];
                           }
                           if (T* db = tape.grad_buffer(bid)) {
                             for (std::size_t i = 0; i < g.numel(); ++i) db[plan(i)] += g[i] * av[i];
                           }
                         });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  return unary<T>(
      "scale", x, [factor](T v) { return v * factor; }, [factor](T) { return factor; });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); }, [](T v) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T negative_slope) {
  return unary<T>(
      "leaky_relu", x, [negative_slope](T v) { return v > T(0) ? v : negative_slope * v; },
      [negative_slope](T v) { return v > T(0) ? T(1) : negative_slope; });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
  return unary<T>(
      "gelu", x,
      [](T v) { return T(0.5) * v * (T(1) + std::tanh(kC * (v + kA * v * v * v))); },
      [](T v) {
        const T t = std::tanh(kC * (v + kA * v * v * v));
        return T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * kC * (T(1) + T(3) * kA * v * v);
      });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  constexpr T kLo = std::numeric_limits<T>::min();
  constexpr T kHi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    const T v = xv[i];
    T s;
    if (v >= T(0)) {
      s = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      s = e / (T(1) + e);
    }
    out[i] = std::clamp(s, kLo, kHi);
  }
  const std::size_t xid = x.id();
  return x.tape().record("sigmoid", std::move(out), {x},
                         [xid](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>& y) {
                           T* dx = tape.grad_buffer(xid);
                           for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += g[i] * y[i] * (T(1) - y[i]);
                         });
}

// ============================================================================
// Reductions
// ============================================================================

template <typename T>
Var<T> sum(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  T s = T(0);
  for (std::size_t i = 0; i < xv.numel(); ++i) s += xv[i];
  const std::size_t xid = x.id();
  return x.tape().record("sum", Tensor<T>::scalar(s), {x}, [xid](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
    T* dx = tape.grad_buffer(xid);
    const std::size_t n = tape.value(xid).numel();
    for (std::size_t i = 0; i < n; ++i) dx[i] += g[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const std::size_t n = x.value().numel();
  return scale(sum(x), T(1) / static_cast<T>(n));
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  require_rank(x, 4, "global_avg_pool");
  const Shape& s = x.shape();
  const std::size_t planes = s[0] * s[1], hw = s[2] * s[3];
  const Tensor<T>& xv = x.value();
  Tensor<T> out(Shape{s[0], s[1]});
  for (std::size_t p = 0; p < planes; ++p) {
    T acc = T(0);
    const T* src = xv.data() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) acc += src[i];
    out[p] = acc / static_cast<T>(hw);
  }
  const std::size_t xid = x.id();
  return x.tape().record("global_avg_pool", std::move(out), {x},
                         [xid, planes, hw](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                           T* dx = tape.grad_buffer(xid);
                           const T inv = T(1) / static_cast<T>(hw);
                           for (std::size_t p = 0; p < planes; ++p) {
                             const T gp = g[p] * inv;
                             for (std::size_t i = 0; i < hw; ++i) dx[p * hw + i] += gp;
                           }
                         });
}

// ============================================================================
// Linear algebra
// ============================================================================

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  if (b.dim(0) != K) {
    throw ShapeError("matmul: inner dimensions differ: " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  Tensor<T> out(Shape{M, N});
  kernels::gemm_nn(M, N, K, a.value().data(), K, b.value().data(), N, out.data(), N, false);
  a.tape().add_flops("matmul", 2ull * M * N * K);
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record("matmul", std::move(out), {a, b},
                         [aid, bid, M, N, K](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                           std::vector<T> scratch;
                           if (T* da = tape.grad_buffer(aid)) {
                             kernels::gemm_nt(M, K, N, g.data(), N, tape.value(bid).data(), N, da, K,
                                              true, scratch);
                           }
                           if (T* db = tape.grad_buffer(bid)) {
                             kernels::gemm_tn(K, N, M, tape.value(aid).data(), K, g.data(), N, db, N,
                                              true, scratch);
                           }
                         });
}

template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t G = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
  if (b.dim(0) != G || b.dim(1) != K) {
    throw ShapeError("bmm: incompatible shapes " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Tensor<T> out(Shape{G, M, N});
  for (std::size_t gi = 0; gi < G; ++gi) {
    kernels::gemm_nn(M, N, K, a.value().data() + gi * M * K, K, b.value().data() + gi * K * N, N,
                     out.data() + gi * M * N, N, false);
  }
  a.tape().add_flops("bmm", 2ull * G * M * N * K);
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record("bmm", std::move(out), {a, b},
                         [aid, bid, G, M, N, K](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                           std::vector<T> scratch;
                           T* da = tape.grad_buffer(aid);
                           T* db = tape.grad_buffer(bid);
                           const T* av = tape.value(aid).data();
                           const T* bv = tape.value(bid).data();
                           for (std::size_t gi = 0; gi < G; ++gi) {
                             const T* gg = g.data() + gi * M * N;
                             if (da) {
                               kernels::gemm_nt(M, K, N, gg, N, bv + gi * K * N, N, da + gi * M * K, K,
                                                true, scratch);
                             }
                             if (db) {
                               kernels::gemm_tn(K, N, M, av + gi * M * K, K, gg, N, db + gi * K * N, N,
                                                true, scratch);
                             }
                           }
                         });
}

// ============================================================================
// Layout
// ============================================================================

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  check_shape(shape);
  if (numel(shape) != x.value().numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  const std::size_t xid = x.id();
  return x.tape().record("reshape", x.value().reshaped(std::move(shape)), {x},
                         [xid](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                           T* dx = tape.grad_buffer(xid);
                           for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += g[i];
                         });
}

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& axes) {
  const Shape& in = x.shape();
  const std::size_t r = in.size();
  if (axes.size() != r) throw ShapeError("permute: axis count does not match rank");
  std::vector<bool> seen(r, false);
  for (std::size_t a : axes) {
    if (a >= r || seen[a]) throw ShapeError("permute: invalid axis permutation");
    seen[a] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t d = r - 1; d-- > 0;) in_stride[d] = in_stride[d + 1] * in[d + 1];
  Shape out_shape(r);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in[axes[i]];
    src_stride[i] = in_stride[axes[i]];
  }
  // Output-order traversal yielding the matching input offset.
  auto walk = [out_shape, src_stride, r](auto&& visit) {
    const std::size_t n = numel(out_shape);
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t o = 0; o < n; ++o) {
      visit(o, off);
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        off += src_stride[d];
        if (idx[d] < out_shape[d]) break;
        off -= src_stride[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  };
  const Tensor<T>& xv = x.value();
  Tensor<T> out(out_shape);
  walk([&](std::size_t o, std::size_t i) { out[o] = xv[i]; });
  const std::size_t xid = x.id();
  return x.tape().record("permute", std::move(out), {x}, [xid, walk](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
    T* dx = tape.grad_buffer(xid);
    walk([&](std::size_t o, std::size_t i) { dx[i] += g[o]; });
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  for (const auto& x : xs) require_rank(x, 4, "concat_channels");
  const Shape& s0 = xs[0].shape();
  std::size_t channels = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    if (s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
      throw ShapeError("concat_channels: mismatched batch/spatial dims " + to_string(s0) + " vs " +
                       to_string(s));
    }
    channels += s[1];
  }
  const std::size_t B = s0[0], hw = s0[2] * s0[3];
  Tensor<T> out(Shape{B, channels, s0[2], s0[3]});
  std::vector<std::size_t> ids, widths;
  std::size_t offset = 0;
  for (const auto& x : xs) {
    const std::size_t c = x.dim(1);
    const T* src = x.value().data();
    for (std::size_t b = 0; b < B; ++b) {
      std::copy(src + b * c * hw, src + (b + 1) * c * hw, out.data() + (b * channels + offset) * hw);
    }
    ids.push_back(x.id());
    widths.push_back(c);
    offset += c;
  }
  return xs[0].tape().record("concat_channels", std::move(out), xs,
                             [ids, widths, B, channels, hw](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                               std::size_t offset = 0;
                               for (std::size_t k = 0; k < ids.size(); ++k) {
                                 const std::size_t c = widths[k];
                                 if (T* dx = tape.grad_buffer(ids[k])) {
                                   for (std::size_t b = 0; b < B; ++b) {
                                     const T* src = g.data() + (b * channels + offset) * hw;
                                     T* dst = dx + b * c * hw;
                                     for (std::size_t i = 0; i < c * hw; ++i) dst[i] += src[i];
                                   }
                                 }
                                 offset += c;
                               }
                             });
}

template <typename T>
Var<T> pad2d_end(const Var<T>& x, std::size_t pad_bottom, std::size_t pad_right) {
  require_rank(x, 4, "pad2d_end");
  if (pad_bottom == 0 && pad_right == 0) return x;
  const Shape& s = x.shape();
  const std::size_t planes = s[0] * s[1], H = s[2], W = s[3];
  const std::size_t Ho = H + pad_bottom, Wo = W + pad_right;
  Tensor<T> out(Shape{s[0], s[1], Ho, Wo});
  const Tensor<T>& xv = x.value();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < H; ++y) {
      std::copy(xv.data() + (p * H + y) * W, xv.data() + (p * H + y + 1) * W, out.data() + (p * Ho + y) * Wo);
    }
  }
  const std::size_t xid = x.id();
  return x.tape().record("pad2d_end", std::move(out), {x},
                         [xid, planes, H, W, Ho, Wo](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                           T* dx = tape.grad_buffer(xid);
                           for (std::size_t p = 0; p < planes; ++p) {
                             for (std::size_t y = 0; y < H; ++y) {
                               for (std::size_t xx = 0; xx < W; ++xx) {
                                 dx[(p * H + y) * W + xx] += g[(p * Ho + y) * Wo + xx];
                               }
                             }
                           }
                         });
}

// ============================================================================
// Convolution
// ============================================================================

namespace {

template <typename T>
void depthwise_forward(const T* x, const T* w, std::size_t B, std::size_t C, const kernels::ConvGeometry& g,
                       T* out) {
  const std::size_t P = g.out_h * g.out_w;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* xc = x + (b * C + c) * g.height * g.width;
      const T* wc = w + c * g.kh * g.kw;
      T* oc = out + (b * C + c) * P;
      for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          T acc = T(0);
          for (std::size_t i = 0; i < g.kh; ++i) {
            const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
            for (std::size_t j = 0; j < g.kw; ++j) {
              const long ix = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
              if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
              acc += wc[i * g.kw + j] * xc[iy * static_cast<long>(g.width) + ix];
            }
          }
          oc[oy * g.out_w + ox] = acc;
        }
      }
    }
  }
}

template <typename T>
void depthwise_backward(const T* x, const T* w, const T* gout, std::size_t B, std::size_t C,
                        const kernels::ConvGeometry& g, T* dx, T* dw) {
  const std::size_t P = g.out_h * g.out_w;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* xc = x + (b * C + c) * g.height * g.width;
      const T* wc = w + c * g.kh * g.kw;
      const T* gc = gout + (b * C + c) * P;
      T* dxc = dx ? dx + (b * C + c) * g.height * g.width : nullptr;
      T* dwc = dw ? dw + c * g.kh * g.kw : nullptr;
      for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const T go = gc[oy * g.out_w + ox];
          for (std::size_t i = 0; i < g.kh; ++i) {
            const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
            for (std::size_t j = 0; j < g.kw; ++j) {
              const long ix = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
              if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
              const long xi = iy * static_cast<long>(g.width) + ix;
              if (dxc) dxc[xi] += go * wc[i * g.kw + j];
              if (dwc) dwc[i * g.kw + j] += go * xc[xi];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const std::optional<std::type_identity_t<Var<T>>>& bias,
              const Conv2dOptions& opts) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  const std::size_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Cout = weight.dim(0), Cin_g = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  const std::size_t groups = opts.groups;
  if (groups == 0 || Cin % groups != 0 || Cout % groups != 0) {
    throw ShapeError("conv2d: channels " + std::to_string(Cin) + "->" + std::to_string(Cout) +
                     " not divisible by groups " + std::to_string(groups));
  }
  if (Cin_g * groups != Cin) {
    throw ShapeError("conv2d: weight " + to_string(weight.shape()) + " does not match input " +
                     to_string(x.shape()) + " with groups " + std::to_string(groups));
  }
  if (bias && bias->shape() != Shape{Cout}) {
    throw ShapeError("conv2d: bias shape " + to_string(bias->shape()) + " != [" + std::to_string(Cout) + "]");
  }
  kernels::ConvGeometry geo{Cin_g, H, W, kh, kw, opts.stride, opts.padding,
                            conv_output_size(H, kh, opts.stride, opts.padding),
                            conv_output_size(W, kw, opts.stride, opts.padding)};
  const std::size_t Cout_g = Cout / groups;
  const std::size_t P = geo.out_h * geo.out_w;
  const std::size_t Kg = Cin_g * kh * kw;
  const bool depthwise = Cin_g == 1 && Cout_g == 1;
  const bool pointwise = kh == 1 && kw == 1 && opts.stride == 1 && opts.padding == 0;

  Tensor<T> out(Shape{B, Cout, geo.out_h, geo.out_w});
  const T* xv = x.value().data();
  const T* wv = weight.value().data();
  if (depthwise) {
    depthwise_forward(xv, wv, B, Cin, geo, out.data());
  } else {
    std::vector<T> cols(pointwise ? 0 : Kg * P);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t gi = 0; gi < groups; ++gi) {
        const T* xg = xv + (b * Cin + gi * Cin_g) * H * W;
        const T* src = xg;
        if (!pointwise) {
          kernels::im2col(geo, xg, cols.data());
          src = cols.data();
        }
        kernels::gemm_nn(Cout_g, P, Kg, wv + gi * Cout_g * Kg, Kg, src, P,
                         out.data() + (b * Cout + gi * Cout_g) * P, P, false);
      }
    }
  }
  if (bias) {
    const T* bv = bias->value().data();
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t c = 0; c < Cout; ++c) {
        T* o = out.data() + (b * Cout + c) * P;
        for (std::size_t i = 0; i < P; ++i) o[i] += bv[c];
      }
    }
  }
  x.tape().add_flops("conv2d", 2ull * B * Cout * P * Kg);

  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  const std::size_t xid = x.id(), wid = weight.id();
  const std::optional<std::size_t> bid = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
  return x.tape().record(
      "conv2d", std::move(out), inputs,
      [=](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
        T* dx = tape.grad_buffer(xid);
        T* dw = tape.grad_buffer(wid);
        const T* xv = tape.value(xid).data();
        const T* wv = tape.value(wid).data();
        if (bid) {
          if (T* db = tape.grad_buffer(*bid)) {
            for (std::size_t b = 0; b < B; ++b) {
              for (std::size_t c = 0; c < Cout; ++c) {
                const T* gp = g.data() + (b * Cout + c) * P;
                T acc = T(0);
                for (std::size_t i = 0; i < P; ++i) acc += gp[i];
                db[c] += acc;
              }
            }
          }
        }
        if (!dx && !dw) return;
        if (depthwise) {
          depthwise_backward(xv, wv, g.data(), B, Cin, geo, dx, dw);
          return;
        }
        std::vector<T> cols(pointwise ? 0 : Kg * P);
        std::vector<T> dcols(pointwise ? 0 : Kg * P);
        std::vector<T> scratch;
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t gi = 0; gi < groups; ++gi) {
            const T* xg = xv + (b * Cin + gi * Cin_g) * H * W;
            const T* gg = g.data() + (b * Cout + gi * Cout_g) * P;
            const T* wg = wv + gi * Cout_g * Kg;
            if (dw) {
              const T* src = xg;
              if (!pointwise) {
                kernels::im2col(geo, xg, cols.data());
                src = cols.data();
              }
              kernels::gemm_nt(Cout_g, Kg, P, gg, P, src, P, dw + gi * Cout_g * Kg, Kg, true, scratch);
            }
            if (dx) {
              T* dxg = dx + (b * Cin + gi * Cin_g) * H * W;
              if (pointwise) {
                kernels::gemm_tn(Kg, P, Cout_g, wg, Kg, gg, P, dxg, P, true, scratch);
              } else {
                kernels::gemm_tn(Kg, P, Cout_g, wg, Kg, gg, P, dcols.data(), P, false, scratch);
                kernels::col2im(geo, dcols.data(), dxg);
              }
            }
          }
        }
      });
}

// ============================================================================
// Resampling
// ============================================================================

namespace {

struct Lerp {
  std::size_t i0, i1;
  double w1;  // weight of i1
};

// align_corners = false source coordinates, clamped at the borders.
std::vector<Lerp> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<Lerp> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    if (src < 0) src = 0;
    std::size_t i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, std::size_t factor) {
  require_rank(x, 4, "upsample_bilinear");
  if (!is_power_of_two(factor)) {
    throw ShapeError("upsample_bilinear: factor " + std::to_string(factor) + " is not a power of two");
  }
  if (factor == 1) return x;
  const Shape& s = x.shape();
  const std::size_t planes = s[0] * s[1], H = s[2], W = s[3];
  const std::size_t Ho = H * factor, Wo = W * factor;
  const auto ty = bilinear_taps(H, factor);
  const auto tx = bilinear_taps(W, factor);
  const Tensor<T>& xv = x.value();
  Tensor<T> out(Shape{s[0], s[1], Ho, Wo});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xv.data() + p * H * W;
    T* dst = out.data() + p * Ho * Wo;
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      const T wy1 = static_cast<T>(ty[oy].w1), wy0 = T(1) - wy1;
      const T* r0 = src + ty[oy].i0 * W;
      const T* r1 = src + ty[oy].i1 * W;
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        const T wx1 = static_cast<T>(tx[ox].w1), wx0 = T(1) - wx1;
        dst[oy * Wo + ox] = wy0 * (wx0 * r0[tx[ox].i0] + wx1 * r0[tx[ox].i1]) +
                            wy1 * (wx0 * r1[tx[ox].i0] + wx1 * r1[tx[ox].i1]);
      }
    }
  }
  const std::size_t xid = x.id();
  return x.tape().record("upsample_bilinear", std::move(out), {x},
                         [=](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                           T* dx = tape.grad_buffer(xid);
                           for (std::size_t p = 0; p < planes; ++p) {
                             T* d = dx + p * H * W;
                             const T* gp = g.data() + p * Ho * Wo;
                             for (std::size_t oy = 0; oy < Ho; ++oy) {
                               const T wy1 = static_cast<T>(ty[oy].w1), wy0 = T(1) - wy1;
                               T* r0 = d + ty[oy].i0 * W;
                               T* r1 = d + ty[oy].i1 * W;
                               for (std::size_t ox = 0; ox < Wo; ++ox) {
                                 const T wx1 = static_cast<T>(tx[ox].w1), wx0 = T(1) - wx1;
                                 const T go = gp[oy * Wo + ox];
                                 r0[tx[ox].i0] += go * wy0 * wx0;
                                 r0[tx[ox].i1] += go * wy0 * wx1;
                                 r1[tx[ox].i0] += go * wy1 * wx0;
                                 r1[tx[ox].i1] += go * wy1 * wx1;
                               }
                             }
                           }
                         });
}

template <typename T>
Var<T> upsample_bilinear_2x(const Var<T>& x) {
  return upsample_bilinear(x, 2);
}

template <typename T>
Var<T> downsample(const Var<T>& x, std::size_t factor) {
  require_rank(x, 4, "downsample");
  if (!is_power_of_two(factor)) {
    throw ShapeError("downsample: factor " + std::to_string(factor) + " is not a power of two");
  }
  if (factor == 1) return x;
  const Shape& s = x.shape();
  const std::size_t planes = s[0] * s[1], H = s[2], W = s[3];
  if (H % factor != 0 || W % factor != 0) {
    throw ShapeError("downsample: spatial dims " + to_string(s) + " not divisible by " + std::to_string(factor));
  }
  const std::size_t Ho = H / factor, Wo = W / factor;
  const T inv = T(1) / static_cast<T>(factor * factor);
  const Tensor<T>& xv = x.value();
  Tensor<T> out(Shape{s[0], s[1], Ho, Wo});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xv.data() + p * H * W;
    T* dst = out.data() + p * Ho * Wo;
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        T acc = T(0);
        for (std::size_t i = 0; i < factor; ++i) {
          for (std::size_t j = 0; j < factor; ++j) acc += src[(oy * factor + i) * W + ox * factor + j];
        }
        dst[oy * Wo + ox] = acc * inv;
      }
    }
  }
  const std::size_t xid = x.id();
  return x.tape().record("downsample", std::move(out), {x}, [=](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
    T* dx = tape.grad_buffer(xid);
    for (std::size_t p = 0; p < planes; ++p) {
      T* d = dx + p * H * W;
      const T* gp = g.data() + p * Ho * Wo;
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t xx = 0; xx < W; ++xx) d[y * W + xx] += gp[(y / factor) * Wo + xx / factor] * inv;
      }
    }
  });
}

// ============================================================================
// Normalisation
// ============================================================================

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw ShapeError("softmax: axis out of range for " + to_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t n = s[axis];
  const Tensor<T>& xv = x.value();
  Tensor<T> out(s);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = xv[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, xv[base + k * inner]);
      T total = T(0);
      for (std::size_t k = 0; k < n; ++k) {
        const T e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      const T inv = T(1) / total;
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] *= inv;
    }
  }
  const std::size_t xid = x.id();
  return x.tape().record("softmax", std::move(out), {x},
                         [=](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>& yv) {
                           T* dx = tape.grad_buffer(xid);
                           for (std::size_t o = 0; o < outer; ++o) {
                             for (std::size_t in = 0; in < inner; ++in) {
                               const std::size_t base = o * n * inner + in;
                               T dot = T(0);
                               for (std::size_t k = 0; k < n; ++k) dot += g[base + k * inner] * yv[base + k * inner];
                               for (std::size_t k = 0; k < n; ++k) {
                                 const std::size_t i = base + k * inner;
                                 dx[i] += yv[i] * (g[i] - dot);
                               }
                             }
                           }
                         });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  if (!(eps > T(0))) throw ShapeError("layer_norm: eps must be positive");
  const Shape& s = x.shape();
  const std::size_t C = s.back();
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C}) {
    throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(C) + "], got " +
                     to_string(gamma.shape()) + " / " + to_string(beta.shape()));
  }
  const std::size_t rows = x.value().numel() / C;
  const Tensor<T>& xv = x.value();
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
  Tensor<T> out(s);
  std::vector<T> xhat(xv.numel());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * C;
    T m = T(0);
    for (std::size_t c = 0; c < C; ++c) m += xr[c];
    m /= static_cast<T>(C);
    T var = T(0);
    for (std::size_t c = 0; c < C; ++c) var += (xr[c] - m) * (xr[c] - m);
    var /= static_cast<T>(C);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t c = 0; c < C; ++c) {
      const T h = (xr[c] - m) * rs;
      xhat[r * C + c] = h;
      out[r * C + c] = h * gv[c] + bv[c];
    }
  }
  const std::size_t xid = x.id(), gid = gamma.id(), bid = beta.id();
  return x.tape().record(
      "layer_norm", std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), rstd = std::move(rstd)](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
        T* dx = tape.grad_buffer(xid);
        T* dg = tape.grad_buffer(gid);
        T* db = tape.grad_buffer(bid);
        const T* gv = tape.value(gid).data();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = g.data() + r * C;
          const T* hr = xhat.data() + r * C;
          if (dg || db) {
            for (std::size_t c = 0; c < C; ++c) {
              if (dg) dg[c] += gr[c] * hr[c];
              if (db) db[c] += gr[c];
            }
          }
          if (dx) {
            T mean_d = T(0), mean_dh = T(0);
            for (std::size_t c = 0; c < C; ++c) {
              const T d = gr[c] * gv[c];
              mean_d += d;
              mean_dh += d * hr[c];
            }
            mean_d /= static_cast<T>(C);
            mean_dh /= static_cast<T>(C);
            for (std::size_t c = 0; c < C; ++c) {
              const T d = gr[c] * gv[c];
              dx[r * C + c] += rstd[r] * (d - mean_d - hr[c] * mean_dh);
            }
          }
        }
      });
}

template <typename T>
Var<T> batch_norm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                    Parameter<T>& running_mean, Parameter<T>& running_var,
                    const BatchNormOptions& opts, bool training) {
  require_rank(x, 4, "batch_norm2d");
  if (!(opts.eps > 0)) throw ShapeError("batch_norm2d: eps must be positive");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const Shape cs{C};
  if (gamma.shape() != cs || beta.shape() != cs || running_mean.value.shape() != cs ||
      running_var.value.shape() != cs) {
    throw ShapeError("batch_norm2d: parameter shapes do not match " + std::to_string(C) + " channels");
  }
  const T eps = static_cast<T>(opts.eps);
  const Tensor<T>& xv = x.value();
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
  const std::size_t N = B * HW;

  std::vector<T> mean(C), rstd(C);
  if (training) {
    for (std::size_t c = 0; c < C; ++c) {
      T m = T(0);
      for (std::size_t b = 0; b < B; ++b) {
        const T* p = xv.data() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) m += p[i];
      }
      m /= static_cast<T>(N);
      T var = T(0);
      for (std::size_t b = 0; b < B; ++b) {
        const T* p = xv.data() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) var += (p[i] - m) * (p[i] - m);
      }
      var /= static_cast<T>(N);
      mean[c] = m;
      rstd[c] = T(1) / std::sqrt(var + eps);
      const T mom = static_cast<T>(opts.momentum);
      const T unbiased = N > 1 ? var * static_cast<T>(N) / static_cast<T>(N - 1) : var;
      running_mean.value[c] = (T(1) - mom) * running_mean.value[c] + mom * m;
      running_var.value[c] = (T(1) - mom) * running_var.value[c] + mom * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running_mean.value[c];
      rstd[c] = T(1) / std::sqrt(running_var.value[c] + eps);
    }
  }

  Tensor<T> out(x.shape());
  std::vector<T> xhat(xv.numel());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t off = (b * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        const T h = (xv[off + i] - mean[c]) * rstd[c];
        xhat[off + i] = h;
        out[off + i] = h * gv[c] + bv[c];
      }
    }
  }
  const std::size_t xid = x.id(), gid = gamma.id(), bid = beta.id();
  return x.tape().record(
      "batch_norm2d", std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), rstd = std::move(rstd)](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
        T* dx = tape.grad_buffer(xid);
        T* dg = tape.grad_buffer(gid);
        T* db = tape.grad_buffer(bid);
        const T* gv = tape.value(gid).data();
        for (std::size_t c = 0; c < C; ++c) {
          T sum_g = T(0), sum_gh = T(0);
          for (std::size_t b = 0; b < B; ++b) {
            const std::size_t off = (b * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
              sum_g += g[off + i];
              sum_gh += g[off + i] * xhat[off + i];
            }
          }
          if (dg) dg[c] += sum_gh;
          if (db) db[c] += sum_g;
          if (!dx) continue;
          const T k = gv[c] * rstd[c];
          if (training) {
            const T mg = sum_g / static_cast<T>(N);
            const T mgh = sum_gh / static_cast<T>(N);
            for (std::size_t b = 0; b < B; ++b) {
              const std::size_t off = (b * C + c) * HW;
              for (std::size_t i = 0; i < HW; ++i) dx[off + i] += k * (g[off + i] - mg - xhat[off + i] * mgh);
            }
          } else {
            for (std::size_t b = 0; b < B; ++b) {
              const std::size_t off = (b * C + c) * HW;
              for (std::size_t i = 0; i < HW; ++i) dx[off + i] += k * g[off + i];
            }
          }
        }
      });
}

// ============================================================================

#define PVTADP_INSTANTIATE_OPS(T)                                                                   \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                             \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                             \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                             \
  template Var<T> scale<T>(const Var<T>&, T);                                                       \
  template Var<T> relu<T>(const Var<T>&);                                                           \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                                  \
  template Var<T> gelu<T>(const Var<T>&);                                                           \
  template Var<T> sigmoid<T>(const Var<T>&);                                                        \
  template Var<T> sum<T>(const Var<T>&);                                                            \
  template Var<T> mean<T>(const Var<T>&);                                                           \
  template Var<T> global_avg_pool<T>(const Var<T>&);                                                \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> bmm<T>(const Var<T>&, const Var<T>&);                                             \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                                 \
  template Var<T> permute<T>(const Var<T>&, const std::vector<std::size_t>&);                       \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                                   \
  template Var<T> pad2d_end<T>(const Var<T>&, std::size_t, std::size_t);                            \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const std::optional<std::type_identity_t<Var<T>>>&,             \
                            const Conv2dOptions&);                                                  \
  template Var<T> upsample_bilinear<T>(const Var<T>&, std::size_t);                                 \
  template Var<T> upsample_bilinear_2x<T>(const Var<T>&);                                           \
  template Var<T> downsample<T>(const Var<T>&, std::size_t);                                        \
  template Var<T> softmax<T>(const Var<T>&, std::size_t);                                           \
  template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);                    \
  template Var<T> batch_norm2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, Parameter<T>&,       \
                                  Parameter<T>&, const BatchNormOptions&, bool);

PVTADP_INSTANTIATE_OPS(float)
PVTADP_INSTANTIATE_OPS(double)

}  // namespace pvtadp
