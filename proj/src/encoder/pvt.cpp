#include "pvtadp/encoder/pvt.h"

#include <cmath>
#include <stdexcept>

namespace pvtadp::enc {

std::size_t EncoderConfig::total_stride() const {
  std::size_t s = 1;
  for (std::size_t v : patch_strides) s *= v;
  return s;
}

void EncoderConfig::validate() const {
  const std::size_t n = stage_channels.size();
  if (n == 0) throw std::invalid_argument("encoder: at least one stage required");
  if (stage_depths.size() != n || sr_ratios.size() != n || num_heads.size() != n || patch_strides.size() != n) {
    throw std::invalid_argument("encoder: per-stage lists must all have " + std::to_string(n) + " entries");
  }
  if (in_channels == 0) throw std::invalid_argument("encoder: in_channels must be positive");
  if (mlp_ratio == 0) throw std::invalid_argument("encoder: mlp_ratio must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    const std::string stage = "encoder stage " + std::to_string(i) + ": ";
    if (stage_channels[i] == 0) throw std::invalid_argument(stage + "channels must be positive");
    if (i > 0 && stage_channels[i] <= stage_channels[i - 1]) {
      throw std::invalid_argument(stage + "channels must strictly increase");
    }
    if (num_heads[i] == 0 || stage_channels[i] % num_heads[i] != 0) {
      throw std::invalid_argument(stage + "channels not divisible by heads");
    }
    if (sr_ratios[i] == 0) throw std::invalid_argument(stage + "sr_ratio must be >= 1");
    if (patch_strides[i] == 0) throw std::invalid_argument(stage + "patch stride must be >= 1");
    if (i > 0 && patch_strides[i] != 2) {
      throw std::invalid_argument(stage + "stages after the first must halve resolution (stride 2)");
    }
  }
}

template <typename T>
Var<T> to_tokens(const Var<T>& image) {
  const Shape& s = image.shape();
  return reshape(permute(image, {0, 2, 3, 1}), Shape{s[0], s[2] * s[3], s[1]});
}

template <typename T>
Var<T> to_image(const Var<T>& tokens, std::size_t height, std::size_t width) {
  const Shape& s = tokens.shape();
  if (s.size() != 3 || s[1] != height * width) {
    throw ShapeError("token map " + to_string(s) + " does not hold " + std::to_string(height) + "x" +
                     std::to_string(width) + " positions");
  }
  return permute(reshape(tokens, Shape{s[0], height, width, s[2]}), {0, 3, 1, 2});
}

// ---------------------------------------------------------------------------

template <typename T>
PatchEmbed<T>::PatchEmbed(ParamStore<T>& store, const std::string& name, std::size_t in_channels,
                          std::size_t out_channels, std::size_t stride, Rng& rng)
    : stride_(stride) {
  proj_ = nn::Conv2d<T>(store, name + ".proj",
                        {.in_channels = in_channels, .out_channels = out_channels, .kernel = 2 * stride - 1,
                         .stride = stride, .padding = stride - 1, .groups = 1, .bias = true},
                        rng);
  norm_ = nn::LayerNorm<T>(store, name + ".norm", out_channels);
}

template <typename T>
Var<T> PatchEmbed<T>::forward(nn::Context<T>& ctx, const Var<T>& x, TokenMap& out_map) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[2] % stride_ != 0 || s[3] % stride_ != 0) {
    throw ShapeError("patch_embed: spatial dims of " + to_string(s) + " not divisible by stride " +
                     std::to_string(stride_));
  }
  const Var<T> y = proj_.forward(ctx, x);
  out_map = {y.dim(2), y.dim(3)};
  return norm_.forward(ctx, to_tokens(y));
}

// ---------------------------------------------------------------------------

template <typename T>
SpatialReductionAttention<T>::SpatialReductionAttention(ParamStore<T>& store, const std::string& name,
                                                        std::size_t channels, std::size_t heads,
                                                        std::size_t sr_ratio, Rng& rng)
    : channels_(channels), heads_(heads), sr_(sr_ratio) {
  if (heads == 0 || channels % heads != 0) {
    throw ShapeError("attention " + name + ": channels " + std::to_string(channels) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (sr_ratio == 0) throw ShapeError("attention " + name + ": sr_ratio must be >= 1");
  q_ = nn::Linear<T>(store, name + ".q", channels, channels, true, rng);
  k_ = nn::Linear<T>(store, name + ".k", channels, channels, true, rng);
  v_ = nn::Linear<T>(store, name + ".v", channels, channels, true, rng);
  out_ = nn::Linear<T>(store, name + ".out", channels, channels, true, rng);
  if (sr_ratio > 1) {
    sr_conv_ = nn::Conv2d<T>(store, name + ".sr",
                             {.in_channels = channels, .out_channels = channels, .kernel = sr_ratio,
                              .stride = sr_ratio, .padding = 0, .groups = 1, .bias = true},
                             rng);
    sr_norm_ = nn::LayerNorm<T>(store, name + ".sr_norm", channels);
  }
}

template <typename T>
std::size_t SpatialReductionAttention<T>::kv_length(const TokenMap& map) const {
  const auto ceil_div = [this](std::size_t v) { return (v + sr_ - 1) / sr_; };
  return ceil_div(map.height) * ceil_div(map.width);
}

template <typename T>
Var<T> SpatialReductionAttention<T>::forward(nn::Context<T>& ctx, const Var<T>& x, const TokenMap& map,
                                             Var<T>* weights) const {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[2] != channels_) {
    throw ShapeError("attention: expected [B,N," + std::to_string(channels_) + "], got " + to_string(s));
  }
  if (s[1] != map.height * map.width) {
    throw ShapeError("attention: N=" + std::to_string(s[1]) + " but map is " + std::to_string(map.height) +
                     "x" + std::to_string(map.width));
  }
  const std::size_t B = s[0], N = s[1], d = channels_ / heads_;

  Var<T> kv_src = x;
  if (sr_ > 1) {
    Var<T> img = to_image(x, map.height, map.width);
    const std::size_t pad_h = (sr_ - map.height % sr_) % sr_;
    const std::size_t pad_w = (sr_ - map.width % sr_) % sr_;
    img = sr_conv_.forward(ctx, pad2d_end(img, pad_h, pad_w));
    kv_src = sr_norm_.forward(ctx, to_tokens(img));
  }
  const std::size_t M = kv_src.dim(1);

  // [B, L, C] -> [B*heads, L, d]
  const auto split_heads = [&](const Var<T>& t, std::size_t len) {
    return reshape(permute(reshape(t, Shape{B, len, heads_, d}), {0, 2, 1, 3}), Shape{B * heads_, len, d});
  };
  const Var<T> q = split_heads(q_.forward(ctx, x), N);
  const Var<T> k = split_heads(k_.forward(ctx, kv_src), M);
  const Var<T> v = split_heads(v_.forward(ctx, kv_src), M);

  const T scale_factor = T(1) / std::sqrt(static_cast<T>(d));
  const Var<T> attn = softmax(scale(bmm(q, permute(k, {0, 2, 1})), scale_factor), 2);
  if (weights) *weights = attn;
  Var<T> o = bmm(attn, v);  // [B*heads, N, d]
  o = reshape(permute(reshape(o, Shape{B, heads_, N, d}), {0, 2, 1, 3}), Shape{B, N, channels_});
  return out_.forward(ctx, o);
}

// ---------------------------------------------------------------------------

template <typename T>
ConvFFN<T>::ConvFFN(ParamStore<T>& store, const std::string& name, std::size_t channels, std::size_t hidden,
                    Rng& rng)
    : hidden_(hidden) {
  fc1_ = nn::Linear<T>(store, name + ".fc1", channels, hidden, true, rng);
  dw_ = nn::Conv2d<T>(store, name + ".dwconv",
                      {.in_channels = hidden, .out_channels = hidden, .kernel = 3, .stride = 1, .padding = 1,
                       .groups = hidden, .bias = true},
                      rng);
  fc2_ = nn::Linear<T>(store, name + ".fc2", hidden, channels, true, rng);
}

template <typename T>
Var<T> ConvFFN<T>::forward(nn::Context<T>& ctx, const Var<T>& x, const TokenMap& map) const {
  Var<T> h = fc1_.forward(ctx, x);
  h = to_tokens(dw_.forward(ctx, to_image(h, map.height, map.width)));
  return fc2_.forward(ctx, gelu(h));
}

// ---------------------------------------------------------------------------

template <typename T>
TransformerBlock<T>::TransformerBlock(ParamStore<T>& store, const std::string& name, std::size_t channels,
                                      std::size_t heads, std::size_t sr_ratio, std::size_t mlp_ratio, Rng& rng) {
  norm1_ = nn::LayerNorm<T>(store, name + ".norm1", channels);
  attn_ = SpatialReductionAttention<T>(store, name + ".attn", channels, heads, sr_ratio, rng);
  norm2_ = nn::LayerNorm<T>(store, name + ".norm2", channels);
  ffn_ = ConvFFN<T>(store, name + ".ffn", channels, channels * mlp_ratio, rng);
}

template <typename T>
Var<T> TransformerBlock<T>::forward(nn::Context<T>& ctx, const Var<T>& x, const TokenMap& map) const {
  const Var<T> h = add(x, attn_.forward(ctx, norm1_.forward(ctx, x), map));
  return add(h, ffn_.forward(ctx, norm2_.forward(ctx, h), map));
}

// ---------------------------------------------------------------------------

template <typename T>
PvtEncoder<T>::PvtEncoder(ParamStore<T>& store, const std::string& name, const EncoderConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  std::size_t in = cfg_.in_channels;
  for (std::size_t i = 0; i < cfg_.num_stages(); ++i) {
    const std::string sname = name + ".stage" + std::to_string(i);
    const std::size_t c = cfg_.stage_channels[i];
    Stage stage;
    stage.embed = PatchEmbed<T>(store, sname + ".patch_embed", in, c, cfg_.patch_strides[i], rng);
    for (std::size_t b = 0; b < cfg_.stage_depths[i]; ++b) {
      stage.blocks.emplace_back(store, sname + ".block" + std::to_string(b), c, cfg_.num_heads[i],
                                cfg_.sr_ratios[i], cfg_.mlp_ratio, rng);
    }
    stages_.push_back(std::move(stage));
    in = c;
  }
}

template <typename T>
FeaturePyramid<T> PvtEncoder<T>::forward(nn::Context<T>& ctx, const Var<T>& x) const {
  const Shape& s = x.shape();
  const std::size_t total = cfg_.total_stride();
  if (s.size() != 4 || s[1] != cfg_.in_channels) {
    throw ShapeError("encoder: expected [B," + std::to_string(cfg_.in_channels) + ",H,W], got " + to_string(s));
  }
  if (s[2] % total != 0 || s[3] % total != 0) {
    throw ShapeError("encoder: input " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                     " not divisible by " + std::to_string(total));
  }
  FeaturePyramid<T> out;
  Var<T> h = x;
  for (const Stage& stage : stages_) {
    TokenMap map;
    Var<T> t = stage.embed.forward(ctx, h, map);
    for (const auto& blk : stage.blocks) t = blk.forward(ctx, t, map);
    h = to_image(t, map.height, map.width);
    out.levels.push_back(h);
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
DownsampleSumFusion<T>::DownsampleSumFusion(ParamStore<T>& store, const std::string& name,
                                            const std::vector<std::size_t>& channels, Rng& rng) {
  for (std::size_t i = 0; i + 1 < channels.size(); ++i) {
    projs_.emplace_back(store, name + ".proj" + std::to_string(i + 1) + std::to_string(i + 2),
                        typename nn::Conv2d<T>::Spec{.in_channels = channels[i], .out_channels = channels[i + 1],
                                                     .kernel = 1, .stride = 1, .padding = 0, .groups = 1,
                                                     .bias = true},
                        rng);
  }
}

template <typename T>
FeaturePyramid<T> DownsampleSumFusion<T>::forward(nn::Context<T>& ctx, const FeaturePyramid<T>& p) const {
  if (p.levels.size() != projs_.size() + 1) {
    throw ShapeError("fusion: expected " + std::to_string(projs_.size() + 1) + " pyramid levels");
  }
  FeaturePyramid<T> out;
  out.levels.push_back(p.levels[0]);
  for (std::size_t i = 0; i < projs_.size(); ++i) {
    const Var<T> carried = projs_[i].forward(ctx, downsample(out.levels[i], 2));
    if (carried.shape() != p.levels[i + 1].shape()) {
      throw ShapeError("fusion: level " + std::to_string(i + 1) + " shape " + to_string(p.levels[i + 1].shape()) +
                       " vs carried " + to_string(carried.shape()));
    }
    out.levels.push_back(add(p.levels[i + 1], carried));
  }
  return out;
}

template Var<float> to_tokens<float>(const Var<float>&);
template Var<double> to_tokens<double>(const Var<double>&);
template Var<float> to_image<float>(const Var<float>&, std::size_t, std::size_t);
template Var<double> to_image<double>(const Var<double>&, std::size_t, std::size_t);
template class PatchEmbed<float>;
template class PatchEmbed<double>;
template class SpatialReductionAttention<float>;
template class SpatialReductionAttention<double>;
template class ConvFFN<float>;
template class ConvFFN<double>;
template class TransformerBlock<float>;
template class TransformerBlock<double>;
template class PvtEncoder<float>;
template class PvtEncoder<double>;
template class DownsampleSumFusion<float>;
template class DownsampleSumFusion<double>;

}  // namespace pvtadp::enc
