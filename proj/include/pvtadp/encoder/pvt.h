#pragma once

#include <cstddef>
#include <vector>

#include "pvtadp/nn/layers.h"

namespace pvtadp::enc {

struct EncoderConfig {
  std::size_t in_channels = 3;
  std::vector<std::size_t> stage_channels{32, 64, 128};
  std::vector<std::size_t> stage_depths{2, 2, 2};
  std::vector<std::size_t> sr_ratios{4, 2, 1};
  std::vector<std::size_t> num_heads{1, 2, 4};
  std::vector<std::size_t> patch_strides{4, 2, 2};
  std::size_t mlp_ratio = 4;

  std::size_t num_stages() const { return stage_channels.size(); }
  // Product of the patch strides; input H and W must be multiples of it.
  std::size_t total_stride() const;
  // Throws std::invalid_argument describing the first inconsistency.
  void validate() const;
};

// [B,C,H,W] <-> [B,H*W,C]
template <typename T>
Var<T> to_tokens(const Var<T>& image);
template <typename T>
Var<T> to_image(const Var<T>& tokens, std::size_t height, std::size_t width);

struct TokenMap {
  std::size_t height = 0;
  std::size_t width = 0;
};

// Overlapping strided conv (kernel 2s-1, padding s-1) followed by a layer norm
// over channels. Returns tokens [B, H/s * W/s, C].
template <typename T>
class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(ParamStore<T>& store, const std::string& name, std::size_t in_channels, std::size_t out_channels,
             std::size_t stride, Rng& rng);

  Var<T> forward(nn::Context<T>& ctx, const Var<T>& x, TokenMap& out_map) const;

  nn::Conv2d<T>& proj() { return proj_; }

 private:
  std::size_t stride_ = 1;
  nn::Conv2d<T> proj_;
  nn::LayerNorm<T> norm_;
};

// Multi-head attention whose keys and values come from the token map reduced
// by a strided conv (kernel = stride = sr) and a layer norm. sr = 1 is plain
// multi-head self-attention.
template <typename T>
class SpatialReductionAttention {
 public:
  SpatialReductionAttention() = default;
  SpatialReductionAttention(ParamStore<T>& store, const std::string& name, std::size_t channels,
                            std::size_t heads, std::size_t sr_ratio, Rng& rng);

  // `weights`, when given, receives the [B*heads, N, M] attention matrix.
  Var<T> forward(nn::Context<T>& ctx, const Var<T>& x, const TokenMap& map, Var<T>* weights = nullptr) const;

  // Length of the key/value sequence for an H x W map.
  std::size_t kv_length(const TokenMap& map) const;

  nn::Linear<T>& q() { return q_; }
  nn::Linear<T>& k() { return k_; }
  nn::Linear<T>& v() { return v_; }
  nn::Linear<T>& out() { return out_; }

 private:
  std::size_t channels_ = 0, heads_ = 1, sr_ = 1;
  nn::Linear<T> q_, k_, v_, out_;
  nn::Conv2d<T> sr_conv_;
  nn::LayerNorm<T> sr_norm_;
};

// linear -> depthwise 3x3 conv -> gelu -> linear
template <typename T>
class ConvFFN {
 public:
  ConvFFN() = default;
  ConvFFN(ParamStore<T>& store, const std::string& name, std::size_t channels, std::size_t hidden, Rng& rng);

  Var<T> forward(nn::Context<T>& ctx, const Var<T>& x, const TokenMap& map) const;

  nn::Linear<T>& fc2() { return fc2_; }

 private:
  std::size_t hidden_ = 0;
  nn::Linear<T> fc1_, fc2_;
  nn::Conv2d<T> dw_;
};

// x + attn(norm1(x)), then x + ffn(norm2(x)).
template <typename T>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParamStore<T>& store, const std::string& name, std::size_t channels, std::size_t heads,
                   std::size_t sr_ratio, std::size_t mlp_ratio, Rng& rng);

  Var<T> forward(nn::Context<T>& ctx, const Var<T>& x, const TokenMap& map) const;

  SpatialReductionAttention<T>& attn() { return attn_; }
  ConvFFN<T>& ffn() { return ffn_; }

 private:
  nn::LayerNorm<T> norm1_, norm2_;
  SpatialReductionAttention<T> attn_;
  ConvFFN<T> ffn_;
};

template <typename T>
struct FeaturePyramid {
  std::vector<Var<T>> levels;  // finest first, each [B, C_i, H/s_i, W/s_i]
};

template <typename T>
class PvtEncoder {
 public:
  PvtEncoder() = default;
  PvtEncoder(ParamStore<T>& store, const std::string& name, const EncoderConfig& cfg, Rng& rng);

  FeaturePyramid<T> forward(nn::Context<T>& ctx, const Var<T>& x) const;

  const EncoderConfig& config() const { return cfg_; }
  PatchEmbed<T>& patch_embed(std::size_t stage) { return stages_.at(stage).embed; }
  TransformerBlock<T>& block(std::size_t stage, std::size_t i) { return stages_.at(stage).blocks.at(i); }

 private:
  struct Stage {
    PatchEmbed<T> embed;
    std::vector<TransformerBlock<T>> blocks;
  };
  EncoderConfig cfg_;
  std::vector<Stage> stages_;
};

// g2 = f2 + proj(down2(f1)), g3 = f3 + proj(down2(g2)), ... with 1x1 projections
// matching channels. The finest level passes through unchanged.
template <typename T>
class DownsampleSumFusion {
 public:
  DownsampleSumFusion() = default;
  DownsampleSumFusion(ParamStore<T>& store, const std::string& name, const std::vector<std::size_t>& channels,
                      Rng& rng);

  FeaturePyramid<T> forward(nn::Context<T>& ctx, const FeaturePyramid<T>& p) const;

  nn::Conv2d<T>& proj(std::size_t i) { return projs_.at(i); }

 private:
  std::vector<nn::Conv2d<T>> projs_;
};

extern template class PatchEmbed<float>;
extern template class PatchEmbed<double>;
extern template class SpatialReductionAttention<float>;
extern template class SpatialReductionAttention<double>;
extern template class ConvFFN<float>;
extern template class ConvFFN<double>;
extern template class TransformerBlock<float>;
extern template class TransformerBlock<double>;
extern template class PvtEncoder<float>;
extern template class PvtEncoder<double>;
extern template class DownsampleSumFusion<float>;
extern template class DownsampleSumFusion<double>;

}  // namespace pvtadp::enc
