#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pvtadp/encoder/pvt.h"
#include "pvtadp/model/config.h"
#include "pvtadp/nn/blocks.h"

namespace pvtadp::model {

// Pyramid-transformer encoder, optional downsample-and-sum fusion, a decoder
// ladder from the coarsest level (upsample x2, concat with the transformed
// skip, decoder block), a final upsample to input resolution, 1x1 head and
// sigmoid. Output [B,1,H,W] with values in (0,1).
template <typename T>
class SegModel {
 public:
  explicit SegModel(const ModelConfig& cfg);
  SegModel(SegModel&&) noexcept = default;
  SegModel& operator=(SegModel&&) noexcept = default;

  Var<T> forward(nn::Context<T>& ctx, const Var<T>& images) const;
  Var<T> forward(Tape<T>& tape, const Var<T>& images, bool training) const;

  // Eval-mode probabilities without recording gradients.
  Tensor<T> predict(const Tensor<T>& images) const;

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  // Trainable scalars (batch-norm running statistics excluded).
  std::size_t param_count() const { return params_.trainable_count(); }
  // Multiply-add FLOPs of one eval forward on a 1-image batch, from the op counters.
  std::uint64_t flop_estimate(std::size_t height, std::size_t width) const;

  nn::Conv2d<T>& head() { return head_; }
  enc::PvtEncoder<T>& encoder() { return encoder_; }

 private:
  struct Level {
    std::optional<nn::CBRBlock<T>> cbr;
    std::optional<nn::AdapterBlock<T>> adapter;
    std::optional<nn::ResidualSEBlock<T>> residual;
    std::optional<nn::PlainConvBlock<T>> plain;
  };

  void check_input(const Shape& s) const;

  ModelConfig cfg_;
  ParamStore<T> params_;
  enc::PvtEncoder<T> encoder_;
  std::optional<enc::DownsampleSumFusion<T>> fusion_;
  std::vector<Level> levels_;  // index = pyramid level; the coarsest has no entry
  nn::Conv2d<T> head_;
};

extern template class SegModel<float>;
extern template class SegModel<double>;

}  // namespace pvtadp::model
