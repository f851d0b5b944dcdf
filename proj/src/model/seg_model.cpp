#include "pvtadp/model/seg_model.h"

namespace pvtadp::model {

template <typename T>
SegModel<T>::SegModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const auto& ch = cfg_.encoder.stage_channels;
  const std::size_t n = ch.size();

  encoder_ = enc::PvtEncoder<T>(params_, "encoder", cfg_.encoder, rng);
  if (cfg_.fuses()) fusion_.emplace(params_, "fusion", ch, rng);

  levels_.resize(n - 1);
  for (std::size_t j = n - 1; j-- > 0;) {
    const std::string name = "decoder.level" + std::to_string(j);
    Level& lv = levels_[j];
    if (cfg_.adapter_skips()) {
      lv.adapter.emplace(params_, name + ".skip", ch[j], ch[j], ch[j] / cfg_.adapter_reduction,
                         cfg_.adapter_activation, cfg_.adapter_shared, rng);
    } else {
      lv.cbr.emplace(params_, name + ".skip", ch[j], ch[j], rng);
    }
    const std::size_t in = ch[j + 1] + ch[j];
    if (cfg_.residual_decoder()) {
      lv.residual.emplace(params_, name + ".block", in, ch[j], cfg_.se_reduction, rng);
    } else {
      lv.plain.emplace(params_, name + ".block", in, ch[j], rng);
    }
  }
  head_ = nn::Conv2d<T>(params_, "head",
                        {.in_channels = ch[0], .out_channels = 1, .kernel = 1, .stride = 1, .padding = 0,
                         .groups = 1, .bias = true},
                        rng);
}

template <typename T>
void SegModel<T>::check_input(const Shape& s) const {
  const std::size_t total = cfg_.encoder.total_stride();
  if (s.size() != 4 || s[1] != cfg_.encoder.in_channels) {
    throw ShapeError("model: expected [B," + std::to_string(cfg_.encoder.in_channels) + ",H,W], got " +
                     to_string(s));
  }
  if (s[2] % total != 0 || s[3] % total != 0) {
    throw ShapeError("model: input " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                     " is not divisible by " + std::to_string(total));
  }
}

template <typename T>
Var<T> SegModel<T>::forward(nn::Context<T>& ctx, const Var<T>& images) const {
  check_input(images.shape());
  enc::FeaturePyramid<T> pyr = encoder_.forward(ctx, images);
  if (fusion_) pyr = fusion_->forward(ctx, pyr);

  Var<T> d = pyr.levels.back();
  for (std::size_t j = levels_.size(); j-- > 0;) {
    const Level& lv = levels_[j];
    const Var<T> skip = lv.adapter ? lv.adapter->forward(ctx, pyr.levels[j]) : lv.cbr->forward(ctx, pyr.levels[j]);
    const Var<T> cat = concat_channels<T>({upsample_bilinear_2x(d), skip});
    d = lv.residual ? lv.residual->forward(ctx, cat) : lv.plain->forward(ctx, cat);
  }
  d = upsample_bilinear(d, cfg_.encoder.patch_strides[0]);
  return sigmoid(head_.forward(ctx, d));
}

template <typename T>
Var<T> SegModel<T>::forward(Tape<T>& tape, const Var<T>& images, bool training) const {
  nn::Context<T> ctx(tape, training);
  return forward(ctx, images);
}

template <typename T>
Tensor<T> SegModel<T>::predict(const Tensor<T>& images) const {
  Tape<T> tape(false);
  return forward(tape, tape.constant(images), false).value();
}

template <typename T>
std::uint64_t SegModel<T>::flop_estimate(std::size_t height, std::size_t width) const {
  Tape<T> tape(false);
  forward(tape, tape.constant(Tensor<T>({1, cfg_.encoder.in_channels, height, width})), false);
  return tape.flops();
}

template class SegModel<float>;
template class SegModel<double>;

}  // namespace pvtadp::model
