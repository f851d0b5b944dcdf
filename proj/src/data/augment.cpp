#include "pvtadp/data/augment.h"

#include <algorithm>

#include "pvtadp/core/rng.h"

namespace pvtadp::data {

AugmentParams draw_augment(std::uint64_t seed, bool square, const AugmentOptions& opts) {
  Rng rng(seed);
  AugmentParams p;
  // Draw every component unconditionally so toggling an option does not
  // shift the others.
  const bool h = rng.bernoulli(), v = rng.bernoulli();
  const auto turns = static_cast<int>(rng.uniform_int(0, 3));
  const double b = rng.uniform(opts.brightness_lo, opts.brightness_hi);
  if (opts.flips) {
    p.hflip = h;
    p.vflip = v;
  }
  if (opts.rotations) p.quarter_turns = square ? turns : (turns & 2);
  if (opts.brightness) p.brightness = b;
  return p;
}

Tensor<float> apply_geometry(const Tensor<float>& chw, const AugmentParams& p) {
  const std::size_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  const int turns = ((p.quarter_turns % 4) + 4) % 4;
  const bool swap = turns % 2 == 1;
  const std::size_t oh = swap ? W : H, ow = swap ? H : W;
  Tensor<float> out({C, oh, ow});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        // Undo rotation, then flips, to find the source pixel.
        std::size_t sy = y, sx = x;
        switch (turns) {
          case 1: sy = x; sx = W - 1 - y; break;
          case 2: sy = H - 1 - y; sx = W - 1 - x; break;
          case 3: sy = H - 1 - x; sx = y; break;
          default: break;
        }
        if (p.vflip) sy = H - 1 - sy;
        if (p.hflip) sx = W - 1 - sx;
        out[(c * oh + y) * ow + x] = chw[(c * H + sy) * W + sx];
      }
    }
  }
  return out;
}

Sample apply_augment(const Sample& s, const AugmentParams& p) {
  Sample out{apply_geometry(s.image, p), apply_geometry(s.mask, p)};
  if (p.brightness != 1.0) {
    const auto b = static_cast<float>(p.brightness);
    for (std::size_t i = 0; i < out.image.numel(); ++i) out.image[i] = std::clamp(out.image[i] * b, 0.0f, 1.0f);
  }
  return out;
}

Sample augment(const Sample& s, std::uint64_t seed, const AugmentOptions& opts) {
  return apply_augment(s, draw_augment(seed, s.image.dim(1) == s.image.dim(2), opts));
}

}  // namespace pvtadp::data
