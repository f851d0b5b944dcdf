#pragma once

#include <cstdint>

#include "pvtadp/data/dataset.h"

namespace pvtadp::data {

struct AugmentOptions {
  bool flips = true;
  bool rotations = true;  // quarter turns; only half turns for non-square samples
  bool brightness = true;
  double brightness_lo = 0.8;
  double brightness_hi = 1.2;
};

struct AugmentParams {
  bool hflip = false;
  bool vflip = false;
  int quarter_turns = 0;  // counter-clockwise
  double brightness = 1.0;

  bool is_identity() const { return !hflip && !vflip && quarter_turns == 0 && brightness == 1.0; }
};

AugmentParams draw_augment(std::uint64_t seed, bool square, const AugmentOptions& opts = {});

// Geometric part only; applies to any [C,H,W] tensor.
Tensor<float> apply_geometry(const Tensor<float>& chw, const AugmentParams& p);

// Same geometry for image and mask; brightness scales the image only and is
// clamped to [0,1].
Sample apply_augment(const Sample& s, const AugmentParams& p);

Sample augment(const Sample& s, std::uint64_t seed, const AugmentOptions& opts = {});

}  // namespace pvtadp::data
