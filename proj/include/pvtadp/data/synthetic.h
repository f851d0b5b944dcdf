#pragma once

#include <cstdint>
#include <filesystem>

#include "pvtadp/data/dataset.h"

namespace pvtadp::data {

// Polyp-like stand-in data: 1-3 smooth elliptical blobs of a distinct tone
// with soft edges over a textured, noisy background, plus exact binary masks.
struct SynthSpec {
  std::size_t count = 100;
  std::size_t size = 64;
  std::size_t min_blobs = 1;
  std::size_t max_blobs = 3;
  double radius_min = 0.10;  // fraction of the image size
  double radius_max = 0.22;
  double noise = 0.04;
  std::uint64_t seed = 1;

  void validate() const;
};

// In-memory generation of sample `i`; foreground fraction is in (0, 0.5).
Sample synth_sample(const SynthSpec& spec, std::size_t i);

// Writes <out>/images/sNNNNN.ppm, <out>/masks/sNNNNN.pgm and <out>/index.json.
DatasetIndex generate_synthetic(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace pvtadp::data
