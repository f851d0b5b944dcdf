#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pvtadp/core/tensor.h"
#include "pvtadp/data/netpbm.h"

namespace pvtadp::data {

enum class Split { kTrain, kVal, kTest };

Split parse_split(const std::string& name);
std::string split_name(Split s);

struct SamplePaths {
  std::string stem;
  std::filesystem::path image;
  std::filesystem::path mask;
};

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Image/mask pairs of a dataset directory laid out as
//   <root>/images/<stem>.ppm|.pgm   <root>/masks/<stem>.pgm
// sorted by stem, with a seeded train/val/test assignment.
struct DatasetIndex {
  std::filesystem::path root;
  std::vector<SamplePaths> pairs;
  std::vector<Split> splits;  // parallel to pairs

  std::vector<std::size_t> indices(Split s) const;
};

// Throws IoError if the layout is broken (missing directory, image without
// mask or mask without image).
DatasetIndex scan_dataset(const std::filesystem::path& root);

// Shuffles a copy of [0, n) with `seed`, then hands out round(n*train) to
// train, round(n*val) to val and the rest to test.
void assign_splits(DatasetIndex& index, const SplitFractions& fractions, std::uint64_t seed);

// image [3,H,W] in [0,1], mask [1,H,W] in {0,1}.
struct Sample {
  Tensor<float> image;
  Tensor<float> mask;
};

// Grayscale images are replicated to 3 channels, masks are binarised at
// pixel >= 128. target_h/target_w of 0 keep the native size; otherwise the
// image is resized bilinearly and the mask by nearest neighbour.
Sample load_sample(const SamplePaths& paths, std::size_t target_h = 0, std::size_t target_w = 0);

Tensor<float> image_to_tensor(const Image& img);   // [3,H,W]
Tensor<float> mask_to_tensor(const Image& img);    // [1,H,W], >= 128 -> 1
Image tensor_to_image(const Tensor<float>& chw);   // [C,H,W] in [0,1], C = 1 or 3
Image mask_to_image(const Tensor<float>& mask);    // {0,1} -> {0,255}

Tensor<float> resize_bilinear(const Tensor<float>& chw, std::size_t out_h, std::size_t out_w);
Tensor<float> resize_nearest(const Tensor<float>& chw, std::size_t out_h, std::size_t out_w);

// Decodes every pair of a split into memory.
std::vector<Sample> load_split(const DatasetIndex& index, Split split, std::size_t target_h = 0,
                               std::size_t target_w = 0);

}  // namespace pvtadp::data
