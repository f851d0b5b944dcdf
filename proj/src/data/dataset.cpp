#include "pvtadp/data/dataset.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "pvtadp/core/errors.h"
#include "pvtadp/core/rng.h"

namespace pvtadp::data {

namespace fs = std::filesystem;

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + name + "' (expected train, val or test)");
}

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

std::vector<std::size_t> DatasetIndex::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == s) out.push_back(i);
  }
  return out;
}

DatasetIndex scan_dataset(const fs::path& root) {
  const fs::path images = root / "images", masks = root / "masks";
  if (!fs::is_directory(images) || !fs::is_directory(masks)) {
    throw IoError(root.string() + ": expected images/ and masks/ subdirectories");
  }
  std::map<std::string, fs::path> image_by_stem, mask_by_stem;
  for (const auto& e : fs::directory_iterator(images)) {
    const std::string ext = e.path().extension().string();
    if (!e.is_regular_file() || (ext != ".ppm" && ext != ".pgm")) continue;
    const std::string stem = e.path().stem().string();
    if (!image_by_stem.emplace(stem, e.path()).second) {
      throw IoError(root.string() + ": duplicate image stem '" + stem + "'");
    }
  }
  for (const auto& e : fs::directory_iterator(masks)) {
    if (!e.is_regular_file() || e.path().extension() != ".pgm") continue;
    mask_by_stem.emplace(e.path().stem().string(), e.path());
  }
  DatasetIndex index;
  index.root = root;
  for (const auto& [stem, img] : image_by_stem) {
    auto it = mask_by_stem.find(stem);
    if (it == mask_by_stem.end()) throw IoError(root.string() + ": image '" + stem + "' has no mask");
    index.pairs.push_back({stem, img, it->second});
  }
  for (const auto& [stem, _] : mask_by_stem) {
    if (!image_by_stem.count(stem)) throw IoError(root.string() + ": mask '" + stem + "' has no image");
  }
  if (index.pairs.empty()) throw IoError(root.string() + ": no image/mask pairs found");
  index.splits.assign(index.pairs.size(), Split::kTrain);
  return index;
}

void assign_splits(DatasetIndex& index, const SplitFractions& f, std::uint64_t seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must be non-negative and sum to 1");
  }
  const std::size_t n = index.pairs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
    std::swap(order[i - 1], order[j]);
  }
  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.train)));
  const auto n_val =
      std::min(n - n_train, static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.val)));
  index.splits.assign(n, Split::kTest);
  for (std::size_t k = 0; k < n; ++k) {
    index.splits[order[k]] = k < n_train ? Split::kTrain : (k < n_train + n_val ? Split::kVal : Split::kTest);
  }
}

Tensor<float> image_to_tensor(const Image& img) {
  Tensor<float> t({3, img.height, img.width});
  const std::size_t hw = img.height * img.width;
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::uint8_t v = img.pixels[p * img.channels + (img.channels == 1 ? 0 : c)];
      t[c * hw + p] = static_cast<float>(v) / 255.0f;
    }
  }
  return t;
}

Tensor<float> mask_to_tensor(const Image& img) {
  Tensor<float> t({1, img.height, img.width});
  for (std::size_t p = 0; p < img.height * img.width; ++p) {
    t[p] = img.pixels[p * img.channels] >= 128 ? 1.0f : 0.0f;
  }
  return t;
}

Image tensor_to_image(const Tensor<float>& chw) {
  if (chw.rank() != 3 || (chw.dim(0) != 1 && chw.dim(0) != 3)) {
    throw ShapeError("tensor_to_image: expected [1|3,H,W], got " + to_string(chw.shape()));
  }
  Image img{chw.dim(2), chw.dim(1), chw.dim(0), {}};
  const std::size_t hw = img.width * img.height;
  img.pixels.resize(hw * img.channels);
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t c = 0; c < img.channels; ++c) {
      const float v = std::clamp(chw[c * hw + p], 0.0f, 1.0f);
      img.pixels[p * img.channels + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  }
  return img;
}

Image mask_to_image(const Tensor<float>& mask) {
  if (mask.rank() != 3 || mask.dim(0) != 1) throw ShapeError("mask_to_image: expected [1,H,W]");
  Image img{mask.dim(2), mask.dim(1), 1, std::vector<std::uint8_t>(mask.numel())};
  for (std::size_t i = 0; i < mask.numel(); ++i) img.pixels[i] = mask[i] >= 0.5f ? 255 : 0;
  return img;
}

Tensor<float> resize_bilinear(const Tensor<float>& chw, std::size_t out_h, std::size_t out_w) {
  const std::size_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  if (H == out_h && W == out_w) return chw;
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<std::pair<std::size_t, double>> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(src);
      t[o] = {i0, src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto ty = taps(H, out_h), tx = taps(W, out_w);
  Tensor<float> out({C, out_h, out_w});
  for (std::size_t c = 0; c < C; ++c) {
    const float* src = chw.data() + c * H * W;
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto [y0, fy] = ty[y];
      const std::size_t y1 = std::min(y0 + 1, H - 1);
      for (std::size_t x = 0; x < out_w; ++x) {
        const auto [x0, fx] = tx[x];
        const std::size_t x1 = std::min(x0 + 1, W - 1);
        const double top = (1 - fx) * src[y0 * W + x0] + fx * src[y0 * W + x1];
        const double bot = (1 - fx) * src[y1 * W + x0] + fx * src[y1 * W + x1];
        out[(c * out_h + y) * out_w + x] = static_cast<float>((1 - fy) * top + fy * bot);
      }
    }
  }
  return out;
}

Tensor<float> resize_nearest(const Tensor<float>& chw, std::size_t out_h, std::size_t out_w) {
  const std::size_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  if (H == out_h && W == out_w) return chw;
  Tensor<float> out({C, out_h, out_w});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      const std::size_t sy = std::min(H - 1, (2 * y + 1) * H / (2 * out_h));
      for (std::size_t x = 0; x < out_w; ++x) {
        const std::size_t sx = std::min(W - 1, (2 * x + 1) * W / (2 * out_w));
        out[(c * out_h + y) * out_w + x] = chw[(c * H + sy) * W + sx];
      }
    }
  }
  return out;
}

Sample load_sample(const SamplePaths& paths, std::size_t target_h, std::size_t target_w) {
  const Image img = read_netpbm(paths.image);
  const Image msk = read_netpbm(paths.mask);
  if (msk.channels != 1) throw FormatError(paths.mask.string() + ": mask must be a PGM (P5) file");
  Sample s{image_to_tensor(img), mask_to_tensor(msk)};
  const std::size_t h = target_h ? target_h : img.height;
  const std::size_t w = target_w ? target_w : img.width;
  if (!target_h && (msk.height != img.height || msk.width != img.width)) {
    throw FormatError(paths.stem + ": image and mask sizes differ");
  }
  s.image = resize_bilinear(s.image, h, w);
  s.mask = resize_nearest(s.mask, h, w);
  if (s.image.shape() != Shape{3, h, w} || s.mask.shape() != Shape{1, h, w}) {
    throw ShapeError(paths.stem + ": unexpected size after resize");
  }
  return s;
}

std::vector<Sample> load_split(const DatasetIndex& index, Split split, std::size_t target_h, std::size_t target_w) {
  std::vector<Sample> out;
  for (std::size_t i : index.indices(split)) out.push_back(load_sample(index.pairs[i], target_h, target_w));
  return out;
}

}  // namespace pvtadp::data
