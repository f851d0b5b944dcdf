#include "pvtadp/data/synthetic.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"
#include "pvtadp/core/errors.h"
#include "pvtadp/core/rng.h"

namespace pvtadp::data {

namespace fs = std::filesystem;

void SynthSpec::validate() const {
  if (count == 0) throw std::invalid_argument("synthetic: count must be positive");
  if (size == 0 || size % 16 != 0) throw std::invalid_argument("synthetic: size must be a positive multiple of 16");
  if (min_blobs == 0 || min_blobs > max_blobs) throw std::invalid_argument("synthetic: invalid blob count range");
  if (!(radius_min > 0) || radius_min > radius_max || radius_max >= 0.5) {
    throw std::invalid_argument("synthetic: radii must satisfy 0 < min <= max < 0.5 (fractions of size)");
  }
  if (noise < 0) throw std::invalid_argument("synthetic: noise must be non-negative");
}

namespace {

struct Blob {
  double cx, cy, rx, ry, cos_t, sin_t;
  double color[3];

  // Normalised elliptical radius; <= 1 inside.
  double radius_at(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = (dx * cos_t + dy * sin_t) / rx;
    const double v = (-dx * sin_t + dy * cos_t) / ry;
    return std::sqrt(u * u + v * v);
  }
};

struct Wave {
  double fx, fy, phase, amp;
};

constexpr std::size_t kMaxAttempts = 1000;

}  // namespace

Sample synth_sample(const SynthSpec& spec, std::size_t i) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, i));
  const std::size_t S = spec.size;
  const double sz = static_cast<double>(S);

  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const double base[3] = {rng.uniform(0.45, 0.6), rng.uniform(0.22, 0.32), rng.uniform(0.18, 0.28)};
    Wave waves[3];
    for (auto& w : waves) {
      const double freq = rng.uniform(1.0, 4.0) * 2.0 * std::numbers::pi / sz;
      const double dir = rng.uniform(0.0, std::numbers::pi);
      w = {freq * std::cos(dir), freq * std::sin(dir), rng.uniform(0.0, 2.0 * std::numbers::pi),
           rng.uniform(0.02, 0.06)};
    }
    std::vector<Blob> blobs(static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(spec.min_blobs), static_cast<std::int64_t>(spec.max_blobs))));
    for (auto& b : blobs) {
      b.rx = rng.uniform(spec.radius_min, spec.radius_max) * sz;
      b.ry = rng.uniform(spec.radius_min, spec.radius_max) * sz;
      const double margin = std::max(b.rx, b.ry) * 0.6;
      b.cx = rng.uniform(margin, sz - margin);
      b.cy = rng.uniform(margin, sz - margin);
      const double t = rng.uniform(0.0, std::numbers::pi);
      b.cos_t = std::cos(t);
      b.sin_t = std::sin(t);
      b.color[0] = rng.uniform(0.8, 0.95);
      b.color[1] = rng.uniform(0.5, 0.65);
      b.color[2] = rng.uniform(0.4, 0.55);
    }

    Image img{S, S, 3, std::vector<std::uint8_t>(S * S * 3)};
    Image mask{S, S, 1, std::vector<std::uint8_t>(S * S)};
    std::size_t fg = 0;
    for (std::size_t y = 0; y < S; ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        double tex = 0;
        for (const auto& w : waves) tex += w.amp * std::sin(w.fx * px + w.fy * py + w.phase);
        double rgb[3] = {base[0] + tex, base[1] + tex, base[2] + tex};
        bool inside = false;
        for (const auto& b : blobs) {
          const double r = b.radius_at(px, py);
          inside |= r <= 1.0;
          // Soft edge about one pixel wide; alpha is 0.5 on the boundary.
          const double alpha = 1.0 / (1.0 + std::exp(-(1.0 - r) * std::min(b.rx, b.ry)));
          const double shade = 1.0 - 0.15 * std::min(r, 1.0) * std::min(r, 1.0);
          for (int c = 0; c < 3; ++c) rgb[c] = (1 - alpha) * rgb[c] + alpha * b.color[c] * shade;
        }
        for (int c = 0; c < 3; ++c) {
          const double v = std::clamp(rgb[c] + spec.noise * rng.uniform(-1.0, 1.0), 0.0, 1.0);
          img.pixels[(y * S + x) * 3 + static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(std::lround(v * 255));
        }
        mask.pixels[y * S + x] = inside ? 255 : 0;
        fg += inside;
      }
    }
    if (fg == 0 || 2 * fg >= S * S) continue;
    return {image_to_tensor(img), mask_to_tensor(mask)};
  }
  throw std::runtime_error("synthetic: could not satisfy the foreground constraint");
}

DatasetIndex generate_synthetic(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (!ec) fs::create_directories(out_dir / "masks", ec);
  if (ec) throw IoError("cannot create dataset directories under " + out_dir.string() + ": " + ec.message());

  DatasetIndex index;
  index.root = out_dir;
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < spec.count; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "s%05zu", i);
    const Sample s = synth_sample(spec, i);
    const fs::path img = out_dir / "images" / (std::string(stem) + ".ppm");
    const fs::path msk = out_dir / "masks" / (std::string(stem) + ".pgm");
    write_netpbm(img, tensor_to_image(s.image));
    write_netpbm(msk, mask_to_image(s.mask));
    index.pairs.push_back({stem, img, msk});
    pairs.push_back({{"stem", stem},
                     {"image", "images/" + std::string(stem) + ".ppm"},
                     {"mask", "masks/" + std::string(stem) + ".pgm"}});
  }
  index.splits.assign(index.pairs.size(), Split::kTrain);

  const nlohmann::ordered_json manifest{{"generator", "synthetic-blobs"},
                                        {"count", spec.count},
                                        {"size", spec.size},
                                        {"min_blobs", spec.min_blobs},
                                        {"max_blobs", spec.max_blobs},
                                        {"radius_min", spec.radius_min},
                                        {"radius_max", spec.radius_max},
                                        {"noise", spec.noise},
                                        {"seed", spec.seed},
                                        {"pairs", pairs}};
  std::ofstream out(out_dir / "index.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (out_dir / "index.json").string());
  out << manifest.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + (out_dir / "index.json").string());
  return index;
}

}  // namespace pvtadp::data
