#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pvtadp::data {

// 8-bit raster, interleaved channels (1 = gray, 3 = RGB), row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
};

// Binary P5 (gray) / P6 (RGB) with maxval 255; '#' comments allowed in the header.
Image read_netpbm(const std::filesystem::path& path);
Image parse_netpbm(const std::string& bytes, const std::string& origin = "<memory>");

// P5 for one channel, P6 for three.
void write_netpbm(const std::filesystem::path& path, const Image& image);
std::string encode_netpbm(const Image& image);

}  // namespace pvtadp::data
