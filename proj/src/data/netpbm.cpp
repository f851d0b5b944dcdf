#include "pvtadp/data/netpbm.h"

#include <cctype>
#include <fstream>
#include <sstream>

#include "pvtadp/core/errors.h"

namespace pvtadp::data {

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  std::size_t number() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > (1u << 24)) fail("header value too large");
      ++pos_;
    }
    if (pos_ == start) fail("malformed header");
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      fail("missing whitespace before raster");
    }
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& what) const { throw FormatError(origin_ + ": " + what); }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  const std::string& origin_;
  std::size_t pos_ = 2;
};

}  // namespace

Image parse_netpbm(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError(origin + ": not a binary PGM/PPM file (expected P5 or P6)");
  }
  HeaderReader header(bytes, origin);
  Image img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  img.width = header.number();
  img.height = header.number();
  const std::size_t maxval = header.number();
  if (img.width == 0 || img.height == 0) header.fail("zero image dimension");
  if (maxval != 255) header.fail("unsupported maxval " + std::to_string(maxval) + " (only 255)");
  const std::size_t start = header.raster_start();
  const std::size_t need = img.width * img.height * img.channels;
  if (bytes.size() - start < need) header.fail("truncated raster");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                    bytes.begin() + static_cast<std::ptrdiff_t>(start + need));
  return img;
}

Image read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_netpbm(ss.str(), path.string());
}

std::string encode_netpbm(const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw FormatError("netpbm: channels must be 1 or 3");
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw FormatError("netpbm: pixel buffer does not match dimensions");
  }
  std::string out = (image.channels == 1 ? "P5\n" : "P6\n") + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

void write_netpbm(const std::filesystem::path& path, const Image& image) {
  const std::string bytes = encode_netpbm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace pvtadp::data
