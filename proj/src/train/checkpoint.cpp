#include "pvtadp/train/checkpoint.h"

#include <bit>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>

#include "pvtadp/core/errors.h"

namespace pvtadp::train {

namespace {

constexpr char kMagic[4] = {'P', 'V', 'T', 'A'};
constexpr std::size_t kMaxRank = 8;

template <typename U>
void put(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const CheckpointTensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  if (ckpt.config.size() > std::numeric_limits<std::uint32_t>::max()) throw FormatError("checkpoint config too large");
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.config.size()));
  out += ckpt.config;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) throw FormatError("tensor name too long: " + t.name);
    if (t.shape.size() > kMaxRank) throw FormatError("tensor rank too large: " + t.name);
    if (numel(t.shape) != t.values.size()) throw FormatError("tensor value count does not match shape: " + t.name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (std::size_t d : t.shape) {
      if (d > std::numeric_limits<std::uint32_t>::max()) throw FormatError("tensor dim too large: " + t.name);
      put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    if (t.dtype == DType::kF32) {
      for (double v : t.values) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      for (double v : t.values) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4, "magic") != std::string_view(kMagic, 4)) throw FormatError("not a checkpoint: bad magic bytes");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto config_len = r.get<std::uint32_t>("config length");
  ckpt.config = std::string(r.take(config_len, "config"));
  const auto count = r.get<std::uint32_t>("tensor count");
  std::set<std::string, std::less<>> seen;
  for (std::uint32_t k = 0; k < count; ++k) {
    CheckpointTensor t;
    const auto name_len = r.get<std::uint16_t>("tensor name length");
    t.name = std::string(r.take(name_len, "tensor name"));
    if (!seen.insert(t.name).second) throw FormatError("duplicate tensor in checkpoint: " + t.name);
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype > 1) throw FormatError("unknown dtype tag " + std::to_string(dtype) + " for " + t.name);
    t.dtype = static_cast<DType>(dtype);
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank > kMaxRank) throw FormatError("tensor rank too large: " + t.name);
    std::size_t n = 1;
    const std::size_t width = t.dtype == DType::kF32 ? 4 : 8;
    for (std::uint8_t d = 0; d < rank; ++d) {
      t.shape.push_back(r.get<std::uint32_t>("dims"));
      n *= t.shape.back();
      if (n > r.remaining() / width + 1) throw FormatError("checkpoint truncated in tensor " + t.name);
    }
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      t.values[i] = t.dtype == DType::kF32 ? static_cast<double>(std::bit_cast<float>(r.get<std::uint32_t>("values")))
                                           : std::bit_cast<double>(r.get<std::uint64_t>("values"));
    }
    ckpt.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint tensors");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace pvtadp::train
