#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pvtadp/data/augment.h"
#include "pvtadp/data/dataset.h"

namespace pvtadp::data {

template <typename T>
struct Batch {
  Tensor<T> images;  // [B,3,H,W]
  Tensor<T> masks;   // [B,1,H,W]
  std::vector<std::size_t> indices;
};

// Partitions [0, n) into batches of `batch_size` (the last one may be
// partial). Epoch e is shuffled with a seed derived from (seed, e).
class Batcher {
 public:
  Batcher(std::size_t n, std::size_t batch_size, std::uint64_t seed, bool shuffle = true);

  std::vector<std::vector<std::size_t>> epoch(std::size_t e) const;
  std::size_t batches_per_epoch() const { return (n_ + batch_size_ - 1) / batch_size_; }

 private:
  std::size_t n_, batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
};

// Stacks samples into a batch; when `augment_seed` is set, sample k of the
// batch is augmented with a seed derived from it.
template <typename T>
Batch<T> make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
                    std::optional<std::uint64_t> augment_seed = std::nullopt, const AugmentOptions& opts = {});

extern template Batch<float> make_batch<float>(const std::vector<Sample>&, const std::vector<std::size_t>&,
                                               std::optional<std::uint64_t>, const AugmentOptions&);
extern template Batch<double> make_batch<double>(const std::vector<Sample>&, const std::vector<std::size_t>&,
                                                 std::optional<std::uint64_t>, const AugmentOptions&);

}  // namespace pvtadp::data
