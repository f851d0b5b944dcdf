#include "pvtadp/data/batcher.h"

#include <numeric>
#include <stdexcept>

#include "pvtadp/core/rng.h"

namespace pvtadp::data {

Batcher::Batcher(std::size_t n, std::size_t batch_size, std::uint64_t seed, bool shuffle)
    : n_(n), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
  if (n == 0) throw std::invalid_argument("batcher: empty index");
  if (batch_size == 0) throw std::invalid_argument("batcher: batch_size must be >= 1");
}

std::vector<std::vector<std::size_t>> Batcher::epoch(std::size_t e) const {
  std::vector<std::size_t> order(n_);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_) {
    Rng rng(mix_seed(seed_, e));
    for (std::size_t i = n_; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(order[i - 1], order[j]);
    }
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n_; start += batch_size_) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n_, start + batch_size_)));
  }
  return out;
}

template <typename T>
Batch<T> make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
                    std::optional<std::uint64_t> augment_seed, const AugmentOptions& opts) {
  if (indices.empty()) throw std::invalid_argument("make_batch: no indices");
  const Shape& is = samples.at(indices[0]).image.shape();
  const Shape& ms = samples.at(indices[0]).mask.shape();
  const std::size_t B = indices.size();
  Batch<T> b{Tensor<T>({B, is[0], is[1], is[2]}), Tensor<T>({B, ms[0], ms[1], ms[2]}), indices};
  for (std::size_t k = 0; k < B; ++k) {
    const Sample& src = samples.at(indices[k]);
    const Sample s = augment_seed ? augment(src, mix_seed(*augment_seed, k), opts) : src;
    if (s.image.shape() != is || s.mask.shape() != ms) {
      throw ShapeError("make_batch: sample " + std::to_string(indices[k]) + " has a different size");
    }
    std::copy(s.image.data(), s.image.data() + s.image.numel(), b.images.data() + k * s.image.numel());
    std::copy(s.mask.data(), s.mask.data() + s.mask.numel(), b.masks.data() + k * s.mask.numel());
  }
  return b;
}

template Batch<float> make_batch<float>(const std::vector<Sample>&, const std::vector<std::size_t>&,
                                        std::optional<std::uint64_t>, const AugmentOptions&);
template Batch<double> make_batch<double>(const std::vector<Sample>&, const std::vector<std::size_t>&,
                                          std::optional<std::uint64_t>, const AugmentOptions&);

}  // namespace pvtadp::data
