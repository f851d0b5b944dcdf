#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pvtadp/core/tensor.h"

namespace pvtadp::metrics {

struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// Weighted counterpart used by the optional per-pixel weight map.
struct WeightedConfusion {
  double tp = 0, fp = 0, fn = 0;
};

// 1 where prob >= threshold, else 0.
template <typename T>
Tensor<T> binarize(const Tensor<T>& probs, double threshold = 0.5);

// Both inputs must hold only 0 and 1 and have equal shapes.
template <typename T>
Confusion confusion_counts(const Tensor<T>& pred_bin, const Tensor<T>& target);

// Conventions for empty denominators: an empty prediction on an empty target
// is perfect (dice = iou = precision = recall = 1); otherwise an empty
// denominator scores 0.
double dice_coef(const Confusion& c);
double iou(const Confusion& c);
double precision(const Confusion& c);
double recall(const Confusion& c);
double precision(const WeightedConfusion& c);
double recall(const WeightedConfusion& c);
// (1 + b^2) P R / (b^2 P + R); 0 when P = R = 0. Throws for beta <= 0.
double f_beta(double precision, double recall, double beta);

template <typename T>
double f_beta(const Tensor<T>& pred_bin, const Tensor<T>& target, double beta,
              const std::optional<Tensor<T>>& weight_map = std::nullopt);

struct ImageMetrics {
  double dice = 0, iou = 0, recall = 0, precision = 0, f2 = 0, f_beta_weighted = 0;
  Confusion counts;
};

ImageMetrics image_metrics(const Confusion& c, double f_beta_weighted);

struct MetricsReport {
  std::vector<ImageMetrics> per_image;

  // Arithmetic means over images.
  double mdice() const;
  double miou() const;
  double mrecall() const;
  double mprecision() const;
  double mf2() const;
  double mf_beta_weighted() const;

  void append(const MetricsReport& other);
  nlohmann::ordered_json to_json() const;
};

// probs/targets [B,1,H,W] (or any [B,...]); per-image metrics at the given
// threshold. weight_maps, when given, has the targets' shape.
template <typename T>
MetricsReport evaluate_batch(const Tensor<T>& probs, const Tensor<T>& targets, double threshold = 0.5,
                             const std::optional<Tensor<T>>& weight_maps = std::nullopt);

}  // namespace pvtadp::metrics
