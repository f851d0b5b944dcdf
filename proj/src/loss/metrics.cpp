#include "pvtadp/loss/metrics.h"

#include <stdexcept>

#include "pvtadp/core/errors.h"

namespace pvtadp::metrics {

namespace {

template <typename T>
void require_binary(const Tensor<T>& t, const char* what) {
  for (T v : t.values()) {
    if (v != T(0) && v != T(1)) throw std::invalid_argument(std::string(what) + " is not a binary mask");
  }
}

double ratio_or(double num, double den, double empty) { return den == 0 ? empty : num / den; }

template <typename F>
double mean_of(const std::vector<ImageMetrics>& v, F field) {
  if (v.empty()) return 0.0;
  double s = 0;
  for (const auto& m : v) s += field(m);
  return s / static_cast<double>(v.size());
}

}  // namespace

template <typename T>
Tensor<T> binarize(const Tensor<T>& probs, double threshold) {
  Tensor<T> out(probs.shape());
  for (std::size_t i = 0; i < probs.numel(); ++i) out[i] = probs[i] >= threshold ? T(1) : T(0);
  return out;
}

template <typename T>
Confusion confusion_counts(const Tensor<T>& pred_bin, const Tensor<T>& target) {
  if (pred_bin.shape() != target.shape()) {
    throw ShapeError("confusion_counts: " + to_string(pred_bin.shape()) + " vs " + to_string(target.shape()));
  }
  require_binary(pred_bin, "prediction");
  require_binary(target, "target");
  Confusion c;
  for (std::size_t i = 0; i < target.numel(); ++i) {
    const bool p = pred_bin[i] == T(1), y = target[i] == T(1);
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double dice_coef(const Confusion& c) {
  return ratio_or(2.0 * c.tp, 2.0 * c.tp + c.fp + c.fn, 1.0);
}

double iou(const Confusion& c) { return ratio_or(c.tp, static_cast<double>(c.tp + c.fp + c.fn), 1.0); }

double precision(const Confusion& c) {
  return ratio_or(c.tp, static_cast<double>(c.tp + c.fp), c.fn == 0 ? 1.0 : 0.0);
}

double recall(const Confusion& c) {
  return ratio_or(c.tp, static_cast<double>(c.tp + c.fn), c.fp == 0 ? 1.0 : 0.0);
}

double precision(const WeightedConfusion& c) { return ratio_or(c.tp, c.tp + c.fp, c.fn == 0 ? 1.0 : 0.0); }

double recall(const WeightedConfusion& c) { return ratio_or(c.tp, c.tp + c.fn, c.fp == 0 ? 1.0 : 0.0); }

double f_beta(double p, double r, double beta) {
  if (!(beta > 0)) throw std::invalid_argument("f_beta: beta must be positive");
  const double b2 = beta * beta;
  return ratio_or((1.0 + b2) * p * r, b2 * p + r, 0.0);
}

template <typename T>
double f_beta(const Tensor<T>& pred_bin, const Tensor<T>& target, double beta,
              const std::optional<Tensor<T>>& weight_map) {
  if (!weight_map) {
    const Confusion c = confusion_counts(pred_bin, target);
    return f_beta(precision(c), recall(c), beta);
  }
  if (weight_map->shape() != target.shape()) {
    throw ShapeError("f_beta: weight map " + to_string(weight_map->shape()) + " vs target " +
                     to_string(target.shape()));
  }
  confusion_counts(pred_bin, target);  // validates shapes and binarity
  WeightedConfusion w;
  for (std::size_t i = 0; i < target.numel(); ++i) {
    const bool p = pred_bin[i] == T(1), y = target[i] == T(1);
    const double wi = (*weight_map)[i];
    if (p && y) w.tp += wi;
    else if (p) w.fp += wi;
    else if (y) w.fn += wi;
  }
  return f_beta(precision(w), recall(w), beta);
}

ImageMetrics image_metrics(const Confusion& c, double f_beta_weighted) {
  ImageMetrics m;
  m.counts = c;
  m.dice = dice_coef(c);
  m.iou = iou(c);
  m.precision = precision(c);
  m.recall = recall(c);
  m.f2 = f_beta(m.precision, m.recall, 2.0);
  m.f_beta_weighted = f_beta_weighted;
  return m;
}

double MetricsReport::mdice() const { return mean_of(per_image, [](const ImageMetrics& m) { return m.dice; }); }
double MetricsReport::miou() const { return mean_of(per_image, [](const ImageMetrics& m) { return m.iou; }); }
double MetricsReport::mrecall() const { return mean_of(per_image, [](const ImageMetrics& m) { return m.recall; }); }
double MetricsReport::mprecision() const {
  return mean_of(per_image, [](const ImageMetrics& m) { return m.precision; });
}
double MetricsReport::mf2() const { return mean_of(per_image, [](const ImageMetrics& m) { return m.f2; }); }
double MetricsReport::mf_beta_weighted() const {
  return mean_of(per_image, [](const ImageMetrics& m) { return m.f_beta_weighted; });
}

void MetricsReport::append(const MetricsReport& other) {
  per_image.insert(per_image.end(), other.per_image.begin(), other.per_image.end());
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json images = nlohmann::ordered_json::array();
  for (const auto& m : per_image) {
    images.push_back({{"dice", m.dice},
                      {"iou", m.iou},
                      {"recall", m.recall},
                      {"precision", m.precision},
                      {"f2", m.f2},
                      {"f_beta_weighted", m.f_beta_weighted},
                      {"tp", m.counts.tp},
                      {"fp", m.counts.fp},
                      {"fn", m.counts.fn},
                      {"tn", m.counts.tn}});
  }
  return {{"miou", miou()},
          {"mdice", mdice()},
          {"recall", mrecall()},
          {"precision", mprecision()},
          {"f2", mf2()},
          {"per_image", std::move(images)}};
}

template <typename T>
MetricsReport evaluate_batch(const Tensor<T>& probs, const Tensor<T>& targets, double threshold,
                             const std::optional<Tensor<T>>& weight_maps) {
  if (probs.shape() != targets.shape()) {
    throw ShapeError("evaluate_batch: " + to_string(probs.shape()) + " vs " + to_string(targets.shape()));
  }
  if (probs.empty() || probs.rank() < 2) throw std::invalid_argument("evaluate_batch: empty batch");
  if (weight_maps && weight_maps->shape() != targets.shape()) {
    throw ShapeError("evaluate_batch: weight maps " + to_string(weight_maps->shape()) + " vs targets " +
                     to_string(targets.shape()));
  }
  const std::size_t B = probs.dim(0);
  Shape image_shape(probs.shape().begin() + 1, probs.shape().end());
  const std::size_t n = numel(image_shape);
  const Tensor<T> bin = binarize(probs, threshold);
  MetricsReport report;
  for (std::size_t b = 0; b < B; ++b) {
    const auto slice = [&](const Tensor<T>& t) {
      return Tensor<T>(image_shape, std::vector<T>(t.data() + b * n, t.data() + (b + 1) * n));
    };
    const Tensor<T> p = slice(bin), y = slice(targets);
    const Confusion c = confusion_counts(p, y);
    std::optional<Tensor<T>> w;
    if (weight_maps) w = slice(*weight_maps);
    report.per_image.push_back(image_metrics(c, f_beta(p, y, 2.0, w)));
  }
  return report;
}

#define PVTADP_INSTANTIATE_METRICS(T)                                                                     \
  template Tensor<T> binarize<T>(const Tensor<T>&, double);                                               \
  template Confusion confusion_counts<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template double f_beta<T>(const Tensor<T>&, const Tensor<T>&, double, const std::optional<Tensor<T>>&); \
  template MetricsReport evaluate_batch<T>(const Tensor<T>&, const Tensor<T>&, double,                    \
                                           const std::optional<Tensor<T>>&);

PVTADP_INSTANTIATE_METRICS(float)
PVTADP_INSTANTIATE_METRICS(double)

}  // namespace pvtadp::metrics
