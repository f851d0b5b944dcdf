#include <gtest/gtest.h>

#include <cmath>

#include "pvtadp/loss/losses.h"
#include "pvtadp/loss/metrics.h"
#include "test_util.h"

namespace pvtadp {
namespace {

using testing::random_tensor;

Tensor<double> vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor<double>({n}, std::move(v));
}

double loss_value(const Var<double>& v) { return v.value().item(); }

TEST(BceLoss, AnalyticValues) {
  Tape<double> tape;
  const auto target = vec({1, 0, 1, 0});
  EXPECT_NEAR(loss_value(loss::bce_loss(tape.constant(Tensor<double>({4}, 0.5)), target)), std::log(2.0), 1e-12);
  const double clamped = loss_value(loss::bce_loss(tape.constant(target), target));
  EXPECT_GT(clamped, 0.0);
  EXPECT_NEAR(clamped, -std::log(1 - 1e-7), 1e-12);
  EXPECT_THROW(loss::bce_loss(tape.constant(Tensor<double>({3}, 0.5)), target), ShapeError);
}

TEST(JaccardLoss, HandCasesAndPerfectOverlap) {
  Tape<double> tape;
  EXPECT_NEAR(loss_value(loss::jaccard_loss(tape.constant(vec({0.5, 0.5})), vec({1, 0}), 1.0)), 0.4, 1e-9);
  const auto y = vec({1, 1, 0, 1, 0});
  EXPECT_EQ(loss_value(loss::jaccard_loss(tape.constant(y), y, 1.0)), 0.0);
  EXPECT_EQ(loss_value(loss::jaccard_loss(tape.constant(vec({0, 0, 0})), vec({0, 0, 0}), 1.0)), 0.0);
}

TEST(DiceLoss, HandCasesAndPerfectOverlap) {
  Tape<double> tape;
  EXPECT_NEAR(loss_value(loss::dice_loss(tape.constant(vec({1, 0, 0, 0})), vec({1, 1, 0, 0}), 1.0)), 0.25, 1e-9);
  const auto y = vec({1, 1, 0, 1, 0});
  EXPECT_EQ(loss_value(loss::dice_loss(tape.constant(y), y, 1.0)), 0.0);
  // Disjoint masks approach 1 as epsilon vanishes.
  const double d = loss_value(loss::dice_loss(tape.constant(vec({1, 1, 0, 0})), vec({0, 0, 1, 1}), 1e-9));
  EXPECT_NEAR(d, 1.0, 1e-9);
}

TEST(TotalLoss, EqualsWeightedComponentSum) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_tensor({2, 1, 6, 6}, 100 + trial, 0.01, 0.99);
    auto y = random_tensor({2, 1, 6, 6}, 200 + trial, 0, 1);
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = y[i] < 0.3 ? 1 : 0;
    loss::LossConfig cfg;
    if (trial % 2) cfg = {0.5, 2.0, 0.3, 1.5, 0.7};
    Tape<double> tape;
    const auto t = loss::total_loss(tape.constant(p), y, cfg);
    const double sum = cfg.w_bce * loss_value(t.bce) + cfg.w_dice * loss_value(t.dice) +
                       cfg.w_jaccard * loss_value(t.jaccard);
    EXPECT_NEAR(loss_value(t.total), sum, 1e-7);
  }
}

TEST(TotalLoss, PerfectPredictionLeavesOnlyTheClampFloor) {
  const auto y = vec({1, 0, 0, 1, 1, 0});
  Tape<double> tape;
  const auto t = loss::total_loss(tape.constant(y), y, {});
  EXPECT_EQ(loss_value(t.dice), 0.0);
  EXPECT_EQ(loss_value(t.jaccard), 0.0);
  EXPECT_NEAR(loss_value(t.total), loss_value(t.bce), 0.0);
  EXPECT_LT(loss_value(t.total), 1e-6);
}

TEST(TotalLoss, DecreasesAlongInterpolationTowardTarget) {
  auto y = random_tensor({1, 1, 8, 8}, 7, 0, 1);
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = y[i] < 0.4 ? 1 : 0;
  const auto start = random_tensor({1, 1, 8, 8}, 8, 0.05, 0.95);
  double prev = 1e300;
  for (int k = 0; k <= 10; ++k) {
    const double a = k / 10.0;
    Tensor<double> p(start.shape());
    for (std::size_t i = 0; i < p.numel(); ++i) p[i] = (1 - a) * start[i] + a * y[i];
    Tape<double> tape;
    const double v = loss_value(loss::total_loss(tape.constant(p), y, {}).total);
    EXPECT_LT(v, prev) << "a=" << a;
    prev = v;
  }
}

TEST(LossConfig, Validation) {
  EXPECT_THROW((loss::LossConfig{0.0, 1, 1, 1, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((loss::LossConfig{1, 0.0, 1, 1, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((loss::LossConfig{1, 1, -1, 1, 1}.validate()), std::invalid_argument);
}

// Straight pixel counting, independent of the library.
struct Counts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Counts count_pixels(const Tensor<double>& p, const Tensor<double>& y) {
  Counts c;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    if (p[i] == 1 && y[i] == 1) ++c.tp;
    if (p[i] == 1 && y[i] == 0) ++c.fp;
    if (p[i] == 0 && y[i] == 1) ++c.fn;
    if (p[i] == 0 && y[i] == 0) ++c.tn;
  }
  return c;
}

Tensor<double> random_mask(Rng& rng) {
  const double density = rng.uniform(0.0, 1.0) < 0.05 ? 0.0 : rng.uniform(0.0, 0.6);
  Tensor<double> m({16, 16});
  for (std::size_t i = 0; i < m.numel(); ++i) m[i] = rng.uniform() < density ? 1 : 0;
  return m;
}

TEST(Metrics, MatchBruteForceOracleOnRandomMasks) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = random_mask(rng), y = random_mask(rng);
    const Counts o = count_pixels(p, y);
    const auto c = metrics::confusion_counts(p, y);
    ASSERT_EQ(c.tp, o.tp);
    ASSERT_EQ(c.fp, o.fp);
    ASSERT_EQ(c.fn, o.fn);
    ASSERT_EQ(c.tn, o.tn);
    const double tp = static_cast<double>(o.tp), fp = static_cast<double>(o.fp), fn = static_cast<double>(o.fn);
    const bool empty = o.tp + o.fp + o.fn == 0;
    EXPECT_EQ(metrics::dice_coef(c), empty ? 1.0 : 2 * tp / (2 * tp + fp + fn));
    EXPECT_EQ(metrics::iou(c), empty ? 1.0 : tp / (tp + fp + fn));
    if (o.tp + o.fp > 0) EXPECT_EQ(metrics::precision(c), tp / (tp + fp));
    if (o.tp + o.fn > 0) EXPECT_EQ(metrics::recall(c), tp / (tp + fn));
    for (double m : {metrics::dice_coef(c), metrics::iou(c), metrics::precision(c), metrics::recall(c),
                     metrics::f_beta(p, y, 2.0)}) {
      EXPECT_GE(m, 0.0);
      EXPECT_LE(m, 1.0);
    }
    const double j = metrics::iou(c);
    EXPECT_NEAR(metrics::dice_coef(c), 2 * j / (1 + j), 1e-9);
  }
}

TEST(Metrics, HandCases) {
  const auto y = vec({1, 1, 0, 0}), p = vec({1, 0, 1, 0});
  const auto c = metrics::confusion_counts(p, y);
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.tn, 1u);
  EXPECT_DOUBLE_EQ(metrics::dice_coef(c), 0.5);
  EXPECT_DOUBLE_EQ(metrics::iou(c), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(metrics::f_beta(p, y, 2.0), 0.5);
  const auto same = metrics::confusion_counts(y, y);
  EXPECT_EQ(metrics::dice_coef(same), 1.0);
  EXPECT_EQ(metrics::iou(same), 1.0);
  for (double beta : {0.5, 1.0, 2.0, 3.0}) EXPECT_DOUBLE_EQ(metrics::f_beta(y, y, beta), 1.0);
  for (double beta : {0.5, 2.0}) EXPECT_NEAR(metrics::f_beta(0.3, 0.3, beta), 0.3, 1e-12);
}

TEST(Metrics, EmptyMasksAndZeroDenominators) {
  const auto none = vec({0, 0, 0}), some = vec({0, 1, 0});
  const auto empty = metrics::confusion_counts(none, none);
  EXPECT_EQ(metrics::dice_coef(empty), 1.0);
  EXPECT_EQ(metrics::iou(empty), 1.0);
  EXPECT_EQ(metrics::precision(empty), 1.0);
  EXPECT_EQ(metrics::recall(empty), 1.0);
  const auto missed = metrics::confusion_counts(none, some);  // FN only
  EXPECT_EQ(metrics::precision(missed), 0.0);
  EXPECT_EQ(metrics::recall(missed), 0.0);
  EXPECT_EQ(metrics::f_beta(none, some, 2.0), 0.0);
  const auto spurious = metrics::confusion_counts(some, none);  // FP only
  EXPECT_EQ(metrics::precision(spurious), 0.0);
  EXPECT_EQ(metrics::recall(spurious), 0.0);
}

TEST(Metrics, RejectsNonBinaryAndBadBeta) {
  EXPECT_THROW(metrics::confusion_counts(vec({0.5, 1}), vec({0, 1})), std::invalid_argument);
  EXPECT_THROW(metrics::confusion_counts(vec({0, 1}), vec({0, 1, 1})), ShapeError);
  EXPECT_THROW(metrics::f_beta(vec({0, 1}), vec({0, 1}), 0.0), std::invalid_argument);
  EXPECT_THROW(metrics::f_beta(vec({0, 1}), vec({0, 1}), -1.0), std::invalid_argument);
}

TEST(Metrics, UniformWeightMapEqualsStandardFBeta) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_mask(rng), y = random_mask(rng);
    const std::optional<Tensor<double>> w = Tensor<double>(p.shape(), 1.0);
    EXPECT_NEAR(metrics::f_beta(p, y, 2.0, w), metrics::f_beta(p, y, 2.0), 1e-12);
  }
}

TEST(Metrics, WeightMapReweightsErrors) {
  const auto y = vec({1, 1, 0, 0}), p = vec({1, 0, 1, 0});
  // FP pixel weighted 3: P = 1/4, R = 1/2.
  const std::optional<Tensor<double>> w = vec({1, 1, 3, 1});
  const double P = 0.25, R = 0.5;
  EXPECT_NEAR(metrics::f_beta(p, y, 1.0, w), 2 * P * R / (P + R), 1e-12);
}

TEST(EvaluateBatch, MeansOverImages) {
  Tensor<double> probs({2, 1, 2, 2}, std::vector<double>{0.9, 0.1, 0.2, 0.7, 0.6, 0.6, 0.1, 0.1});
  Tensor<double> masks({2, 1, 2, 2}, std::vector<double>{1, 0, 0, 1, 1, 0, 0, 0});
  const auto r = metrics::evaluate_batch(probs, masks);
  ASSERT_EQ(r.per_image.size(), 2u);
  EXPECT_EQ(r.per_image[0].dice, 1.0);
  EXPECT_DOUBLE_EQ(r.per_image[1].dice, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.mdice(), (1.0 + 2.0 / 3.0) / 2);
  // Flat recomputation.
  double dsum = 0, isum = 0;
  for (std::size_t b = 0; b < 2; ++b) {
    Counts c;
    for (std::size_t i = 0; i < 4; ++i) {
      const bool p = probs[b * 4 + i] >= 0.5, y = masks[b * 4 + i] == 1;
      c.tp += p && y;
      c.fp += p && !y;
      c.fn += !p && y;
    }
    dsum += 2.0 * c.tp / (2.0 * c.tp + c.fp + c.fn);
    isum += double(c.tp) / double(c.tp + c.fp + c.fn);
  }
  EXPECT_NEAR(r.mdice(), dsum / 2, 1e-9);
  EXPECT_NEAR(r.miou(), isum / 2, 1e-9);
}

TEST(EvaluateBatch, DiceOneAndHalfAverageToThreeQuarters) {
  Tensor<double> probs({2, 1, 1, 4}, std::vector<double>{1, 1, 0, 0, 1, 0, 1, 0});
  Tensor<double> masks({2, 1, 1, 4}, std::vector<double>{1, 1, 0, 0, 1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(metrics::evaluate_batch(probs, masks).mdice(), 0.75);
}

TEST(EvaluateBatch, PerfectPredictionsScoreOne) {
  Tensor<double> masks({3, 1, 2, 2}, std::vector<double>{1, 0, 0, 1, 0, 0, 0, 0, 1, 1, 1, 1});
  const auto r = metrics::evaluate_batch(masks, masks);
  EXPECT_EQ(r.mdice(), 1.0);
  EXPECT_EQ(r.miou(), 1.0);
  EXPECT_EQ(r.mrecall(), 1.0);
  EXPECT_EQ(r.mprecision(), 1.0);
  EXPECT_EQ(r.mf2(), 1.0);
}

TEST(EvaluateBatch, ThresholdIsInclusiveAndErrorsAreReported) {
  Tensor<double> probs({1, 1, 1, 2}, std::vector<double>{0.5, 0.4999});
  Tensor<double> masks({1, 1, 1, 2}, std::vector<double>{1, 0});
  EXPECT_EQ(metrics::evaluate_batch(probs, masks).mdice(), 1.0);
  EXPECT_THROW(metrics::evaluate_batch(probs, Tensor<double>({1, 1, 2, 1})), ShapeError);
  EXPECT_THROW(metrics::evaluate_batch(Tensor<double>(), Tensor<double>()), std::invalid_argument);
}

TEST(MetricsReport, JsonSchema) {
  Tensor<double> probs({2, 1, 1, 2}, std::vector<double>{0.9, 0.1, 0.2, 0.8});
  Tensor<double> masks({2, 1, 1, 2}, std::vector<double>{1, 0, 1, 0});
  const auto j = metrics::evaluate_batch(probs, masks).to_json();
  std::vector<std::string> keys;
  for (const auto& [k, _] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"miou", "mdice", "recall", "precision", "f2", "per_image"}));
  ASSERT_EQ(j["per_image"].size(), 2u);
  std::vector<std::string> image_keys;
  for (const auto& [k, _] : j["per_image"][0].items()) image_keys.push_back(k);
  EXPECT_EQ(image_keys, (std::vector<std::string>{"dice", "iou", "recall", "precision", "f2", "f_beta_weighted",
                                                  "tp", "fp", "fn", "tn"}));
  EXPECT_DOUBLE_EQ(j["mdice"].get<double>(), 0.5);
}

}  // namespace
}  // namespace pvtadp
