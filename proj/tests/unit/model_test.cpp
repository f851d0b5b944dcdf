#include <gtest/gtest.h>

#include <chrono>

#include "pvtadp/model/seg_model.h"
#include "test_util.h"

namespace pvtadp {
namespace {

using model::Variant;
using testing::random_tensor;

constexpr Variant kVariants[] = {Variant::kBase, Variant::kDsEnc, Variant::kDsEncRes, Variant::kFull};

TEST(SegModel, OutputShapeAndOpenUnitRangeForEveryVariant) {
  for (const Variant v : kVariants) {
    model::SegModel<float> m(model::tiny_config(v));
    for (const std::size_t side : {64u, 96u}) {
      const auto x = random_tensor<float>({2, 3, side, side}, side, 0, 1);
      for (const bool training : {true, false}) {
        Tape<float> tape(false);
        const auto& y = m.forward(tape, tape.constant(x), training).value();
        ASSERT_EQ(y.shape(), (Shape{2, 1, side, side})) << model::variant_name(v);
        for (std::size_t i = 0; i < y.numel(); ++i) {
          ASSERT_GT(y[i], 0.0f);
          ASSERT_LT(y[i], 1.0f);
        }
      }
    }
  }
}

TEST(SegModel, SameSeedGivesIdenticalParameters) {
  const auto cfg = model::tiny_config(Variant::kFull);
  model::SegModel<double> a(cfg), b(cfg);
  ASSERT_EQ(a.params().size(), b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_EQ(a.params()[i].name, b.params()[i].name);
    EXPECT_EQ(testing::values_of(a.params()[i].value), testing::values_of(b.params()[i].value));
  }
  auto other = cfg;
  other.seed = cfg.seed + 1;
  model::SegModel<double> c(other);
  EXPECT_NE(testing::values_of(a.params()[0].value), testing::values_of(c.params()[0].value));
}

TEST(SegModel, ParameterCountsAreOrderedByVariant) {
  for (const auto& cfg_of : {model::tiny_config, +[](Variant v) {
                               model::ModelConfig c;
                               c.variant = v;
                               return c;
                             }}) {
    std::size_t counts[4];
    for (int i = 0; i < 4; ++i) counts[i] = model::SegModel<float>(cfg_of(kVariants[i])).param_count();
    EXPECT_LE(counts[0], counts[1]);
    EXPECT_LT(counts[2], counts[3]);
    // The plain decoder's first 3x3 conv reads the full concat width, so it
    // outweighs the residual block's 1x1 reduce + two 3x3 at output width.
    EXPECT_GT(counts[1], counts[2]);
  }
}

TEST(SegModel, ZeroHeadGivesOneHalfEverywhere) {
  model::SegModel<double> m(model::tiny_config(Variant::kFull));
  m.head().weight().value.fill(0.0);
  const auto y = m.predict(random_tensor({1, 3, 32, 32}, 3, 0, 1));
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], 0.5);
}

TEST(SegModel, FlopEstimateScalesWithArea) {
  model::SegModel<float> m(model::tiny_config(Variant::kFull));
  const double f64 = static_cast<double>(m.flop_estimate(64, 64));
  const double f128 = static_cast<double>(m.flop_estimate(128, 128));
  EXPECT_GT(f64, 0.0);
  EXPECT_GE(f128 / f64, 4.0);

  std::uint64_t conv[2];
  for (int i = 0; i < 2; ++i) {
    const std::size_t s = i == 0 ? 64 : 128;
    Tape<float> tape(false);
    m.forward(tape, tape.constant(Tensor<float>({1, 3, s, s})), false);
    conv[i] = tape.flops("conv2d");
  }
  EXPECT_GT(conv[0], 0u);
  EXPECT_EQ(conv[1], 4 * conv[0]);
}

TEST(SegModel, DisabledAdapterWithCopiedWeightsReproducesResidualVariant) {
  auto full = model::tiny_config(Variant::kFull);
  full.adapter_enabled = false;
  full.seed = 5;
  model::SegModel<double> a(full);
  model::SegModel<double> b(model::tiny_config(Variant::kDsEncRes));
  ASSERT_EQ(b.params().copy_values_from(a.params()), a.params().size());
  ASSERT_EQ(a.params().size(), b.params().size());
  const auto x = random_tensor({2, 3, 32, 32}, 6, 0, 1);
  for (const bool training : {true, false}) {
    Tape<double> ta(false), tb(false);
    const auto& ya = a.forward(ta, ta.constant(x), training).value();
    const auto& yb = b.forward(tb, tb.constant(x), training).value();
    EXPECT_EQ(testing::values_of(ya), testing::values_of(yb));
  }
}

TEST(SegModel, EvalForwardIsBatchIndependent) {
  model::SegModel<double> m(model::tiny_config(Variant::kFull));
  const auto a = random_tensor({1, 3, 32, 32}, 7, 0, 1), b = random_tensor({1, 3, 32, 32}, 8, 0, 1);
  Tensor<double> both({2, 3, 32, 32});
  std::copy(a.data(), a.data() + a.numel(), both.data());
  std::copy(b.data(), b.data() + b.numel(), both.data() + a.numel());
  const auto ya = m.predict(a), yb = m.predict(b), yab = m.predict(both);
  for (std::size_t i = 0; i < ya.numel(); ++i) {
    EXPECT_NEAR(yab[i], ya[i], 1e-6);
    EXPECT_NEAR(yab[ya.numel() + i], yb[i], 1e-6);
  }
}

TEST(SegModel, RejectsIndivisibleInputAndWrongChannels) {
  model::SegModel<float> m(model::tiny_config(Variant::kBase));
  EXPECT_THROW(m.predict(Tensor<float>({1, 3, 40, 48})), ShapeError);
  EXPECT_THROW(m.predict(Tensor<float>({1, 1, 32, 32})), ShapeError);
}

TEST(SegModel, TinyConfigBuildsQuickly) {
  const auto start = std::chrono::steady_clock::now();
  model::SegModel<float> m(model::tiny_config(Variant::kFull));
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 1.0);
}

TEST(Conv2dLayer, OneByOneWithBiasHasFourParameters) {
  ParamStore<float> store;
  Rng rng(1);
  nn::Conv2d<float>(store, "c", {.in_channels = 3, .out_channels = 1, .kernel = 1, .stride = 1, .padding = 0,
                                 .groups = 1, .bias = true},
                    rng);
  EXPECT_EQ(store.trainable_count(), 4u);
}

TEST(ModelConfig, JsonRoundTripAndValidation) {
  auto cfg = model::tiny_config(Variant::kDsEnc);
  cfg.adapter_activation = nn::Activation::kGelu;
  cfg.seed = 99;
  const auto back = model::ModelConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_THROW(model::ModelConfig::from_json({{"colour", "red"}}), std::invalid_argument);
  EXPECT_THROW(model::ModelConfig::from_json({{"stage_channels", {8, 8, 16}}}), std::invalid_argument);
  for (const char* name : {"base", "dsenc", "dsencres", "full"}) {
    EXPECT_EQ(model::variant_name(model::parse_variant(name)), name);
  }
  EXPECT_THROW(model::parse_variant("resnet"), std::invalid_argument);
}

}  // namespace
}  // namespace pvtadp
