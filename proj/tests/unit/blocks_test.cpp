#include <gtest/gtest.h>

#include "pvtadp/autodiff/ops.h"
#include "pvtadp/nn/blocks.h"
#include "test_util.h"

namespace pvtadp {
namespace {

using testing::random_tensor;

void zero(ParamStore<double>& store, const std::string& prefix) {
  for (auto& p : store) {
    if (p->name.rfind(prefix, 0) == 0 && p->trainable) p->value.fill(0.0);
  }
}

TEST(SEBlock, ZeroWeightsScaleByExactlyHalf) {
  ParamStore<double> store;
  Rng rng(1);
  nn::SEBlock<double> se(store, "se", 8, 4, rng);
  se.w1().value.fill(0.0);
  se.w2().value.fill(0.0);
  const auto x = random_tensor({2, 8, 3, 5}, 2);
  Tape<double> tape;
  nn::Context<double> ctx(tape, true);
  const auto& y = se.forward(ctx, tape.constant(x)).value();
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], 0.5 * x[i]);
}

TEST(SEBlock, ZeroInputGivesZeroOutput) {
  ParamStore<double> store;
  Rng rng(3);
  nn::SEBlock<double> se(store, "se", 8, 2, rng);
  Tape<double> tape;
  nn::Context<double> ctx(tape, true);
  const auto& y = se.forward(ctx, tape.constant(Tensor<double>({1, 8, 4, 4}))).value();
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], 0.0);
}

TEST(SEBlock, EachChannelIsScaledByOneConstantInOpenUnitInterval) {
  ParamStore<double> store;
  Rng rng(4);
  nn::SEBlock<double> se(store, "se", 6, 3, rng);
  const auto x = testing::random_off_zero({2, 6, 4, 3}, 5);
  Tape<double> tape;
  nn::Context<double> ctx(tape, true);
  const auto& y = se.forward(ctx, tape.constant(x)).value();
  const std::size_t hw = 12;
  for (std::size_t bc = 0; bc < 12; ++bc) {
    const double ratio = y[bc * hw] / x[bc * hw];
    EXPECT_GT(ratio, 0.0);
    EXPECT_LT(ratio, 1.0);
    for (std::size_t k = 1; k < hw; ++k) EXPECT_NEAR(y[bc * hw + k] / x[bc * hw + k], ratio, 1e-6);
  }
}

TEST(SEBlock, RejectsBadConfigurationAndChannelMismatch) {
  ParamStore<double> store;
  Rng rng(1);
  EXPECT_THROW(nn::SEBlock<double>(store, "a", 4, 8, rng), ShapeError);
  nn::SEBlock<double> se(store, "b", 8, 2, rng);
  Tape<double> tape;
  nn::Context<double> ctx(tape, true);
  EXPECT_THROW(se.forward(ctx, tape.constant(Tensor<double>({1, 4, 2, 2}))), ShapeError);
}

TEST(ResidualSEBlock, ZeroBranchEqualsReluOfInputBitExactly) {
  for (const bool training : {true, false}) {
    ParamStore<double> store;
    Rng rng(7);
    nn::ResidualSEBlock<double> blk(store, "res", 8, 8, 4, rng);
    for (const char* conv : {"res.reduce.", "res.conv_a.", "res.conv_b."}) zero(store, conv);
    const auto x = random_tensor({2, 8, 5, 4}, 8);
    Tape<double> tape;
    nn::Context<double> ctx(tape, training);
    const auto& y = blk.forward(ctx, tape.constant(x)).value();
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], std::max(x[i], 0.0)) << "training=" << training;
  }
}

TEST(ResidualSEBlock, PreservesSpatialDimsAndProjectsOnlyWhenChannelsDiffer) {
  ParamStore<double> store;
  Rng rng(9);
  nn::ResidualSEBlock<double> same(store, "same", 8, 8, 4, rng);
  nn::ResidualSEBlock<double> proj(store, "proj", 12, 8, 4, rng);
  EXPECT_FALSE(same.has_projection());
  EXPECT_TRUE(proj.has_projection());
  EXPECT_FALSE(store.contains("same.proj.weight"));
  EXPECT_TRUE(store.contains("proj.proj.weight"));
  for (const auto& [h, w] : {std::pair<std::size_t, std::size_t>{1, 1}, {3, 5}, {7, 2}}) {
    Tape<double> tape;
    nn::Context<double> ctx(tape, true);
    EXPECT_EQ(same.forward(ctx, tape.constant(random_tensor({2, 8, h, w}, 10))).shape(), (Shape{2, 8, h, w}));
    EXPECT_EQ(proj.forward(ctx, tape.constant(random_tensor({2, 12, h, w}, 11))).shape(), (Shape{2, 8, h, w}));
  }
}

TEST(ResidualSEBlock, ZeroBranchGradientIsTheReluMask) {
  ParamStore<double> store;
  Rng rng(12);
  nn::ResidualSEBlock<double> blk(store, "res", 4, 4, 2, rng);
  for (const char* conv : {"res.reduce.", "res.conv_a.", "res.conv_b."}) zero(store, conv);
  const auto x = testing::random_off_zero({1, 4, 3, 3}, 13);
  Tape<double> tape;
  nn::Context<double> ctx(tape, true);
  const auto xv = tape.leaf(x);
  tape.backward(sum(blk.forward(ctx, xv)));
  const auto& g = tape.grad(xv);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(g[i], x[i] > 0 ? 1.0 : 0.0);
}

TEST(AdapterBlock, ZeroWeightsGiveZeroOutput) {
  ParamStore<double> store;
  Rng rng(14);
  nn::AdapterBlock<double> adp(store, "adp", 8, 8, 2, nn::Activation::kGelu, false, rng);
  zero(store, "adp.");
  Tape<double> tape;
  nn::Context<double> ctx(tape, true);
  const auto& y = adp.forward(ctx, tape.constant(random_tensor({2, 8, 3, 3}, 15))).value();
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], 0.0);
}

TEST(AdapterBlock, ZeroParallelPathLeavesTheBottleneckPipeline) {
  ParamStore<double> store;
  Rng rng(16);
  nn::AdapterBlock<double> adp(store, "adp", 8, 6, 3, nn::Activation::kLeakyRelu, false, rng);
  zero(store, "adp.par_");
  const auto x = random_tensor({2, 8, 4, 4}, 17);
  Tape<double> tape;
  nn::Context<double> ctx(tape, true);
  const auto& y = adp.forward(ctx, tape.constant(x)).value();
  const auto xv = tape.constant(x);
  const auto ref = conv2d(leaky_relu(conv2d(xv, tape.constant(store.get("adp.main_down.weight").value), std::nullopt)),
                          tape.constant(store.get("adp.main_up.weight").value), std::nullopt)
                       .value();
  ASSERT_EQ(y.shape(), (Shape{2, 6, 4, 4}));
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(AdapterBlock, ParameterCountAndSharing) {
  ParamStore<double> independent, shared;
  Rng rng(18);
  nn::AdapterBlock<double>(independent, "a", 16, 16, 4, nn::Activation::kRelu, false, rng);
  nn::AdapterBlock<double>(shared, "a", 16, 16, 4, nn::Activation::kRelu, true, rng);
  EXPECT_EQ(independent.trainable_count(), 2u * (16 * 4 + 4 * 16));
  EXPECT_EQ(shared.trainable_count(), 16u * 4 + 4 * 16);
}

TEST(AdapterBlock, SharedWeightsDoubleTheSinglePath) {
  ParamStore<double> store;
  Rng rng(19);
  nn::AdapterBlock<double> adp(store, "a", 8, 8, 2, nn::Activation::kRelu, true, rng);
  const auto x = random_tensor({1, 8, 2, 2}, 20);
  Tape<double> tape;
  nn::Context<double> ctx(tape, true);
  const auto& y = adp.forward(ctx, tape.constant(x)).value();
  const auto xv = tape.constant(x);
  const auto single = conv2d(relu(conv2d(xv, tape.constant(store.get("a.main_down.weight").value), std::nullopt)),
                             tape.constant(store.get("a.main_up.weight").value), std::nullopt)
                          .value();
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], 2 * single[i], 1e-12);
}

TEST(AdapterBlock, RejectsBottleneckNotBelowInput) {
  ParamStore<double> store;
  Rng rng(1);
  EXPECT_THROW(nn::AdapterBlock<double>(store, "a", 8, 8, 8, nn::Activation::kRelu, false, rng), ShapeError);
  EXPECT_THROW(nn::AdapterBlock<double>(store, "b", 8, 8, 0, nn::Activation::kRelu, false, rng), ShapeError);
}

TEST(CBRBlock, NonNegativeAndShapeLaw) {
  ParamStore<double> store;
  Rng rng(21);
  nn::CBRBlock<double> cbr(store, "cbr", 5, 3, rng);
  Tape<double> tape;
  nn::Context<double> ctx(tape, true);
  const auto y = cbr.forward(ctx, tape.constant(random_tensor({2, 5, 4, 6}, 22)));
  EXPECT_EQ(y.shape(), (Shape{2, 3, 4, 6}));
  for (std::size_t i = 0; i < y.value().numel(); ++i) EXPECT_GE(y.value()[i], 0.0);
}

TEST(CBRBlock, IdentityConvWithUnitEvalStatsIsRelu) {
  ParamStore<double> store;
  Rng rng(23);
  nn::CBRBlock<double> cbr(store, "cbr", 4, 4, rng);
  auto& w = cbr.conv().weight().value;
  w.fill(0.0);
  for (std::size_t c = 0; c < 4; ++c) w[c * 4 + c] = 1.0;
  const auto x = random_tensor({1, 4, 3, 3}, 24);
  Tape<double> tape;
  nn::Context<double> ctx(tape, false);
  const auto& y = cbr.forward(ctx, tape.constant(x)).value();
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y[i], std::max(x[i], 0.0), 1e-5);
}

TEST(PlainConvBlock, ShapeAndNonNegative) {
  ParamStore<double> store;
  Rng rng(25);
  nn::PlainConvBlock<double> blk(store, "plain", 6, 4, rng);
  Tape<double> tape;
  nn::Context<double> ctx(tape, true);
  const auto y = blk.forward(ctx, tape.constant(random_tensor({2, 6, 5, 5}, 26)));
  EXPECT_EQ(y.shape(), (Shape{2, 4, 5, 5}));
  for (std::size_t i = 0; i < y.value().numel(); ++i) EXPECT_GE(y.value()[i], 0.0);
}

}  // namespace
}  // namespace pvtadp
