#include "pvtadp/core/rng.h"
#include "pvtadp/encoder/pvt.h"
#include "pvtadp/loss/losses.h"
#include "pvtadp/model/seg_model.h"
#include "pvtadp/nn/blocks.h"
#include "pvtadp/verify/suites.h"

namespace pvtadp::verify {

namespace {

using V = Var<double>;
using Vs = std::vector<V>;

Tensor<double> rand_t(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Checks gradients w.r.t. both the block input and every trainable parameter.
template <typename Build, typename Forward>
std::vector<GradCase> block_cases(const std::string& name, Shape input_shape, std::uint64_t seed, Build build,
                                  Forward forward, double tolerance = 1e-5) {
  struct State {
    ParamStore<double> store;
    Tensor<double> input;
  };
  auto make = [=] {
    auto st = std::make_shared<State>();
    Rng rng(seed);
    build(st->store, rng);
    st->input = rand_t(input_shape, seed + 1);
    return st;
  };
  std::vector<GradCase> cases;
  cases.push_back({name + " d/dx", [=] {
                     auto st = make();
                     GradCheckOptions opts;
                     opts.tolerance = tolerance;
                     return check_input_gradients(
                         name + " d/dx", {st->input},
                         [st, forward](Tape<double>& tape, const Vs& v) {
                           nn::Context<double> ctx(tape, true);
                           return forward(*st, ctx, v[0]);
                         },
                         opts);
                   }});
  cases.push_back({name + " d/dparams", [=] {
                     auto st = make();
                     GradCheckOptions opts;
                     opts.tolerance = tolerance;
                     return check_param_gradients(
                         name + " d/dparams", st->store,
                         [st, forward](Tape<double>& tape) {
                           nn::Context<double> ctx(tape, true);
                           return forward(*st, ctx, tape.constant(st->input));
                         },
                         opts);
                   }});
  return cases;
}

void append(std::vector<GradCase>& dst, std::vector<GradCase> src) {
  for (auto& c : src) dst.push_back(std::move(c));
}

}  // namespace

std::vector<GradCase> composite_cases() {
  std::vector<GradCase> cases;

  {
    auto holder = std::make_shared<std::optional<nn::SEBlock<double>>>();
    append(cases, block_cases(
                      "se_block C=8 r=4", {2, 8, 3, 3}, 900,
                      [holder](ParamStore<double>& s, Rng& rng) { holder->emplace(s, "se", 8, 4, rng); },
                      [holder](auto&, nn::Context<double>& ctx, const V& x) { return (*holder)->forward(ctx, x); }));
  }
  for (const auto& [cin, cout] : {std::pair<std::size_t, std::size_t>{8, 8}, {12, 8}}) {
    auto holder = std::make_shared<std::optional<nn::ResidualSEBlock<double>>>();
    const std::string tag = "residual_se " + std::to_string(cin) + "->" + std::to_string(cout);
    append(cases, block_cases(
                      tag, {2, cin, 4, 4}, 910 + cin,
                      [holder, cin, cout](ParamStore<double>& s, Rng& rng) { holder->emplace(s, "res", cin, cout, 4, rng); },
                      [holder](auto&, nn::Context<double>& ctx, const V& x) { return (*holder)->forward(ctx, x); }));
  }
  for (const auto act : {nn::Activation::kRelu, nn::Activation::kGelu}) {
    for (const bool shared : {false, true}) {
      auto holder = std::make_shared<std::optional<nn::AdapterBlock<double>>>();
      const std::string tag =
          "adapter 8->8 b=2 " + nn::activation_name(act) + (shared ? " shared" : "");
      append(cases, block_cases(
                        tag, {2, 8, 3, 3}, 930 + shared,
                        [holder, act, shared](ParamStore<double>& s, Rng& rng) {
                          holder->emplace(s, "adapter", 8, 8, 2, act, shared, rng);
                        },
                        [holder](auto&, nn::Context<double>& ctx, const V& x) { return (*holder)->forward(ctx, x); }));
    }
  }
  {
    auto holder = std::make_shared<std::optional<nn::CBRBlock<double>>>();
    append(cases, block_cases(
                      "cbr 6->4", {2, 6, 3, 3}, 950,
                      [holder](ParamStore<double>& s, Rng& rng) { holder->emplace(s, "cbr", 6, 4, rng); },
                      [holder](auto&, nn::Context<double>& ctx, const V& x) { return (*holder)->forward(ctx, x); }));
  }
  {
    auto holder = std::make_shared<std::optional<nn::PlainConvBlock<double>>>();
    append(cases, block_cases(
                      "plain_conv 6->4", {2, 6, 4, 4}, 960,
                      [holder](ParamStore<double>& s, Rng& rng) { holder->emplace(s, "plain", 6, 4, rng); },
                      [holder](auto&, nn::Context<double>& ctx, const V& x) { return (*holder)->forward(ctx, x); }));
  }
  struct BlockCfg {
    std::size_t c, heads, sr, h, w;
  };
  for (const auto& b : {BlockCfg{8, 1, 1, 4, 4}, BlockCfg{8, 2, 2, 4, 4}, BlockCfg{8, 2, 2, 5, 3}}) {
    auto holder = std::make_shared<std::optional<enc::TransformerBlock<double>>>();
    const std::string tag = "transformer C=" + std::to_string(b.c) + " heads=" + std::to_string(b.heads) +
                            " sr=" + std::to_string(b.sr) + " " + std::to_string(b.h) + "x" + std::to_string(b.w);
    const enc::TokenMap map{b.h, b.w};
    append(cases, block_cases(
                      tag, {2, b.h * b.w, b.c}, 970 + b.sr + b.h,
                      [holder, b](ParamStore<double>& s, Rng& rng) { holder->emplace(s, "blk", b.c, b.heads, b.sr, 2, rng); },
                      [holder, map](auto&, nn::Context<double>& ctx, const V& x) {
                        return (*holder)->forward(ctx, x, map);
                      },
                      1e-3));
  }
  {
    auto holder = std::make_shared<std::optional<enc::PatchEmbed<double>>>();
    append(cases, block_cases(
                      "patch_embed 3->8 s=4", {1, 3, 8, 8}, 990,
                      [holder](ParamStore<double>& s, Rng& rng) { holder->emplace(s, "pe", 3, 8, 4, rng); },
                      [holder](auto&, nn::Context<double>& ctx, const V& x) {
                        enc::TokenMap map;
                        return (*holder)->forward(ctx, x, map);
                      }));
  }

  // Whole model, forward plus training loss, on the smallest configuration.
  cases.push_back({"full model tiny 32x32 forward+loss d/dparams", [] {
                     auto cfg = model::tiny_config(model::Variant::kFull);
                     auto m = std::make_shared<model::SegModel<double>>(cfg);
                     const Tensor<double> images = rand_t({2, 3, 32, 32}, 995, 0.0, 1.0);
                     Tensor<double> masks = rand_t({2, 1, 32, 32}, 996, 0.0, 1.0);
                     for (std::size_t i = 0; i < masks.numel(); ++i) masks[i] = masks[i] < 0.3 ? 1.0 : 0.0;
                     GradCheckOptions opts;
                     opts.tolerance = 1e-3;
                     return check_param_gradients(
                         "full model tiny 32x32 forward+loss d/dparams", m->params(),
                         [m, images, masks](Tape<double>& tape) {
                           const V out = m->forward(tape, tape.constant(images), true);
                           return loss::total_loss(out, masks, loss::LossConfig{}).total;
                         },
                         opts);
                   }});
  return cases;
}

}  // namespace pvtadp::verify
