#include "pvtadp/verify/invariants.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "pvtadp/autodiff/ops.h"
#include "pvtadp/core/rng.h"
#include "pvtadp/data/batcher.h"
#include "pvtadp/encoder/pvt.h"
#include "pvtadp/loss/losses.h"
#include "pvtadp/loss/metrics.h"
#include "pvtadp/model/seg_model.h"
#include "pvtadp/nn/blocks.h"
#include "pvtadp/train/checkpoint.h"
#include "pvtadp/train/optim.h"
#include "pvtadp/train/trainer.h"

namespace pvtadp::verify {
namespace {

Tensor<double> uniform_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Tensor<double> random_mask(Shape shape, Rng& rng, double p) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.bernoulli(p) ? 1.0 : 0.0;
  return t;
}

void zero_prefix(ParamStore<double>& store, const std::string& prefix) {
  for (auto& p : store) {
    if (p->name.rfind(prefix, 0) == 0 && p->trainable) p->value.fill(0.0);
  }
}

std::string fmt(const char* f, double a, double b = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string se_zero_half() {
  ParamStore<double> store;
  Rng rng(1);
  nn::SEBlock<double> se(store, "se", 8, 4, rng);
  se.w1().value.fill(0.0);
  se.w2().value.fill(0.0);
  const auto x = uniform_tensor({2, 8, 3, 5}, 2);
  Tape<double> tape(false);
  nn::Context<double> ctx(tape, true);
  const auto& y = se.forward(ctx, tape.constant(x)).value();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (y[i] != 0.5 * x[i]) return fmt("element differs: %.17g vs %.17g", y[i], 0.5 * x[i]);
  }
  return {};
}

std::string residual_zero_branch() {
  for (const bool training : {true, false}) {
    ParamStore<double> store;
    Rng rng(3);
    nn::ResidualSEBlock<double> blk(store, "res", 8, 8, 4, rng);
    for (const char* conv : {"res.reduce.", "res.conv_a.", "res.conv_b."}) zero_prefix(store, conv);
    const auto x = uniform_tensor({2, 8, 4, 4}, 4);
    Tape<double> tape(false);
    nn::Context<double> ctx(tape, training);
    const auto& y = blk.forward(ctx, tape.constant(x)).value();
    for (std::size_t i = 0; i < x.numel(); ++i) {
      if (y[i] != std::max(x[i], 0.0)) return fmt("y=%.17g relu(x)=%.17g", y[i], std::max(x[i], 0.0));
    }
  }
  return {};
}

std::string adapter_zero() {
  ParamStore<double> store;
  Rng rng(5);
  nn::AdapterBlock<double> adp(store, "adp", 8, 8, 2, nn::Activation::kGelu, false, rng);
  zero_prefix(store, "adp.");
  Tape<double> tape(false);
  nn::Context<double> ctx(tape, true);
  const auto& y = adp.forward(ctx, tape.constant(uniform_tensor({2, 8, 3, 3}, 6))).value();
  for (std::size_t i = 0; i < y.numel(); ++i) {
    if (y[i] != 0.0) return fmt("nonzero output %.3g", y[i]);
  }
  return {};
}

std::vector<double> linear_ref(const std::vector<double>& x, std::size_t rows, const nn::Linear<double>& l,
                               std::size_t in, std::size_t out) {
  std::vector<double> y(rows * out);
  const auto& w = l.weight().value;
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = l.bias() ? l.bias()->value[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += x[n * in + i] * w[i * out + o];
      y[n * out + o] = acc;
    }
  }
  return y;
}

std::string sra_reference() {
  const std::size_t B = 2, N = 6, C = 8, heads = 2, d = C / heads;
  ParamStore<double> store;
  Rng rng(7);
  enc::SpatialReductionAttention<double> attn(store, "attn", C, heads, 1, rng);
  std::uint64_t salt = 0;
  for (auto& p : store) p->value = uniform_tensor(p->value.shape(), mix_seed(8, salt++), -0.5, 0.5);
  const auto x = uniform_tensor({B, N, C}, 9);
  Tape<double> tape(false);
  nn::Context<double> ctx(tape, false);
  const auto& y = attn.forward(ctx, tape.constant(x), enc::TokenMap{2, 3}).value();

  const std::vector<double> xs(x.data(), x.data() + x.numel());
  const auto q = linear_ref(xs, B * N, attn.q(), C, C);
  const auto k = linear_ref(xs, B * N, attn.k(), C, C);
  const auto v = linear_ref(xs, B * N, attn.v(), C, C);
  std::vector<double> o(B * N * C, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < N; ++i) {
        std::vector<double> s(N);
        double z = 0;
        for (std::size_t j = 0; j < N; ++j) {
          double dot = 0;
          for (std::size_t e = 0; e < d; ++e) dot += q[(b * N + i) * C + h * d + e] * k[(b * N + j) * C + h * d + e];
          s[j] = std::exp(dot / std::sqrt(static_cast<double>(d)));
          z += s[j];
        }
        for (std::size_t j = 0; j < N; ++j) {
          for (std::size_t e = 0; e < d; ++e) o[(b * N + i) * C + h * d + e] += s[j] / z * v[(b * N + j) * C + h * d + e];
        }
      }
    }
  }
  const auto ref = linear_ref(o, B * N, attn.out(), C, C);
  double worst = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(y[i] - ref[i]));
  return worst < 1e-6 ? std::string() : fmt("max abs diff %.3e", worst);
}

std::string loss_perfect_zero() {
  Rng rng(10);
  const auto y = random_mask({2, 1, 8, 8}, rng, 0.3);
  Tape<double> tape(false);
  const auto p = tape.constant(y);
  const double d = loss::dice_loss(p, y, 1.0).value().item();
  const double j = loss::jaccard_loss(p, y, 1.0).value().item();
  if (d != 0.0 || j != 0.0) return fmt("dice=%.3g jaccard=%.3g", d, j);
  return {};
}

std::string loss_total_sum() {
  const loss::LossConfig cfg;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(mix_seed(11, s));
    const auto y = random_mask({2, 1, 6, 6}, rng, 0.4);
    Tape<double> tape(false);
    const auto t = loss::total_loss(tape.constant(uniform_tensor({2, 1, 6, 6}, mix_seed(12, s), 0.01, 0.99)), y, cfg);
    const double parts = t.bce.value().item() + t.dice.value().item() + t.jaccard.value().item();
    if (std::abs(t.total.value().item() - parts) > 1e-7) return fmt("total %.17g vs sum %.17g", t.total.value().item(), parts);
  }
  return {};
}

std::string loss_hand_cases() {
  Tape<double> tape(false);
  const double j = loss::jaccard_loss(tape.constant(Tensor<double>({2}, {0.5, 0.5})), Tensor<double>({2}, {1, 0}), 1.0)
                       .value()
                       .item();
  const double d =
      loss::dice_loss(tape.constant(Tensor<double>({4}, {1, 0, 0, 0})), Tensor<double>({4}, {1, 1, 0, 0}), 1.0)
          .value()
          .item();
  if (std::abs(j - 0.4) > 1e-9 || std::abs(d - 0.25) > 1e-9) return fmt("jaccard=%.17g dice=%.17g", j, d);
  return {};
}

std::string dice_iou_identity() {
  Rng rng(13);
  for (int k = 0; k < 200; ++k) {
    const auto a = random_mask({1, 1, 16, 16}, rng, rng.uniform());
    const auto b = random_mask({1, 1, 16, 16}, rng, rng.uniform());
    const auto c = metrics::confusion_counts(a, b);
    const double iou = metrics::iou(c);
    const double dice = metrics::dice_coef(c);
    if (std::abs(dice - 2 * iou / (1 + iou)) > 1e-9) return fmt("dice %.17g iou %.17g", dice, iou);
  }
  return {};
}

std::string model_shape_range() {
  for (const auto v : {model::Variant::kBase, model::Variant::kDsEnc, model::Variant::kDsEncRes, model::Variant::kFull}) {
    const model::SegModel<float> m(model::tiny_config(v));
    for (const std::size_t s : {32, 48}) {
      Tensor<float> x({2, 3, s, s});
      Rng rng(14);
      for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.uniform());
      const auto y = m.predict(x);
      if (y.shape() != Shape{2, 1, s, s}) return model::variant_name(v) + ": bad shape " + to_string(y.shape());
      for (std::size_t i = 0; i < y.numel(); ++i) {
        if (!(y[i] > 0.0f && y[i] < 1.0f)) return model::variant_name(v) + ": value outside (0,1)";
      }
    }
  }
  return {};
}

std::string early_stopping() {
  train::EarlyStopping es(5, 1e-4);
  const double seq[] = {0.3, 0.4, 0.4, 0.35, 0.4, 0.2, 0.4, 0.9};
  for (std::size_t e = 0; e < std::size(seq); ++e) {
    if (es.update(seq[e])) return e + 1 == 7 ? std::string() : fmt("stopped after epoch %.0f", double(e + 1));
  }
  return "never stopped";
}

std::string checkpoint_round_trip() {
  model::SegModel<double> m(model::tiny_config(model::Variant::kFull));
  train::Trainer<double> t(m, train::TrainConfig{});
  const auto bytes = train::encode_checkpoint(t.checkpoint());
  if (train::encode_checkpoint(train::decode_checkpoint(bytes)) != bytes) return "re-encoded bytes differ";
  model::SegModel<double> m2(model::tiny_config(model::Variant::kFull));
  for (auto& p : m2.params()) p->value.fill(0.25);
  train::Trainer<double> t2(m2, train::TrainConfig{});
  t2.restore(train::decode_checkpoint(bytes));
  if (train::encode_checkpoint(t2.checkpoint()) != bytes) return "restored trainer checkpoint differs";
  return {};
}

std::string batcher_partition() {
  const data::Batcher b(10, 4, 3);
  const auto batches = b.epoch(1);
  if (batches.size() != 3 || batches[0].size() != 4 || batches[1].size() != 4 || batches[2].size() != 2) {
    return "expected batches of 4,4,2";
  }
  std::set<std::size_t> seen;
  for (const auto& batch : batches) seen.insert(batch.begin(), batch.end());
  return seen.size() == 10 ? std::string() : "indices are not a partition";
}

}  // namespace

std::vector<Invariant> invariant_cases() {
  return {
      {"se zero weights scale by 0.5", se_zero_half},
      {"residual zero branch == relu(x)", residual_zero_branch},
      {"adapter zero weights -> 0", adapter_zero},
      {"sra sr=1 == reference attention", sra_reference},
      {"dice/jaccard loss 0 on perfect prediction", loss_perfect_zero},
      {"total loss == component sum", loss_total_sum},
      {"loss hand cases (0.4, 0.25)", loss_hand_cases},
      {"dice == 2 iou / (1 + iou)", dice_iou_identity},
      {"model output [B,1,H,W] in (0,1)", model_shape_range},
      {"early stopping after 5 bad epochs", early_stopping},
      {"checkpoint round trip", checkpoint_round_trip},
      {"batcher partition", batcher_partition},
  };
}

InvariantSummary run_invariants(const std::vector<Invariant>& cases, std::ostream* table) {
  InvariantSummary summary;
  const auto start = std::chrono::steady_clock::now();
  for (const auto& c : cases) {
    std::string problem;
    try {
      problem = c.run();
    } catch (const std::exception& e) {
      problem = std::string("threw: ") + e.what();
    }
    problem.empty() ? ++summary.passed : ++summary.failed;
    if (table) {
      char line[256];
      std::snprintf(line, sizeof line, "%-4s %-58s %s\n", problem.empty() ? "PASS" : "FAIL", c.name.c_str(),
                    problem.c_str());
      *table << line << std::flush;
    }
  }
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return summary;
}

}  // namespace pvtadp::verify
