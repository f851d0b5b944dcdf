// Acceptance run: one PASS/FAIL line per criterion. Expected values come from
// independent brute-force oracles written here, not from the library.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "CLI11.hpp"
#include "pvtadp/autodiff/ops.h"
#include "pvtadp/core/rng.h"
#include "pvtadp/data/batcher.h"
#include "pvtadp/data/synthetic.h"
#include "pvtadp/encoder/pvt.h"
#include "pvtadp/loss/losses.h"
#include "pvtadp/loss/metrics.h"
#include "pvtadp/model/seg_model.h"
#include "pvtadp/nn/blocks.h"
#include "pvtadp/train/checkpoint.h"
#include "pvtadp/train/trainer.h"
#include "pvtadp/verify/suites.h"

using namespace pvtadp;
namespace fs = std::filesystem;

namespace {

constexpr double kPrimitiveTol = 1e-5;
constexpr double kCompositeTol = 1e-3;
constexpr double kGradBudgetSec = 600;
constexpr double kSumTol = 1e-7;
constexpr double kHandTol = 1e-9;
constexpr double kIdentityTol = 1e-9;
constexpr double kAttentionTol = 1e-6;
constexpr double kOverfitLoss = 0.2;
constexpr std::size_t kOverfitSteps = 300;
constexpr double kOverfitBudgetSec = 300;
constexpr double kGeneralizationDice = 0.85;
constexpr double kGeneralizationBudgetSec = 3600;
constexpr std::size_t kPatience = 5;

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

Tensor<double> uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Tensor<double> bernoulli(Shape shape, Rng& rng, double p) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.bernoulli(p) ? 1.0 : 0.0;
  return t;
}

std::vector<data::Sample> synth(std::size_t count, std::size_t size, std::uint64_t seed) {
  data::SynthSpec spec;
  spec.count = count;
  spec.size = size;
  spec.seed = seed;
  std::vector<data::Sample> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(data::synth_sample(spec, i));
  return out;
}

const model::Variant kVariants[] = {model::Variant::kBase, model::Variant::kDsEnc, model::Variant::kDsEncRes,
                                    model::Variant::kFull};

model::ModelConfig default_config(model::Variant v) {
  model::ModelConfig c;
  c.variant = v;
  return c;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const auto prim = verify::run_cases(verify::primitive_op_cases());
  const auto comp = verify::run_cases(verify::composite_cases());
  double prim_max = 0, comp_max = 0;
  std::string worst;
  for (const auto& r : prim.results) {
    if (r.max_rel_error >= prim_max) worst = r.name;
    prim_max = std::max(prim_max, r.max_rel_error);
  }
  for (const auto& r : comp.results) comp_max = std::max(comp_max, r.max_rel_error);
  const double secs = seconds_since(t0);
  return {prim_max < kPrimitiveTol && comp_max < kCompositeTol && secs < kGradBudgetSec,
          fmt("%zu primitive cases max rel err %.2e (<%.0e, worst %s); %zu composite cases incl. tiny model max %.2e "
              "(<%.0e); %.1f s",
              prim.results.size(), prim_max, kPrimitiveTol, worst.c_str(), comp.results.size(), comp_max,
              kCompositeTol, secs)};
}

// Loss oracles evaluated directly from the definitions with plain loops.
double jaccard_oracle(const Tensor<double>& p, const Tensor<double>& y, double alpha) {
  double inter = 0, uni = 0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    inter += y[i] * p[i];
    uni += y[i] + p[i] - y[i] * p[i];
  }
  return alpha * (1 - (inter + alpha) / (uni + alpha));
}

double dice_oracle(const Tensor<double>& p, const Tensor<double>& y, double eps) {
  double inter = 0, sy = 0, sp = 0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    inter += y[i] * p[i];
    sy += y[i];
    sp += p[i];
  }
  return 1 - (2 * inter + eps) / (sy + sp + eps);
}

Outcome loss_identities() {
  Rng rng(101);
  std::size_t nonzero = 0;
  for (int k = 0; k < 50; ++k) {
    const auto y = k == 0 ? Tensor<double>({2, 1, 8, 8}) : bernoulli({2, 1, 8, 8}, rng, rng.uniform());
    Tape<double> tape(false);
    const auto p = tape.constant(y);
    nonzero += loss::dice_loss(p, y, 1.0).value().item() != 0.0;
    nonzero += loss::jaccard_loss(p, y, 1.0).value().item() != 0.0;
  }

  double sum_err = 0;
  const loss::LossConfig cfg;
  for (int k = 0; k < 100; ++k) {
    const auto y = bernoulli({2, 1, 8, 8}, rng, 0.3);
    Tape<double> tape(false);
    const auto t = loss::total_loss(tape.constant(uniform({2, 1, 8, 8}, rng, 0.001, 0.999)), y, cfg);
    const double parts = t.bce.value().item() + t.dice.value().item() + t.jaccard.value().item();
    sum_err = std::max(sum_err, std::abs(t.total.value().item() - parts));
  }

  const Tensor<double> jp({2}, {0.5, 0.5}), jy({2}, {1, 0});
  const Tensor<double> dp({4}, {1, 0, 0, 0}), dy({4}, {1, 1, 0, 0});
  Tape<double> tape(false);
  const double jac = loss::jaccard_loss(tape.constant(jp), jy, 1.0).value().item();
  const double dice = loss::dice_loss(tape.constant(dp), dy, 1.0).value().item();
  const double jac_err = std::abs(jac - jaccard_oracle(jp, jy, 1.0));
  const double dice_err = std::abs(dice - dice_oracle(dp, dy, 1.0));

  return {nonzero == 0 && sum_err <= kSumTol && jac_err <= kHandTol && dice_err <= kHandTol,
          fmt("perfect-prediction nonzero losses %zu/100; |total-sum| max %.1e (<=%.0e); jaccard %.12f (oracle err "
              "%.1e), dice %.12f (oracle err %.1e) (<=%.0e)",
              nonzero, sum_err, kSumTol, jac, jac_err, dice, dice_err, kHandTol)};
}

struct Counts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Counts count_pixels(const Tensor<double>& pred, const Tensor<double>& truth) {
  Counts c;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const bool p = pred[i] == 1.0, t = truth[i] == 1.0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

// Same conventions as the library documents: empty-vs-empty is perfect,
// any other empty denominator scores 0.
double ratio_or(std::uint64_t num, std::uint64_t den, bool perfect) {
  if (den == 0) return perfect ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

Outcome metric_oracle() {
  Rng rng(202);
  std::size_t mismatches = 0;
  double identity_err = 0;
  for (int k = 0; k < 1000; ++k) {
    // Include empty and full masks in the mix.
    const double pa = k % 50 == 0 ? 0.0 : (k % 50 == 1 ? 1.0 : rng.uniform());
    const double pb = k % 70 == 0 ? 0.0 : rng.uniform();
    const auto pred = bernoulli({16, 16}, rng, pa);
    const auto truth = bernoulli({16, 16}, rng, pb);
    const Counts o = count_pixels(pred, truth);
    const auto c = metrics::confusion_counts(pred, truth);
    if (c.tp != o.tp || c.fp != o.fp || c.fn != o.fn || c.tn != o.tn) {
      ++mismatches;
      continue;
    }
    const bool both_empty = o.tp + o.fp + o.fn == 0;
    const double dice = ratio_or(2 * o.tp, 2 * o.tp + o.fp + o.fn, both_empty);
    const double iou = ratio_or(o.tp, o.tp + o.fp + o.fn, both_empty);
    const double prec = ratio_or(o.tp, o.tp + o.fp, o.fn == 0);
    const double rec = ratio_or(o.tp, o.tp + o.fn, o.fp == 0);
    const double f2 = prec + rec == 0 ? 0.0 : 5 * prec * rec / (4 * prec + rec);
    const auto f2_lib = metrics::f_beta(pred, truth, 2.0);
    if (metrics::dice_coef(c) != dice || metrics::iou(c) != iou || metrics::precision(c) != prec ||
        metrics::recall(c) != rec || std::abs(f2_lib - f2) > 1e-12) {
      ++mismatches;
    }
    identity_err = std::max(identity_err, std::abs(metrics::dice_coef(c) - 2 * metrics::iou(c) / (1 + metrics::iou(c))));
  }
  return {mismatches == 0 && identity_err <= kIdentityTol,
          fmt("1000 random 16x16 pairs: %zu mismatches vs pixel-count oracle; |dice - 2iou/(1+iou)| max %.1e (<=%.0e)",
              mismatches, identity_err, kIdentityTol)};
}

Outcome shape_and_range() {
  std::size_t bad = 0;
  std::string notes;
  float lo = 1, hi = 0;
  for (const auto v : kVariants) {
    const model::SegModel<float> m(default_config(v));
    for (const std::size_t s : {64, 96}) {
      Rng rng(303 + s);
      Tensor<float> x({2, 3, s, s});
      for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.uniform());
      const auto y = m.predict(x);
      bool ok = y.shape() == Shape{2, 1, s, s};
      for (std::size_t i = 0; ok && i < y.numel(); ++i) {
        ok = y[i] > 0.0f && y[i] < 1.0f;
        lo = std::min(lo, y[i]);
        hi = std::max(hi, y[i]);
      }
      if (!ok) {
        ++bad;
        notes += " " + model::variant_name(v) + "@" + std::to_string(s);
      }
    }
  }
  return {bad == 0, fmt("4 variants x {64,96}, B=2: %zu violations%s; outputs within [%.3g, %.7g]", bad,
                        notes.c_str(), lo, hi)};
}

std::vector<double> linear_oracle(const std::vector<double>& x, std::size_t rows, const nn::Linear<double>& l,
                                  std::size_t in, std::size_t out) {
  std::vector<double> y(rows * out);
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = l.bias() ? l.bias()->value[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += x[n * in + i] * l.weight().value[i * out + o];
      y[n * out + o] = acc;
    }
  }
  return y;
}

Outcome block_degeneracies() {
  Rng rng(404);
  auto zero = [](ParamStore<double>& store, const std::string& prefix) {
    for (auto& p : store) {
      if (p->name.rfind(prefix, 0) == 0 && p->trainable) p->value.fill(0.0);
    }
  };

  std::size_t se_bad = 0, res_bad = 0, adp_bad = 0;
  {
    ParamStore<double> store;
    nn::SEBlock<double> se(store, "se", 16, 4, rng);
    se.w1().value.fill(0.0);
    se.w2().value.fill(0.0);
    const auto x = uniform({2, 16, 5, 5}, rng, -2, 2);
    Tape<double> tape(false);
    nn::Context<double> ctx(tape, true);
    const auto& y = se.forward(ctx, tape.constant(x)).value();
    for (std::size_t i = 0; i < x.numel(); ++i) se_bad += y[i] != 0.5 * x[i];
  }
  for (const bool training : {true, false}) {
    ParamStore<double> store;
    nn::ResidualSEBlock<double> blk(store, "res", 16, 16, 4, rng);
    for (const char* conv : {"res.reduce.", "res.conv_a.", "res.conv_b."}) zero(store, conv);
    const auto x = uniform({2, 16, 6, 6}, rng, -2, 2);
    Tape<double> tape(false);
    nn::Context<double> ctx(tape, training);
    const auto& y = blk.forward(ctx, tape.constant(x)).value();
    for (std::size_t i = 0; i < x.numel(); ++i) res_bad += y[i] != (x[i] > 0 ? x[i] : 0.0);
  }
  for (const auto act : {nn::Activation::kRelu, nn::Activation::kGelu}) {
    ParamStore<double> store;
    nn::AdapterBlock<double> adp(store, "adp", 16, 16, 4, act, false, rng);
    zero(store, "adp.");
    Tape<double> tape(false);
    nn::Context<double> ctx(tape, true);
    const auto& y = adp.forward(ctx, tape.constant(uniform({2, 16, 4, 4}, rng, -2, 2))).value();
    for (std::size_t i = 0; i < y.numel(); ++i) adp_bad += y[i] != 0.0;
  }

  // Softmax attention per head, written out directly.
  const std::size_t B = 2, N = 12, C = 16, heads = 4, d = C / heads;
  ParamStore<double> store;
  enc::SpatialReductionAttention<double> attn(store, "attn", C, heads, 1, rng);
  for (auto& p : store) p->value = uniform(p->value.shape(), rng, -0.5, 0.5);
  const auto x = uniform({B, N, C}, rng, -1, 1);
  Tape<double> tape(false);
  nn::Context<double> ctx(tape, false);
  const auto& y = attn.forward(ctx, tape.constant(x), enc::TokenMap{3, 4}).value();
  const std::vector<double> xs(x.data(), x.data() + x.numel());
  const auto q = linear_oracle(xs, B * N, attn.q(), C, C);
  const auto k = linear_oracle(xs, B * N, attn.k(), C, C);
  const auto v = linear_oracle(xs, B * N, attn.v(), C, C);
  std::vector<double> o(B * N * C, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < N; ++i) {
        std::vector<double> w(N);
        double z = 0;
        for (std::size_t j = 0; j < N; ++j) {
          double dot = 0;
          for (std::size_t e = 0; e < d; ++e) dot += q[(b * N + i) * C + h * d + e] * k[(b * N + j) * C + h * d + e];
          w[j] = std::exp(dot / std::sqrt(static_cast<double>(d)));
          z += w[j];
        }
        for (std::size_t j = 0; j < N; ++j) {
          for (std::size_t e = 0; e < d; ++e) o[(b * N + i) * C + h * d + e] += w[j] / z * v[(b * N + j) * C + h * d + e];
        }
      }
    }
  }
  const auto ref = linear_oracle(o, B * N, attn.out(), C, C);
  double attn_err = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) attn_err = std::max(attn_err, std::abs(y[i] - ref[i]));

  return {se_bad == 0 && res_bad == 0 && adp_bad == 0 && attn_err <= kAttentionTol,
          fmt("SE 0.5 mismatches %zu; residual != relu(x) %zu (train+eval); adapter nonzero %zu; sr=1 attention max "
              "abs err %.1e (<=%.0e)",
              se_bad, res_bad, adp_bad, attn_err, kAttentionTol)};
}

Outcome overfit() {
  const auto t0 = Clock::now();
  const auto samples = synth(4, 64, 1);
  model::SegModel<float> m(model::tiny_config(model::Variant::kFull));
  train::TrainConfig cfg;
  cfg.augment = false;
  cfg.batch_size = 4;
  train::Trainer<float> trainer(m, cfg);
  const auto batch = data::make_batch<float>(samples, {0, 1, 2, 3});
  double first = 0, best = 1e30, last = 0;
  std::size_t reached = 0;
  for (std::size_t step = 1; step <= kOverfitSteps; ++step) {
    last = trainer.train_step(batch);
    if (step == 1) first = last;
    best = std::min(best, last);
    if (!reached && last < kOverfitLoss) reached = step;
  }
  const double secs = seconds_since(t0);
  return {reached > 0 && secs < kOverfitBudgetSec,
          fmt("tiny full model, 4 samples 64x64, lr %.0e: loss %.4f -> %.4f after %zu steps (min %.4f, target <%.1f%s); "
              "%.1f s",
              cfg.adam.lr, first, last, kOverfitSteps, best, kOverfitLoss,
              reached ? fmt(", reached at step %zu", reached).c_str() : "", secs)};
}

Outcome generalization() {
  const auto t0 = Clock::now();
  auto all = synth(250, 64, 11);
  const std::vector<data::Sample> train_set(all.begin(), all.begin() + 200), val_set(all.begin() + 200, all.end());
  model::SegModel<float> m(model::ModelConfig{});
  train::Trainer<float> trainer(m, train::TrainConfig{});
  train::FitOptions opts;
  opts.on_epoch = [&](const train::EpochRecord& r) {
    std::fprintf(stderr, "  [generalization] epoch %zu train_loss %.4f val_dice %.4f (%.0f s)\n", r.epoch,
                 r.train_loss, r.val_dice, seconds_since(t0));
  };
  const auto r = trainer.fit(train_set, val_set, opts);
  const double secs = seconds_since(t0);
  return {r.best_dice >= kGeneralizationDice && secs < kGeneralizationBudgetSec,
          fmt("full variant, 200 train / 50 held-out 64x64: best val mDice %.4f at epoch %zu of %zu run%s (>=%.2f); "
              "%.0f s",
              r.best_dice, r.best_epoch, r.epochs.size(), r.stopped_early ? " (early stop)" : "",
              kGeneralizationDice, secs)};
}

Outcome ablation_smoke() {
  auto all = synth(80, 64, 21);
  const std::vector<data::Sample> train_set(all.begin(), all.begin() + 64), val_set(all.begin() + 64, all.end());
  std::string detail;
  bool ok = true;
  double base = 0, full = 0;
  for (const auto v : kVariants) {
    try {
      model::SegModel<float> m(default_config(v));
      train::TrainConfig cfg;
      cfg.epochs = 3;
      train::Trainer<float> trainer(m, cfg);
      const auto r = trainer.fit(train_set, val_set);
      bool finite = true;
      for (const auto& e : r.epochs) finite &= std::isfinite(e.train_loss) && std::isfinite(e.val_loss);
      ok &= finite && r.epochs.size() == 3;
      const double dice = r.epochs.back().val_dice;
      if (v == model::Variant::kBase) base = dice;
      if (v == model::Variant::kFull) full = dice;
      detail += fmt("%s %.3f; ", model::variant_name(v).c_str(), dice);
    } catch (const std::exception& e) {
      ok = false;
      detail += model::variant_name(v) + " threw: " + e.what() + "; ";
    }
  }
  detail += full >= base ? "full >= base (soft check holds)" : "full < base (soft check, reported only)";
  return {ok, "3 epochs each, val mDice: " + detail};
}

// Stop epoch computed independently: the first epoch at which `patience`
// consecutive epochs have failed to beat the running best by more than delta.
std::size_t stop_oracle(const std::vector<double>& seq, std::size_t patience, double delta) {
  double best = -1e300;
  std::size_t run = 0;
  for (std::size_t e = 0; e < seq.size(); ++e) {
    if (e == 0 || seq[e] > best + delta) {
      best = seq[e];
      run = 0;
    } else if (++run == patience) {
      return e + 1;
    }
  }
  return 0;
}

std::size_t stop_epoch(const std::vector<double>& seq, std::size_t patience, double delta) {
  train::EarlyStopping es(patience, delta);
  for (std::size_t e = 0; e < seq.size(); ++e) {
    if (es.update(seq[e])) return e + 1;
  }
  return 0;
}

Outcome early_stopping() {
  const std::vector<double> fixed{0.50, 0.60, 0.55, 0.58, 0.60, 0.59, 0.52, 0.99, 0.99};
  const std::size_t fixed_stop = stop_epoch(fixed, kPatience, 1e-4);
  Rng rng(505);
  std::size_t disagreements = 0, stopped = 0;
  for (int k = 0; k < 2000; ++k) {
    std::vector<double> seq(5 + rng.uniform_int(0, 25));
    double level = rng.uniform();
    for (auto& s : seq) {
      level += rng.uniform(-0.05, 0.05);
      s = rng.bernoulli(0.3) ? level : std::round(level * 20) / 20;
    }
    const std::size_t expected = stop_oracle(seq, kPatience, 1e-4);
    disagreements += stop_epoch(seq, kPatience, 1e-4) != expected;
    stopped += expected != 0;
  }
  return {fixed_stop == 7 && disagreements == 0,
          fmt("improving only at epochs 1-2 -> stop after epoch %zu (expected 7); %zu/2000 random sequences disagree "
              "with the patience oracle (%zu of them stop)",
              fixed_stop, disagreements, stopped)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome checkpoint_resume() {
  const fs::path dir = fs::temp_directory_path() / ("pvtadp_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto train_set = synth(10, 32, 31), val_set = synth(4, 32, 32);
  const auto mcfg = model::tiny_config(model::Variant::kFull);
  train::TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  cfg.adam.lr = 1e-3;

  model::SegModel<double> ma(mcfg);
  train::Trainer<double> a(ma, cfg);
  const auto straight = a.fit(train_set, val_set);

  model::SegModel<double> mb(mcfg);
  train::Trainer<double> b(mb, cfg);
  b.run_epoch(train_set, val_set);
  b.run_epoch(train_set, val_set);
  train::save_checkpoint(b.checkpoint(), dir / "a.ckpt");
  train::save_checkpoint(train::load_checkpoint(dir / "a.ckpt"), dir / "b.ckpt");
  const bool bytes_equal = slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt");

  model::SegModel<double> mc(mcfg);
  for (auto& p : mc.params()) p->value.fill(0.5);
  train::Trainer<double> c(mc, cfg);
  c.restore(train::load_checkpoint(dir / "b.ckpt"));
  const auto resumed = c.fit(train_set, val_set);
  fs::remove_all(dir);

  std::size_t loss_diff = 0, param_diff = 0;
  const std::size_t compared = resumed.epochs.size();
  for (std::size_t i = 0; i < compared && i + 2 < straight.epochs.size(); ++i) {
    const auto& x = resumed.epochs[i];
    const auto& y = straight.epochs[i + 2];
    loss_diff += x.train_loss != y.train_loss || x.val_loss != y.val_loss || x.val_dice != y.val_dice;
  }
  for (const auto& p : ma.params()) {
    const auto& q = mc.params().get(p->name);
    for (std::size_t k = 0; k < p->value.numel(); ++k) param_diff += p->value[k] != q.value[k];
  }
  return {bytes_equal && compared == 3 && loss_diff == 0 && param_diff == 0,
          fmt("save/load/save %s; f64 resume at epoch 2: %zu epochs compared, %zu loss mismatches, %zu parameter "
              "mismatches",
              bytes_equal ? "byte-identical" : "DIFFERS", compared, loss_diff, param_diff)};
}

struct Criterion {
  const char* key;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<std::string> only, expect_fail;
  app.add_option("--only", only, "Run only these criteria (by key)");
  app.add_option("--expect-fail", expect_fail,
                 "Criteria known not to be met; their FAIL is reported but does not fail the run");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {"gradients", "gradient correctness (f64 central differences)", gradient_correctness},
      {"losses", "loss identities", loss_identities},
      {"metrics", "metric oracle equivalence", metric_oracle},
      {"shapes", "shape and range contract", shape_and_range},
      {"degeneracies", "block degeneracies", block_degeneracies},
      {"overfit", "overfit one batch", overfit},
      {"generalization", "synthetic generalization", generalization},
      {"ablation", "ablation smoke", ablation_smoke},
      {"early-stopping", "early stopping patience", early_stopping},
      {"checkpoint", "checkpoint round trip and resume", checkpoint_resume},
  };
  for (const auto& k : only) {
    if (std::none_of(criteria.begin(), criteria.end(), [&](const Criterion& c) { return k == c.key; })) {
      std::fprintf(stderr, "unknown criterion '%s'\n", k.c_str());
      return 2;
    }
  }

  int unexpected = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    if (!only.empty() && std::find(only.begin(), only.end(), c.key) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const bool known = std::find(expect_fail.begin(), expect_fail.end(), c.key) != expect_fail.end();
    const char* verdict = o.passed ? "PASS" : (known ? "FAIL (expected, see README)" : "FAIL");
    if (!o.passed && !known) ++unexpected;
    std::printf("[%s] AC%zu %s: %s\n", verdict, i + 1, c.title, o.detail.c_str());
    std::fflush(stdout);
  }
  return unexpected == 0 ? 0 : 1;
}
