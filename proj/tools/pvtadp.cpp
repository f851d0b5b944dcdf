#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "pvtadp/core/errors.h"
#include "pvtadp/data/dataset.h"
#include "pvtadp/data/synthetic.h"
#include "pvtadp/loss/metrics.h"
#include "pvtadp/model/seg_model.h"
#include "pvtadp/train/checkpoint.h"
#include "pvtadp/train/trainer.h"
#include "pvtadp/verify/invariants.h"
#include "pvtadp/verify/suites.h"

namespace fs = std::filesystem;
using namespace pvtadp;

namespace {

struct GenArgs {
  fs::path out;
  std::size_t count = 100;
  std::size_t size = 64;
  std::uint64_t seed = 1;
};

struct TrainArgs {
  fs::path data, out;
  std::optional<fs::path> config;
  std::optional<std::string> variant;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size, image_size, patience;
  std::optional<double> lr;
  bool no_augment = false;
  std::string precision = "f32";
  std::uint64_t split_seed = 0;
};

struct EvalArgs {
  fs::path data;
  std::optional<fs::path> ckpt, pred_dir, report;
  std::string split = "test";
  std::uint64_t split_seed = 0;
  double threshold = 0.5;
};

struct InferArgs {
  fs::path ckpt, image, out_mask;
  double threshold = 0.5;
};

struct CheckArgs {
  std::string suite = "all";
  std::string filter;
};

data::DatasetIndex split_dataset(const fs::path& root, std::uint64_t split_seed) {
  auto index = data::scan_dataset(root);
  data::assign_splits(index, {}, split_seed);
  return index;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

train::DType stored_dtype(const train::Checkpoint& ckpt) {
  for (const auto& t : ckpt.tensors) {
    if (t.name.rfind("param/", 0) == 0) return t.dtype;
  }
  throw FormatError("checkpoint holds no parameters");
}

int cmd_gen_data(const GenArgs& a) {
  data::SynthSpec spec;
  spec.count = a.count;
  spec.size = a.size;
  spec.seed = a.seed;
  spec.validate();
  const auto index = data::generate_synthetic(spec, a.out);
  std::cout << "wrote " << index.pairs.size() << " pairs to " << a.out.string() << "\n";
  return 0;
}

template <typename T>
int run_training(const train::RunConfig& rc, const TrainArgs& a) {
  const auto index = split_dataset(a.data, a.split_seed);
  const std::size_t s = rc.train.image_size;
  const auto train_set = data::load_split(index, data::Split::kTrain, s, s);
  const auto val_set = data::load_split(index, data::Split::kVal, s, s);
  if (train_set.empty() || val_set.empty()) {
    throw std::invalid_argument("dataset too small: train and val splits must both be non-empty");
  }
  fs::create_directories(a.out);
  write_text(a.out / "config.json", rc.to_json().dump(2) + "\n");

  model::SegModel<T> net(rc.model);
  train::Trainer<T> trainer(net, rc.train);
  std::cout << model::variant_name(rc.model.variant) << ": " << net.param_count() << " parameters, "
            << train_set.size() << " train / " << val_set.size() << " val samples\n";
  train::FitOptions opts;
  opts.out_dir = a.out;
  opts.on_epoch = [](const train::EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %3zu  train_loss %.4f  val_loss %.4f  val_dice %.4f  val_iou %.4f\n",
                  r.epoch, r.train_loss, r.val_loss, r.val_dice, r.val_iou);
    std::cout << line << std::flush;
  };
  const auto result = trainer.fit(train_set, val_set, opts);
  std::cout << "best val mDice " << result.best_dice << " at epoch " << result.best_epoch
            << (result.stopped_early ? " (early stop)" : "") << "\n";
  return 0;
}

int cmd_train(const TrainArgs& a) {
  train::RunConfig rc = a.config ? train::RunConfig::load(*a.config) : train::RunConfig{};
  if (a.variant) rc.model.variant = model::parse_variant(*a.variant);
  if (a.seed) {
    rc.model.seed = *a.seed;
    rc.train.seed = *a.seed;
  }
  if (a.epochs) rc.train.epochs = *a.epochs;
  if (a.batch_size) rc.train.batch_size = *a.batch_size;
  if (a.image_size) rc.train.image_size = *a.image_size;
  if (a.patience) rc.train.patience = *a.patience;
  if (a.lr) rc.train.adam.lr = *a.lr;
  if (a.no_augment) rc.train.augment = false;
  rc.model.validate();
  rc.train.validate();
  return a.precision == "f64" ? run_training<double>(rc, a) : run_training<float>(rc, a);
}

template <typename T>
metrics::MetricsReport eval_checkpoint(const train::Checkpoint& ckpt, const std::vector<data::Sample>& samples,
                                       double threshold) {
  auto rc = train::checkpoint_run_config(ckpt);
  model::SegModel<T> net(rc.model);
  train::load_model_params(net, ckpt);
  rc.train.threshold = threshold;
  const train::Trainer<T> trainer(net, rc.train);
  return trainer.evaluate(samples).report;
}

int cmd_eval(const EvalArgs& a) {
  if (a.ckpt.has_value() == a.pred_dir.has_value()) {
    throw std::invalid_argument("give exactly one of --ckpt or --pred-dir");
  }
  const auto index = split_dataset(a.data, a.split_seed);
  std::vector<std::size_t> picked;
  if (a.split == "all") {
    for (std::size_t i = 0; i < index.pairs.size(); ++i) picked.push_back(i);
  } else {
    picked = index.indices(data::parse_split(a.split));
  }
  if (picked.empty()) throw std::invalid_argument("split '" + a.split + "' is empty");

  metrics::MetricsReport report;
  if (a.ckpt) {
    const auto ckpt = train::load_checkpoint(*a.ckpt);
    const std::size_t s = train::checkpoint_run_config(ckpt).train.image_size;
    std::vector<data::Sample> samples;
    for (const auto i : picked) samples.push_back(data::load_sample(index.pairs[i], s, s));
    report = stored_dtype(ckpt) == train::DType::kF64 ? eval_checkpoint<double>(ckpt, samples, a.threshold)
                                                      : eval_checkpoint<float>(ckpt, samples, a.threshold);
  } else {
    for (const auto i : picked) {
      const auto& p = index.pairs[i];
      const auto truth = data::load_sample(p).mask;
      const auto pred = data::mask_to_tensor(data::read_netpbm(*a.pred_dir / (p.stem + ".pgm")));
      if (pred.shape() != truth.shape()) throw ShapeError(p.stem + ": prediction and mask sizes differ");
      Shape batched{1, 1, truth.dim(1), truth.dim(2)};
      report.append(metrics::evaluate_batch(pred.reshaped(batched), truth.reshaped(batched), a.threshold));
    }
  }
  const std::string text = report.to_json().dump(2) + "\n";
  if (a.report) {
    write_text(*a.report, text);
    char line[160];
    std::snprintf(line, sizeof line, "%zu images  mDice %.4f  mIoU %.4f  recall %.4f  precision %.4f  F2 %.4f\n",
                  report.per_image.size(), report.mdice(), report.miou(), report.mrecall(), report.mprecision(),
                  report.mf2());
    std::cout << line;
  } else {
    std::cout << text;
  }
  return 0;
}

template <typename T>
Tensor<float> infer_probs(const train::Checkpoint& ckpt, const Tensor<float>& image) {
  const auto rc = train::checkpoint_run_config(ckpt);
  model::SegModel<T> net(rc.model);
  train::load_model_params(net, ckpt);
  Tensor<T> x({1, image.dim(0), image.dim(1), image.dim(2)});
  for (std::size_t i = 0; i < image.numel(); ++i) x[i] = static_cast<T>(image[i]);
  const auto y = net.predict(x);
  Tensor<float> out({1, image.dim(1), image.dim(2)});
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = static_cast<float>(y[i]);
  return out;
}

int cmd_infer(const InferArgs& a) {
  if (!(a.threshold >= 0.0 && a.threshold <= 1.0)) throw std::invalid_argument("--threshold must be in [0,1]");
  const auto img = data::read_netpbm(a.image);
  if (img.width % 16 != 0 || img.height % 16 != 0) {
    const auto up = [](std::size_t v) { return (v + 15) / 16 * 16; };
    throw std::invalid_argument(a.image.string() + ": " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                " is not divisible by 16; pad or resize it to " + std::to_string(up(img.width)) + "x" +
                                std::to_string(up(img.height)) + " first");
  }
  const auto ckpt = train::load_checkpoint(a.ckpt);
  const auto image = data::image_to_tensor(img);
  const auto probs = stored_dtype(ckpt) == train::DType::kF64 ? infer_probs<double>(ckpt, image)
                                                              : infer_probs<float>(ckpt, image);
  Tensor<float> mask(probs.shape());
  std::size_t fg = 0;
  for (std::size_t i = 0; i < probs.numel(); ++i) {
    mask[i] = probs[i] >= a.threshold ? 1.0f : 0.0f;
    fg += mask[i] != 0.0f;
  }
  if (a.out_mask.has_parent_path()) fs::create_directories(a.out_mask.parent_path());
  data::write_netpbm(a.out_mask, data::mask_to_image(mask));
  std::cout << a.out_mask.string() << ": " << img.width << "x" << img.height << ", " << fg << " foreground pixels\n";
  return 0;
}

bool run_gradchecks(const CheckArgs& a) {
  std::vector<verify::GradCase> cases;
  if (a.suite == "primitive" || a.suite == "all") {
    for (auto& c : verify::primitive_op_cases()) cases.push_back(std::move(c));
  }
  if (a.suite == "composite" || a.suite == "all") {
    for (auto& c : verify::composite_cases()) cases.push_back(std::move(c));
  }
  if (!a.filter.empty()) {
    std::erase_if(cases, [&](const verify::GradCase& c) { return c.name.find(a.filter) == std::string::npos; });
    if (cases.empty()) throw std::invalid_argument("no gradient check matches '" + a.filter + "'");
  }
  const auto summary = verify::run_cases(cases, &std::cout);
  std::size_t failed = 0;
  for (const auto& r : summary.results) failed += !r.passed;
  std::cout << "gradcheck: " << summary.results.size() - failed << "/" << summary.results.size() << " passed in "
            << summary.seconds << " s\n";
  return summary.all_passed;
}

int cmd_gradcheck(const CheckArgs& a) { return run_gradchecks(a) ? 0 : 1; }

int cmd_selftest() {
  const auto start = std::chrono::steady_clock::now();
  std::cout << "== invariants\n";
  const auto inv = verify::run_invariants(verify::invariant_cases(), &std::cout);
  std::cout << "invariants: " << inv.passed << "/" << inv.passed + inv.failed << " passed\n";
  std::cout << "== gradient checks\n";
  const bool grads = run_gradchecks(CheckArgs{});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = inv.all_passed() && grads;
  std::cout << "selftest " << (ok ? "PASSED" : "FAILED") << " in " << secs << " s\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PVTAdpNet polyp segmentation: data generation, training, evaluation and inference"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic image/mask dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--count", gen.count, "Number of image/mask pairs");
  gen_cmd->add_option("--size", gen.size, "Square image size (multiple of 16)");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes log.jsonl, last.ckpt and best.ckpt");
  train_cmd->add_option("--data", tr.data, "Dataset directory (images/, masks/)")->required();
  train_cmd->add_option("--out", tr.out, "Run directory")->required();
  train_cmd->add_option("--config", tr.config, "JSON config with optional model/train sections");
  train_cmd->add_option("--variant", tr.variant, "base, dsenc, dsencres or full")
      ->check(CLI::IsMember({"base", "dsenc", "dsencres", "full"}));
  train_cmd->add_option("--seed", tr.seed, "Seed for initialisation, shuffling and augmentation");
  train_cmd->add_option("--epochs", tr.epochs, "Epoch budget");
  train_cmd->add_option("--batch-size", tr.batch_size, "Batch size");
  train_cmd->add_option("--lr", tr.lr, "Adam learning rate");
  train_cmd->add_option("--image-size", tr.image_size, "Resize samples to this square size (0 = native)");
  train_cmd->add_option("--patience", tr.patience, "Early-stopping patience in epochs");
  train_cmd->add_flag("--no-augment", tr.no_augment, "Disable augmentation");
  train_cmd->add_option("--precision", tr.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  train_cmd->add_option("--split-seed", tr.split_seed, "Seed of the train/val/test assignment");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint (or stored predictions) on a split");
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  auto* ckpt_opt = eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint to evaluate");
  eval_cmd->add_option("--pred-dir", ev.pred_dir, "Directory of predicted <stem>.pgm masks")->excludes(ckpt_opt);
  eval_cmd->add_option("--split", ev.split, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  eval_cmd->add_option("--split-seed", ev.split_seed, "Seed of the train/val/test assignment");
  eval_cmd->add_option("--report", ev.report, "Write the JSON report here instead of stdout");
  eval_cmd->add_option("--threshold", ev.threshold, "Binarisation threshold")->check(CLI::Range(0.0, 1.0));

  InferArgs inf;
  auto* infer_cmd = app.add_subcommand("infer", "Predict a binary mask for one image");
  infer_cmd->add_option("--ckpt", inf.ckpt, "Checkpoint")->required();
  infer_cmd->add_option("--image", inf.image, "PPM or PGM image")->required();
  infer_cmd->add_option("--out-mask", inf.out_mask, "Output PGM mask")->required();
  infer_cmd->add_option("--threshold", inf.threshold, "Binarisation threshold");

  CheckArgs gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad_cmd->add_option("--suite", gc.suite, "primitive, composite or all")
      ->check(CLI::IsMember({"primitive", "composite", "all"}));
  grad_cmd->add_option("--filter", gc.filter, "Only cases whose name contains this");

  auto* self_cmd = app.add_subcommand("selftest", "Invariant suite plus all gradient checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(tr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*infer_cmd) return cmd_infer(inf);
    if (*grad_cmd) return cmd_gradcheck(gc);
    if (*self_cmd) return cmd_selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
