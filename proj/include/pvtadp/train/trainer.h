#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"
#include "pvtadp/data/batcher.h"
#include "pvtadp/loss/losses.h"
#include "pvtadp/loss/metrics.h"
#include "pvtadp/model/seg_model.h"
#include "pvtadp/train/checkpoint.h"
#include "pvtadp/train/optim.h"

namespace pvtadp::train {

struct TrainConfig {
  AdamConfig adam;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  std::size_t patience = 5;
  double min_delta = 1e-4;  // on validation mDice
  std::uint64_t seed = 1;
  bool augment = true;
  bool shuffle = true;
  std::size_t image_size = 0;  // 0 keeps the native sample size
  double threshold = 0.5;
  loss::LossConfig loss;

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

// {"model": {...}, "train": {...}}; either section may be absent.
struct RunConfig {
  model::ModelConfig model;
  TrainConfig train;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double val_dice = 0;
  double val_iou = 0;

  nlohmann::ordered_json to_json() const;
};

struct EvalResult {
  double loss = 0;  // mean total loss per sample
  metrics::MetricsReport report;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_dice = 0;
  bool stopped_early = false;
};

struct FitOptions {
  // When set: log.jsonl, last.ckpt and best.ckpt are written here.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const EpochRecord&)> on_epoch;
};

template <typename T>
class Trainer {
 public:
  Trainer(model::SegModel<T>& model, TrainConfig cfg);

  // One optimiser step on a batch; returns the total loss before the update.
  double train_step(const data::Batch<T>& batch);
  EvalResult evaluate(const std::vector<data::Sample>& samples) const;
  // Trains one epoch (the next one) and validates.
  EpochRecord run_epoch(const std::vector<data::Sample>& train, const std::vector<data::Sample>& val);

  // Runs epochs until the budget is spent or early stopping fires. Continues
  // from the current epoch counter, so it also finishes a resumed run.
  TrainResult fit(const std::vector<data::Sample>& train, const std::vector<data::Sample>& val,
                  const FitOptions& opts = {});

  Checkpoint checkpoint() const;
  // Restores parameters, optimiser moments, epoch counter and early-stopping
  // state. Rejects a checkpoint whose model config differs from this model's.
  void restore(const Checkpoint& ckpt);

  std::size_t epoch() const { return epoch_; }
  const Adam<T>& optimizer() const { return adam_; }
  const EarlyStopping& early_stopping() const { return stopper_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  model::SegModel<T>& model_;
  TrainConfig cfg_;
  Adam<T> adam_;
  EarlyStopping stopper_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
};

extern template class Trainer<float>;
extern template class Trainer<double>;

// Copies checkpointed "param/<name>" tensors into a model, checking that the
// config matches and that every parameter is present exactly once with its shape.
template <typename T>
void load_model_params(model::SegModel<T>& model, const Checkpoint& ckpt);

// Model config stored in a checkpoint written by Trainer::checkpoint().
RunConfig checkpoint_run_config(const Checkpoint& ckpt);

}  // namespace pvtadp::train
