#include "pvtadp/train/trainer.h"

#include <fstream>
#include <stdexcept>

#include "pvtadp/core/errors.h"
#include "pvtadp/core/rng.h"

namespace pvtadp::train {

using nlohmann::json;

void TrainConfig::validate() const {
  adam.validate();
  loss.validate();
  if (epochs == 0) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (patience == 0) throw std::invalid_argument("patience must be >= 1");
  if (!(min_delta >= 0)) throw std::invalid_argument("min_delta must be non-negative");
  if (image_size % 16 != 0) throw std::invalid_argument("image_size must be a multiple of 16 (or 0)");
  if (!(threshold >= 0 && threshold <= 1)) throw std::invalid_argument("threshold must be in [0,1]");
}

json TrainConfig::to_json() const {
  return json{{"learning_rate", adam.lr},
              {"beta1", adam.beta1},
              {"beta2", adam.beta2},
              {"adam_eps", adam.eps},
              {"epochs", epochs},
              {"batch_size", batch_size},
              {"patience", patience},
              {"min_delta", min_delta},
              {"seed", seed},
              {"augment", augment},
              {"shuffle", shuffle},
              {"image_size", image_size},
              {"threshold", threshold},
              {"loss_alpha", loss.alpha},
              {"loss_epsilon", loss.epsilon},
              {"w_bce", loss.w_bce},
              {"w_dice", loss.w_dice},
              {"w_jaccard", loss.w_jaccard}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "learning_rate") c.adam.lr = v.get<double>();
    else if (key == "beta1") c.adam.beta1 = v.get<double>();
    else if (key == "beta2") c.adam.beta2 = v.get<double>();
    else if (key == "adam_eps") c.adam.eps = v.get<double>();
    else if (key == "epochs") c.epochs = v.get<std::size_t>();
    else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
    else if (key == "patience") c.patience = v.get<std::size_t>();
    else if (key == "min_delta") c.min_delta = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "augment") c.augment = v.get<bool>();
    else if (key == "shuffle") c.shuffle = v.get<bool>();
    else if (key == "image_size") c.image_size = v.get<std::size_t>();
    else if (key == "threshold") c.threshold = v.get<double>();
    else if (key == "loss_alpha") c.loss.alpha = v.get<double>();
    else if (key == "loss_epsilon") c.loss.epsilon = v.get<double>();
    else if (key == "w_bce") c.loss.w_bce = v.get<double>();
    else if (key == "w_dice") c.loss.w_dice = v.get<double>();
    else if (key == "w_jaccard") c.loss.w_jaccard = v.get<double>();
    else throw std::invalid_argument("unknown train config key '" + key + "'");
  }
  c.validate();
  return c;
}

json RunConfig::to_json() const { return json{{"model", model.to_json()}, {"train", train.to_json()}}; }

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "model") c.model = model::ModelConfig::from_json(v);
    else if (key == "train") c.train = TrainConfig::from_json(v);
    else throw std::invalid_argument("unknown config section '" + key + "' (expected model, train)");
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

nlohmann::ordered_json EpochRecord::to_json() const {
  return {{"epoch", epoch}, {"train_loss", train_loss}, {"val_loss", val_loss}, {"val_dice", val_dice}, {"val_iou", val_iou}};
}

namespace {

template <typename T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::kF32 : DType::kF64;
}

template <typename T>
CheckpointTensor to_entry(const std::string& name, const Tensor<T>& t) {
  return {name, dtype_of<T>(), t.shape(), std::vector<double>(t.data(), t.data() + t.numel())};
}

template <typename T>
void from_entry(const CheckpointTensor& e, Tensor<T>& dst) {
  if (e.shape != dst.shape()) {
    throw ShapeError("checkpoint tensor " + e.name + " has shape " + to_string(e.shape) + ", expected " +
                     to_string(dst.shape()));
  }
  for (std::size_t i = 0; i < e.values.size(); ++i) dst[i] = static_cast<T>(e.values[i]);
}

json parse_blob(const Checkpoint& ckpt) {
  try {
    return json::parse(ckpt.config);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
}

const CheckpointTensor& require(const Checkpoint& ckpt, const std::string& name) {
  const auto* e = ckpt.find(name);
  if (!e) throw FormatError("checkpoint is missing tensor " + name);
  return *e;
}

}  // namespace

RunConfig checkpoint_run_config(const Checkpoint& ckpt) {
  const json blob = parse_blob(ckpt);
  if (!blob.is_object() || !blob.contains("model")) throw FormatError("checkpoint config has no model section");
  RunConfig rc;
  rc.model = model::ModelConfig::from_json(blob.at("model"));
  if (blob.contains("train")) rc.train = TrainConfig::from_json(blob.at("train"));
  return rc;
}

template <typename T>
void load_model_params(model::SegModel<T>& model, const Checkpoint& ckpt) {
  const RunConfig rc = checkpoint_run_config(ckpt);
  if (rc.model.to_json() != model.config().to_json()) {
    throw ShapeError("checkpoint model config " + rc.model.to_json().dump() + " does not match " +
                     model.config().to_json().dump());
  }
  std::size_t found = 0;
  for (const auto& t : ckpt.tensors) {
    if (t.name.rfind("param/", 0) != 0) continue;
    Parameter<T>* p = model.params().find(t.name.substr(6));
    if (!p) throw ShapeError("checkpoint has unknown parameter " + t.name.substr(6));
    ++found;
  }
  for (auto& p : model.params()) from_entry(require(ckpt, "param/" + p->name), p->value);
  if (found != model.params().size()) throw ShapeError("checkpoint parameter set does not match the model");
}

template <typename T>
Trainer<T>::Trainer(model::SegModel<T>& model, TrainConfig cfg)
    : model_(model), cfg_((cfg.validate(), cfg)), adam_(model.params(), cfg.adam), stopper_(cfg.patience, cfg.min_delta) {}

template <typename T>
double Trainer<T>::train_step(const data::Batch<T>& batch) {
  model_.params().zero_grad();
  Tape<T> tape;
  const Var<T> x = tape.constant(batch.images);
  const Var<T> out = model_.forward(tape, x, true);
  const auto terms = loss::total_loss(out, batch.masks, cfg_.loss);
  const double value = static_cast<double>(terms.total.value().item());
  tape.backward(terms.total);
  adam_.step();
  return value;
}

template <typename T>
EvalResult Trainer<T>::evaluate(const std::vector<data::Sample>& samples) const {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  const data::Batcher batcher(samples.size(), cfg_.batch_size, 0, false);
  EvalResult r;
  double loss_sum = 0;
  for (const auto& idx : batcher.epoch(0)) {
    const auto batch = data::make_batch<T>(samples, idx);
    Tape<T> tape(false);
    const Var<T> out = model_.forward(tape, tape.constant(batch.images), false);
    const auto terms = loss::total_loss(out, batch.masks, cfg_.loss);
    loss_sum += static_cast<double>(terms.total.value().item()) * static_cast<double>(idx.size());
    r.report.append(metrics::evaluate_batch(out.value(), batch.masks, cfg_.threshold));
  }
  r.loss = loss_sum / static_cast<double>(samples.size());
  return r;
}

template <typename T>
EpochRecord Trainer<T>::run_epoch(const std::vector<data::Sample>& train, const std::vector<data::Sample>& val) {
  if (train.empty() || val.empty()) throw std::invalid_argument("train: train and val splits must be non-empty");
  const std::size_t e = epoch_ + 1;
  const data::Batcher batcher(train.size(), cfg_.batch_size, cfg_.seed, cfg_.shuffle);
  const std::uint64_t aug_base = mix_seed(mix_seed(cfg_.seed, 0x617567), e);
  double loss_sum = 0;
  std::size_t b = 0;
  for (const auto& idx : batcher.epoch(e)) {
    std::optional<std::uint64_t> aug;
    if (cfg_.augment) aug = mix_seed(aug_base, b);
    loss_sum += train_step(data::make_batch<T>(train, idx, aug)) * static_cast<double>(idx.size());
    ++b;
  }
  const EvalResult ev = evaluate(val);
  EpochRecord rec{e, loss_sum / static_cast<double>(train.size()), ev.loss, ev.report.mdice(), ev.report.miou()};
  epoch_ = e;
  stopper_.update(rec.val_dice);
  if (stopper_.improved()) best_epoch_ = e;
  return rec;
}

template <typename T>
TrainResult Trainer<T>::fit(const std::vector<data::Sample>& train, const std::vector<data::Sample>& val,
                            const FitOptions& opts) {
  std::ofstream log;
  if (opts.out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*opts.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + opts.out_dir->string() + ": " + ec.message());
    const auto path = *opts.out_dir / "log.jsonl";
    log.open(path, epoch_ == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot write " + path.string());
  }
  TrainResult result;
  while (epoch_ < cfg_.epochs && !stopper_.should_stop()) {
    const EpochRecord rec = run_epoch(train, val);
    result.epochs.push_back(rec);
    if (opts.out_dir) {
      log << rec.to_json().dump() << "\n" << std::flush;
      const Checkpoint ckpt = checkpoint();
      save_checkpoint(ckpt, *opts.out_dir / "last.ckpt");
      if (stopper_.improved()) save_checkpoint(ckpt, *opts.out_dir / "best.ckpt");
    }
    if (opts.on_epoch) opts.on_epoch(rec);
  }
  result.best_epoch = best_epoch_;
  result.best_dice = stopper_.has_best() ? stopper_.best() : 0.0;
  result.stopped_early = stopper_.should_stop();
  return result;
}

template <typename T>
Checkpoint Trainer<T>::checkpoint() const {
  json blob = RunConfig{model_.config(), cfg_}.to_json();
  blob["state"] = json{{"epoch", epoch_},
                       {"best_epoch", best_epoch_},
                       {"has_best", stopper_.has_best()},
                       {"best_dice", stopper_.best()},
                       {"bad_epochs", stopper_.bad_epochs()},
                       {"adam_step", adam_.steps()}};
  Checkpoint ckpt;
  ckpt.config = blob.dump();
  auto& adam = const_cast<Adam<T>&>(adam_);
  for (const auto& p : model_.params()) ckpt.tensors.push_back(to_entry("param/" + p->name, p->value));
  for (const auto& p : model_.params()) {
    if (!p->trainable) continue;
    ckpt.tensors.push_back(to_entry("adam.m/" + p->name, adam.first_moment(p->name)));
    ckpt.tensors.push_back(to_entry("adam.v/" + p->name, adam.second_moment(p->name)));
  }
  return ckpt;
}

template <typename T>
void Trainer<T>::restore(const Checkpoint& ckpt) {
  load_model_params(model_, ckpt);
  for (auto& p : model_.params()) {
    if (!p->trainable) continue;
    from_entry(require(ckpt, "adam.m/" + p->name), adam_.first_moment(p->name));
    from_entry(require(ckpt, "adam.v/" + p->name), adam_.second_moment(p->name));
  }
  const json blob = parse_blob(ckpt);
  if (!blob.contains("state")) throw FormatError("checkpoint has no training state");
  const json& s = blob.at("state");
  try {
    epoch_ = s.at("epoch").get<std::size_t>();
    best_epoch_ = s.at("best_epoch").get<std::size_t>();
    stopper_.restore(s.at("has_best").get<bool>(), s.at("best_dice").get<double>(),
                     s.at("bad_epochs").get<std::size_t>());
    adam_.set_steps(s.at("adam_step").get<std::uint64_t>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint training state is malformed: ") + e.what());
  }
}

template class Trainer<float>;
template class Trainer<double>;
template void load_model_params<float>(model::SegModel<float>&, const Checkpoint&);
template void load_model_params<double>(model::SegModel<double>&, const Checkpoint&);

}  // namespace pvtadp::train
