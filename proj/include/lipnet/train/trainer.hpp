#pragma once

#include <chrono>
#include <concepts>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <string>
#include <vector>

#include "lipnet/data/loader.hpp"
#include "lipnet/eval/metrics.hpp"
#include "lipnet/train/loss.hpp"
#include "lipnet/train/optim.hpp"
#include "lipnet/zoo/checkpoint.hpp"
#include "lipnet/zoo/network.hpp"

namespace lipnet::train {

using zoo::Network;

struct TrainConfig {
  std::size_t batch = 16;
  std::size_t max_epochs = 20;  // also the schedule's epoch budget
  double lr_initial = 5e-3;
  double lr_final = 5e-5;
  double momentum = 0.9;
  LossMode loss = LossMode::every_step;
  std::size_t patience = 3;
  bool early_stop = true;
  bool augment = true;
  // Put back the weights of the best validation epoch when the run ends.
  bool restore_best = true;
  std::uint64_t seed = 0;
  std::string stage = "1";

  LrSchedule schedule() const { return {lr_initial, lr_final, max_epochs}; }
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::string stage;
  double lr = 0, train_loss = 0, val_top1 = 0, val_top5 = 0, val_top10 = 0, seconds = 0;
};

/// One CSV row per epoch: epoch,stage,lr,train_loss,val_top1,val_top5,val_top10,seconds
class CsvLog {
 public:
  CsvLog() = default;
  explicit CsvLog(const std::filesystem::path& path, bool append = false) {
    const bool fresh = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw DataError("cannot write training log " + path.string());
    if (fresh) out_ << "epoch,stage,lr,train_loss,val_top1,val_top5,val_top10,seconds\n";
  }

  void row(const EpochRecord& r) {
    if (!out_.is_open()) return;
    out_ << r.epoch << ',' << r.stage << ',' << std::setprecision(6) << r.lr << ',' << std::setprecision(8)
         << r.train_loss << ',' << r.val_top1 << ',' << r.val_top5 << ',' << r.val_top10 << ','
         << std::setprecision(4) << r.seconds << '\n'
         << std::flush;
  }

 private:
  std::ofstream out_;
};

struct EvalSummary {
  eval::ScoreMatrix scores;
  double top1 = 0, top5 = 0, top10 = 0;
};

template <std::floating_point T>
Tensor<T> cast_batch(const Tensor<float>& x) {
  if constexpr (std::same_as<T, float>) {
    return x;
  } else {
    return x.template cast<T>();
  }
}

/// Scores a split in eval mode with centre crops; fixed order.
template <std::floating_point T>
EvalSummary evaluate(Network<T>& net, data::Dataset& ds, const std::string& split, std::size_t batch = 16) {
  if (ds.size(split) == 0) throw ConfigError("evaluation split '" + split + "' is empty");
  EvalSummary out;
  out.scores.V = net.config().V;
  for (const auto& idx : ds.plan(split, batch, nullptr)) {
    const data::Batch b = ds.make_batch(split, idx, nullptr);
    const Tensor<T> logits = net.infer(cast_batch<T>(b.clips));
    eval::append_scores(out.scores, logits.template cast<float>(), b.labels, b.ids);
  }
  out.top1 = eval::topn_clamped(out.scores, 1);
  out.top5 = eval::topn_clamped(out.scores, 5);
  out.top10 = eval::topn_clamped(out.scores, 10);
  return out;
}

/// One SGD step on a batch; returns the loss value.
template <std::floating_point T>
double train_step(Network<T>& net, Sgd<T>& opt, const Tensor<T>& clips, const std::vector<std::uint32_t>& labels,
                  double lr, LossMode mode) {
  const nn::BlobList<T> blobs = net.blobs();
  Sgd<T>::zero_grad(blobs);
  Tape<T> tape;
  const Var<T> logits = net.forward(tape.constant(clips), nn::Mode::train);
  const Var<T> loss = aggregated_loss<T>(logits, labels, mode);
  const double value = static_cast<double>(loss.value().item());
  if (!std::isfinite(value)) throw NumericError("training loss is not finite");
  tape.backward(loss);
  opt.step(blobs, lr);
  return value;
}

/// One shuffled, augmented pass over the training split. Returns the mean
/// per-clip loss.
template <std::floating_point T>
double train_epoch(Network<T>& net, data::Dataset& ds, Sgd<T>& opt, double lr, nn::Rng& rng, const TrainConfig& cfg) {
  if (cfg.batch < 2) throw ConfigError("batch size must be at least 2 (train-mode batch normalization)");
  if (ds.size("train") == 0) throw ConfigError("training split is empty");
  double sum = 0;
  std::size_t clips = 0;
  for (const auto& idx : ds.plan("train", cfg.batch, &rng)) {
    const data::Batch b = ds.make_batch("train", idx, cfg.augment ? &rng : nullptr);
    double loss = 0;
    try {
      loss = train_step(net, opt, cast_batch<T>(b.clips), b.labels, lr, cfg.loss);
    } catch (const NumericError& e) {
      std::string ids;
      for (const auto& id : b.ids) ids += (ids.empty() ? "" : ",") + id;
      throw NumericError(std::string(e.what()) + " (stage " + cfg.stage + ", lr " + std::to_string(lr) +
                         ", batch " + ids + ")");
    }
    sum += loss * static_cast<double>(b.size());
    clips += b.size();
  }
  if (clips == 0) throw ConfigError("training split yields no batch of at least 2 clips");
  return sum / static_cast<double>(clips);
}

struct RunResult {
  std::vector<EpochRecord> epochs;
  double best_val_top1 = 0;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

/// Epoch loop with the geometric schedule, per-epoch validation and early
/// stopping on validation top-1.
template <std::floating_point T>
RunResult train_run(Network<T>& net, data::Dataset& ds, const TrainConfig& cfg, CsvLog* log = nullptr,
                    const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (ds.size("val") == 0) throw ConfigError("validation split is empty");
  if (net.config().T != ds.frames() || net.config().H != ds.crop() || net.config().V != ds.vocab_size()) {
    throw ConfigError("network expects " + std::to_string(net.config().T) + " frames of " +
                      std::to_string(net.config().H) + " px over " + std::to_string(net.config().V) +
                      " words; dataset provides " + std::to_string(ds.frames()) + " of " + std::to_string(ds.crop()) +
                      " over " + std::to_string(ds.vocab_size()));
  }
  const LrSchedule sched = cfg.schedule();
  sched.validate();
  Sgd<T> opt(cfg.momentum);
  nn::Rng rng(cfg.seed);
  EarlyStop stop{cfg.patience};
  RunResult res;
  std::vector<Tensor<T>> best;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord r;
    r.epoch = epoch;
    r.stage = cfg.stage;
    r.lr = lr_at(sched, epoch);
    r.train_loss = train_epoch(net, ds, opt, r.lr, rng, cfg);
    const EvalSummary ev = evaluate(net, ds, "val", cfg.batch);
    r.val_top1 = ev.top1;
    r.val_top5 = ev.top5;
    r.val_top10 = ev.top10;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.epochs.push_back(r);
    if (log) log->row(r);
    if (on_epoch) on_epoch(r);
    if (epoch == 0 || r.val_top1 > res.best_val_top1) {
      res.best_val_top1 = r.val_top1;
      res.best_epoch = epoch;
      if (cfg.restore_best) {
        best.clear();
        for (const auto& b : net.blobs()) best.push_back(*b.value);
      }
    }
    if (cfg.early_stop && stop.update(r.val_top1)) {
      res.stopped_early = true;
      break;
    }
  }
  if (cfg.restore_best && !best.empty()) {
    auto blobs = net.blobs();
    for (std::size_t i = 0; i < blobs.size(); ++i) *blobs[i].value = best[i];
  }
  return res;
}

struct StagedConfig {
  zoo::ModelConfig model;
  zoo::Variant final = zoo::Variant::N7;  // N6 or N7
  TrainConfig stage1{};
  TrainConfig stage2{.max_epochs = 5, .lr_initial = 5e-4, .early_stop = false, .stage = "2"};
  TrainConfig stage3{.lr_initial = 5e-4, .stage = "3"};
  std::filesystem::path out_dir = ".";
  std::uint64_t seed = 0;
};

struct StagedResult {
  std::filesystem::path checkpoints[3];
  RunResult runs[3];
};

inline std::filesystem::path stage_checkpoint_path(const std::filesystem::path& dir, int stage) {
  return dir / ("stage" + std::to_string(stage) + ".ckpt");
}

/// Stage 1: N2 (3D front-end, ResNet, temporal-conv back-end) to early stop.
inline RunResult run_stage1(data::Dataset& ds, const StagedConfig& sc, CsvLog* log) {
  Network<float> net(zoo::Variant::N2, sc.model, sc.seed);
  TrainConfig cfg = sc.stage1;
  cfg.seed = sc.seed * 3 + 1;
  cfg.stage = "1";
  RunResult r = train_run(net, ds, cfg, log);
  zoo::save_checkpoint(net, stage_checkpoint_path(sc.out_dir, 1), {r.epochs.size(), "1", r.best_val_top1});
  return r;
}

/// Stage 2: two-layer Bi-LSTM (add merge) on the stage-1 front-end and
/// trunk, which stay frozen; exactly stage2.max_epochs epochs.
inline RunResult run_stage2(data::Dataset& ds, const StagedConfig& sc, CsvLog* log) {
  const zoo::Checkpoint ck = zoo::read_checkpoint(stage_checkpoint_path(sc.out_dir, 1));
  if (zoo::parse_variant(ck.variant) != zoo::Variant::N2) {
    throw ConfigError("stage 2 starts from an N2 checkpoint, got " + ck.variant);
  }
  Network<float> net(zoo::Variant::N5, ck.config, sc.seed + 1);
  const zoo::LoadReport rep = zoo::load_into(net, ck, zoo::LoadMode::partial);
  if (rep.loaded.size() != net.front_blobs().size()) {
    throw FormatError("stage-1 checkpoint does not cover the front-end and trunk");
  }
  net.set_front_frozen(true);
  TrainConfig cfg = sc.stage2;
  cfg.early_stop = false;
  cfg.seed = sc.seed * 3 + 2;
  cfg.stage = "2";
  RunResult r = train_run(net, ds, cfg, log);
  zoo::save_checkpoint(net, stage_checkpoint_path(sc.out_dir, 2), {r.epochs.size(), "2", r.best_val_top1});
  return r;
}

/// Stage 3: everything trainable, to early stop.
inline RunResult run_stage3(data::Dataset& ds, const StagedConfig& sc, CsvLog* log) {
  if (sc.final != zoo::Variant::N6 && sc.final != zoo::Variant::N7) throw ConfigError("stage 3 builds N6 or N7");
  zoo::Checkpoint ck = zoo::read_checkpoint(stage_checkpoint_path(sc.out_dir, 2));
  Network<float> net(sc.final, ck.config, sc.seed + 2);
  if (sc.final == zoo::Variant::N7) {
    zoo::widen_classifier_for_concat(ck);
    const zoo::LoadReport rep = zoo::load_into(net, ck, zoo::LoadMode::partial);
    if (!rep.fresh.empty() || !rep.ignored.empty()) throw FormatError("stage-2 checkpoint does not match N7");
  } else {
    zoo::load_into(net, ck, zoo::LoadMode::strict);
  }
  net.set_front_frozen(false);
  TrainConfig cfg = sc.stage3;
  cfg.seed = sc.seed * 3 + 3;
  cfg.stage = "3";
  RunResult r = train_run(net, ds, cfg, log);
  zoo::save_checkpoint(net, stage_checkpoint_path(sc.out_dir, 3), {r.epochs.size(), "3", r.best_val_top1});
  return r;
}

/// Three-stage protocol; writes stage1/2/3.ckpt into out_dir.
inline StagedResult staged_train(data::Dataset& ds, const StagedConfig& sc, CsvLog* log = nullptr) {
  std::filesystem::create_directories(sc.out_dir);
  StagedResult res;
  res.runs[0] = run_stage1(ds, sc, log);
  res.runs[1] = run_stage2(ds, sc, log);
  res.runs[2] = run_stage3(ds, sc, log);
  for (int s = 0; s < 3; ++s) res.checkpoints[s] = stage_checkpoint_path(sc.out_dir, s + 1);
  return res;
}

/// Reduced model sized to a dataset (frame count, crop, vocabulary).
inline zoo::ModelConfig desk_config_for(const data::Dataset& ds) {
  return zoo::ModelConfig::desk(ds.frames(), ds.crop(), ds.vocab_size());
}

/// Full-size model with the dataset's frame count, crop and vocabulary.
inline zoo::ModelConfig full_config_for(const data::Dataset& ds) {
  zoo::ModelConfig c;
  c.T = ds.frames();
  c.H = c.W = ds.crop();
  c.V = ds.vocab_size();
  return c;
}

}  // namespace lipnet::train
