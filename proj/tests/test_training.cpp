#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

#include "lipnet/data/synthetic.hpp"
#include "lipnet/gradcheck_suite.hpp"
#include "lipnet/train/trainer.hpp"
#include "test_util.hpp"

using namespace lipnet;
using namespace lipnet::train;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lipnet_train_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 4 words, 10/1/1 clips each, 8 frames of 26 px (16 px crops).
fs::path tiny_dataset(const std::string& name) {
  const fs::path dir = fresh_dir(name);
  data::SyntheticSpec s;
  s.vocab = 4;
  s.clips_per_word = 12;
  s.T = 8;
  s.size = 26;
  s.seed = 2;
  data::gen_synthetic(s, dir);
  return dir;
}

zoo::ModelConfig tiny_model(const data::Dataset& ds) {
  zoo::ModelConfig c = desk_config_for(ds);
  c.frontend_channels = 4;
  c.resnet_blocks = {1, 1};
  c.resnet_widths = {4, 6};
  c.feat_dim = 6;
  c.lstm_hidden = 5;
  c.tconv_channels = {6, 8};
  c.dnn_hidden = {8, 8};
  return c;
}

Tensor<double> uniform_logits(Shape s) { return Tensor<double>(std::move(s), 0.25); }

double loss_value(const Tensor<double>& logits, const std::vector<std::uint32_t>& labels, LossMode mode) {
  Tape<double> tape;
  return aggregated_loss<double>(tape.constant(logits), labels, mode).value()[0];
}

Parameter<double> param(Shape s, double value, double grad) {
  Parameter<double> p;
  p.value = Tensor<double>(s, value);
  p.grad = Tensor<double>(std::move(s), grad);
  return p;
}

}  // namespace

TEST(Loss, UniformLogitsEveryStep) {
  const std::vector<std::uint32_t> labels{0, 17, 499};
  const double got = loss_value(uniform_logits({31, 3, 500}), labels, LossMode::every_step);
  const double want = 31 * std::log(500.0);
  EXPECT_NEAR(got, want, 1e-6 * want);
  EXPECT_NEAR(got, 192.65, 0.05);
}

TEST(Loss, UniformLogitsLastStep) {
  const double got = loss_value(uniform_logits({31, 2, 500}), {3, 4}, LossMode::last_step);
  EXPECT_NEAR(got, std::log(500.0), 1e-9);
  EXPECT_NEAR(got, 6.2146, 1e-4);
}

TEST(Loss, ClipLogitsUseTheSingleVector) {
  const double got = loss_value(uniform_logits({2, 500}), {3, 4}, LossMode::every_step);
  EXPECT_NEAR(got, std::log(500.0), 1e-9);
}

TEST(Loss, SaturatedCorrectLogitsVanish) {
  Tensor<double> z(Shape{31, 2, 500});
  const std::vector<std::uint32_t> labels{7, 123};
  for (std::size_t t = 0; t < 31; ++t)
    for (std::size_t n = 0; n < 2; ++n) z.at(t, n, labels[n]) = 30.0;
  // 31 * 499 * exp(-30) ~ 1.5e-9 per clip; margin 30 per step is the
  // single-step example.
  EXPECT_LT(loss_value(z, labels, LossMode::last_step), 1e-9);
  Tensor<double> one(Shape{2, 500});
  for (std::size_t n = 0; n < 2; ++n) one.at(n, labels[n]) = 30.0;
  EXPECT_LT(loss_value(one, labels, LossMode::every_step), 1e-9);
}

TEST(Loss, EveryStepIsSumOfPerStepLastStepLosses) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    nn::Rng rng(seed);
    const Tensor<double> z = lipnet::testing::random_tensor({9, 4, 13}, rng, -5, 5);
    std::vector<std::uint32_t> labels;
    for (int n = 0; n < 4; ++n) labels.push_back(static_cast<std::uint32_t>(nn::uniform_int(rng, 0, 12)));
    Tape<double> tape;
    const Var<double> x = tape.constant(z);
    double sum = 0.0;
    for (std::size_t t = 0; t < 9; ++t) sum += aggregated_loss<double>(ops::slice(x, 0, t, t + 1), labels, LossMode::last_step).value()[0];
    EXPECT_EQ(aggregated_loss<double>(x, labels, LossMode::every_step).value()[0], sum);
  }
}

TEST(Loss, PositiveOnRandomLogits) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    nn::Rng rng(seed);
    const Tensor<double> z = lipnet::testing::random_tensor({5, 3, 7}, rng, -20, 20);
    for (auto mode : {LossMode::every_step, LossMode::last_step}) EXPECT_GT(loss_value(z, {0, 3, 6}, mode), 0.0);
  }
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_LT(gradsuite::check("loss", seed), 1e-4) << seed;
}

TEST(Loss, BadLabelsRejected) {
  EXPECT_THROW(loss_value(uniform_logits({3, 2, 5}), {0, 5}, LossMode::every_step), ContractError);
  EXPECT_THROW(loss_value(uniform_logits({3, 2, 5}), {0}, LossMode::every_step), DimensionError);
  EXPECT_THROW(loss_value(uniform_logits({5}), {0}, LossMode::every_step), DimensionError);
}

TEST(Sgd, FirstStepMovesByLrTimesGrad) {
  Parameter<double> p = param({3}, 2.0, 1.0);
  nn::BlobList<double> blobs{{"p", &p.value, &p}};
  Sgd<double> opt(0.9);
  opt.step(blobs, 0.1);
  for (double v : p.value.data()) EXPECT_DOUBLE_EQ(v, 2.0 - 0.1);
}

TEST(Sgd, SecondIdenticalStepUsesVelocity19) {
  Parameter<double> p = param({2}, 0.0, 1.0);
  nn::BlobList<double> blobs{{"p", &p.value, &p}};
  Sgd<double> opt(0.9);
  opt.step(blobs, 0.1);
  const double before = p.value[0];
  opt.step(blobs, 0.1);
  EXPECT_NEAR(p.value[0] - before, -0.1 * 1.9, 1e-15);
  EXPECT_NEAR((*opt.velocity("p"))[0], 1.9, 1e-15);
}

TEST(Sgd, FrozenParameterUntouched) {
  Parameter<double> p = param({4}, 1.5, 3.0);
  p.frozen = true;
  nn::BlobList<double> blobs{{"p", &p.value, &p}};
  Sgd<double> opt;
  opt.step(blobs, 0.5);
  for (double v : p.value.data()) EXPECT_EQ(v, 1.5);
  EXPECT_EQ(opt.velocity("p"), nullptr);
}

TEST(Sgd, ContractViolations) {
  Parameter<double> p = param({2}, 0.0, 1.0);
  p.grad = Tensor<double>(Shape{3});
  nn::BlobList<double> blobs{{"p", &p.value, &p}};
  Sgd<double> opt;
  EXPECT_THROW(opt.step(blobs, 0.1), DimensionError);
  EXPECT_THROW(opt.step(blobs, 0.0), ContractError);
  EXPECT_THROW(Sgd<double>(1.0), ConfigError);
}

TEST(Schedule, Endpoints) {
  const LrSchedule tconv{5e-3, 5e-5, 20};
  EXPECT_DOUBLE_EQ(lr_at(tconv, 0), 5e-3);
  EXPECT_NEAR(lr_at(tconv, 19), 5e-5, 1e-18);
  const LrSchedule lstm{5e-4, 5e-5, 20};
  EXPECT_DOUBLE_EQ(lr_at(lstm, 0), 5e-4);
  EXPECT_NEAR(lr_at(lstm, 19), 5e-5, 1e-18);
}

TEST(Schedule, MidpointIsGeometricMean) {
  EXPECT_NEAR(lr_at({5e-3, 5e-5, 21}, 10), 5e-4, 1e-17);
}

TEST(Schedule, StrictlyDecreasing) {
  for (std::size_t E : {2u, 5u, 20u, 37u}) {
    const LrSchedule s{5e-3, 5e-5, E};
    for (std::size_t e = 1; e < E; ++e) EXPECT_LT(lr_at(s, e), lr_at(s, e - 1));
  }
}

TEST(Schedule, InvalidBudgets) {
  EXPECT_THROW(lr_at({5e-3, 5e-5, 1}, 0), ConfigError);
  EXPECT_DOUBLE_EQ(lr_at({1e-3, 1e-3, 1}, 0), 1e-3);
  EXPECT_THROW(lr_at({5e-5, 5e-3, 10}, 0), ConfigError);
  EXPECT_THROW(lr_at({5e-3, 5e-5, 10}, 10), ContractError);
}

TEST(EarlyStopping, RisingSequenceContinues) {
  EarlyStop s;
  for (double v : {0.50, 0.55, 0.60}) EXPECT_FALSE(s.update(v));
}

TEST(EarlyStopping, StopsOnFourthNonImprovingEpoch) {
  EarlyStop s;
  EXPECT_FALSE(s.update(0.60));
  EXPECT_FALSE(s.update(0.59));
  EXPECT_FALSE(s.update(0.59));
  EXPECT_FALSE(s.update(0.59));
  EXPECT_TRUE(s.update(0.59));
}

TEST(EarlyStopping, TieIsNotImprovement) {
  EarlyStop s;
  s.update(0.7);
  for (int i = 0; i < 3; ++i) EXPECT_FALSE(s.update(0.7));
  EXPECT_TRUE(s.update(0.7));
  EarlyStop r;
  r.update(0.7);
  r.update(0.6);
  r.update(0.6);
  r.update(0.6);
  EXPECT_FALSE(r.update(0.71));
  EXPECT_EQ(r.since, 0u);
}

TEST(Trainer, SameSeedSameEpochLosses) {
  data::Dataset ds(tiny_dataset("det"));
  TrainConfig cfg{.batch = 8, .max_epochs = 2, .early_stop = false, .seed = 5};
  std::vector<double> runs[2];
  for (auto& losses : runs) {
    Network<float> net(zoo::Variant::N2, tiny_model(ds), 3);
    for (const auto& e : train_run(net, ds, cfg).epochs) losses.push_back(e.train_loss);
  }
  ASSERT_EQ(runs[0].size(), 2u);
  EXPECT_EQ(runs[0], runs[1]);
}

TEST(Trainer, EmptyValidationIsConfigError) {
  const fs::path dir = tiny_dataset("noval");
  data::Manifest m = data::read_manifest(dir);
  m.train.insert(m.train.end(), m.val.begin(), m.val.end());
  m.val.clear();
  data::write_manifest(dir, m);
  data::Dataset ds(dir);
  Network<float> net(zoo::Variant::N2, tiny_model(ds), 0);
  EXPECT_THROW(train_run(net, ds, TrainConfig{.max_epochs = 1}), ConfigError);
}

TEST(Trainer, BatchOfOneIsConfigError) {
  data::Dataset ds(tiny_dataset("b1"));
  Network<float> net(zoo::Variant::N2, tiny_model(ds), 0);
  EXPECT_THROW(train_run(net, ds, TrainConfig{.batch = 1, .max_epochs = 1}), ConfigError);
}

TEST(Trainer, MismatchedModelIsConfigError) {
  data::Dataset ds(tiny_dataset("mismatch"));
  zoo::ModelConfig c = tiny_model(ds);
  c.V = 5;
  Network<float> net(zoo::Variant::N2, c, 0);
  EXPECT_THROW(train_run(net, ds, TrainConfig{.max_epochs = 1}), ConfigError);
}

TEST(Trainer, NonFiniteLossNamesTheBatch) {
  data::Dataset ds(tiny_dataset("nan"));
  Network<float> net(zoo::Variant::N2, tiny_model(ds), 0);
  net.blobs().front().value->data()[0] = std::numeric_limits<float>::quiet_NaN();
  Sgd<float> opt;
  nn::Rng rng(0);
  try {
    train_epoch(net, ds, opt, 1e-3, rng, TrainConfig{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("batch w"), std::string::npos) << e.what();
  }
}

TEST(Trainer, CsvLogHasOneRowPerEpoch) {
  data::Dataset ds(tiny_dataset("csv"));
  const fs::path log_path = fresh_dir("csvout") / "log.csv";
  {
    CsvLog log(log_path);
    Network<float> net(zoo::Variant::N1, tiny_model(ds), 0);
    train_run(net, ds, TrainConfig{.batch = 8, .max_epochs = 3, .early_stop = false}, &log);
  }
  std::ifstream in(log_path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "epoch,stage,lr,train_loss,val_top1,val_top5,val_top10,seconds");
  EXPECT_EQ(lines[1].substr(0, 6), "0,1,0.");
}

TEST(Trainer, RestoreBestPutsBackBestEpochWeights) {
  data::Dataset ds(tiny_dataset("best"));
  Network<float> net(zoo::Variant::N2, tiny_model(ds), 1);
  const RunResult r = train_run(net, ds, TrainConfig{.batch = 8, .max_epochs = 4, .early_stop = false});
  EXPECT_EQ(evaluate(net, ds, "val").top1, r.best_val_top1);
  for (const auto& e : r.epochs) EXPECT_LE(e.val_top1, r.best_val_top1);
}

TEST(Staged, FreezeLineageAndCheckpoints) {
  data::Dataset ds(tiny_dataset("staged"));
  StagedConfig sc;
  sc.model = tiny_model(ds);
  sc.stage1 = {.batch = 8, .max_epochs = 2, .early_stop = false};
  sc.stage2.batch = 8;
  sc.stage3 = {.batch = 8, .max_epochs = 2, .lr_initial = 5e-4, .early_stop = false};
  sc.out_dir = fresh_dir("staged_out");
  sc.seed = 4;
  const StagedResult res = staged_train(ds, sc);
  EXPECT_EQ(res.runs[1].epochs.size(), 5u);
  EXPECT_FALSE(res.runs[1].stopped_early);

  const zoo::Checkpoint c1 = zoo::read_checkpoint(res.checkpoints[0]);
  const zoo::Checkpoint c2 = zoo::read_checkpoint(res.checkpoints[1]);
  const zoo::Checkpoint c3 = zoo::read_checkpoint(res.checkpoints[2]);
  EXPECT_EQ(c1.variant, "N2");
  EXPECT_EQ(c2.variant, "N5");
  EXPECT_EQ(c3.variant, "N7");
  std::size_t compared = 0;
  for (const auto& b : c1.blobs) {
    if (b.name.rfind("frontend.", 0) != 0 && b.name.rfind("resnet.", 0) != 0) continue;
    const zoo::BlobRecord* after = c2.find(b.name);
    ASSERT_NE(after, nullptr) << b.name;
    ASSERT_EQ(after->data, b.data) << b.name;
    ++compared;
  }
  EXPECT_GT(compared, 10u);
  // Stage 3 trains everything, so some front-end blob moves.
  bool moved = false;
  for (const auto& b : c2.blobs) {
    if (b.name.rfind("frontend.", 0) != 0) continue;
    const zoo::BlobRecord* after = c3.find(b.name);
    ASSERT_NE(after, nullptr);
    moved |= after->data != b.data;
  }
  EXPECT_TRUE(moved);
}

TEST(Staged, MissingStageOneCheckpoint) {
  data::Dataset ds(tiny_dataset("missing"));
  StagedConfig sc;
  sc.model = tiny_model(ds);
  sc.out_dir = fresh_dir("missing_out");
  EXPECT_THROW(run_stage2(ds, sc, nullptr), DataError);
}
