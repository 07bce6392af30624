// lipnet: dataset generation, training, evaluation and diagnostics.
//
// Exit codes: 0 ok, 1 usage or configuration, 2 data or file format,
// 3 numeric failure (including a failed gradient check).

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lipnet/data/synthetic.hpp"
#include "lipnet/eval/report.hpp"
#include "lipnet/gradcheck_suite.hpp"
#include "lipnet/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace lipnet;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct ModelOpts {
  std::string preset = "desk";
};

zoo::ModelConfig model_for(const data::Dataset& ds, const ModelOpts& m) {
  if (m.preset == "desk") return train::desk_config_for(ds);
  if (m.preset == "full") return train::full_config_for(ds);
  throw ConfigError("unknown model preset '" + m.preset + "' (desk or full)");
}

train::LossMode parse_loss(const std::string& s) {
  if (s == "every") return train::LossMode::every_step;
  if (s == "last") return train::LossMode::last_step;
  throw ConfigError("loss mode must be 'every' or 'last'");
}

void print_epoch(const train::EpochRecord& r) {
  std::printf("stage %s epoch %2zu  lr %.2e  loss %.4f  val top-1 %.3f top-5 %.3f  %.1fs\n", r.stage.c_str(), r.epoch,
              r.lr, r.train_loss, r.val_top1, r.val_top5, r.seconds);
  std::fflush(stdout);
}

// --- gen-data ------------------------------------------------------------

struct GenOpts {
  data::SyntheticSpec spec;
  std::string out;
};

int run_gen(const GenOpts& o) {
  const data::Manifest m = data::gen_synthetic(o.spec, o.out);
  std::printf("wrote %zu words, %zu/%zu/%zu train/val/test clips of %zux%zux%zu to %s\n", m.vocab.size(),
              m.train.size(), m.val.size(), m.test.size(), m.T, m.H, m.W, o.out.c_str());
  std::printf("global mean %.6f  std %.6f\n", m.global_mean, m.global_std);
  return kOk;
}

// --- train ----------------------------------------------------------------

struct TrainOpts {
  std::string data, variant = "N2", out = "model.ckpt", init, log, loss = "every";
  std::vector<std::string> freeze;
  ModelOpts model;
  train::TrainConfig cfg;
  bool no_augment = false, no_early_stop = false;
};

int run_train(TrainOpts o) {
  data::Dataset ds(o.data);
  const zoo::Variant v = zoo::parse_variant(o.variant);
  o.cfg.loss = parse_loss(o.loss);
  o.cfg.augment = !o.no_augment;
  o.cfg.early_stop = !o.no_early_stop;
  zoo::ModelConfig mc = model_for(ds, o.model);
  std::optional<zoo::Checkpoint> init;
  if (!o.init.empty()) {
    init = zoo::read_checkpoint(o.init);
    mc = init->config;
  }
  zoo::Network<float> net(v, mc, o.cfg.seed);
  if (init) {
    const zoo::LoadReport rep = zoo::load_into(net, *init, zoo::LoadMode::partial);
    std::printf("init from %s: %zu blobs loaded, %zu fresh, %zu ignored\n", o.init.c_str(), rep.loaded.size(),
                rep.fresh.size(), rep.ignored.size());
  }
  if (!o.freeze.empty()) {
    net.set_front_frozen(false);
    for (auto& b : net.blobs()) {
      for (const auto& prefix : o.freeze) {
        if (b.param && b.name.rfind(prefix, 0) == 0) b.param->frozen = true;
      }
    }
  }
  std::printf("%s: %zu trainable parameters\n", zoo::variant_name(v).c_str(), net.trainable_count());
  std::optional<train::CsvLog> log;
  if (!o.log.empty()) log.emplace(o.log);
  const train::RunResult r = train::train_run(net, ds, o.cfg, log ? &*log : nullptr, print_epoch);
  zoo::save_checkpoint(net, o.out, {r.epochs.size(), o.cfg.stage, r.best_val_top1});
  std::printf("best val top-1 %.4f at epoch %zu; saved %s\n", r.best_val_top1, r.best_epoch, o.out.c_str());
  return kOk;
}

// --- train-staged ---------------------------------------------------------

struct StagedOpts {
  std::string data, out = "staged", final = "N7", log;
  ModelOpts model;
  std::size_t batch = 16, max_epochs = 20, stage2_epochs = 5;
  std::uint64_t seed = 0;
};

int run_staged(const StagedOpts& o) {
  data::Dataset ds(o.data);
  train::StagedConfig sc;
  sc.model = model_for(ds, o.model);
  sc.final = zoo::parse_variant(o.final);
  sc.out_dir = o.out;
  sc.seed = o.seed;
  for (auto* s : {&sc.stage1, &sc.stage2, &sc.stage3}) s->batch = o.batch;
  sc.stage1.max_epochs = o.max_epochs;
  sc.stage2.max_epochs = o.stage2_epochs;
  sc.stage3.max_epochs = o.max_epochs;
  fs::create_directories(sc.out_dir);
  train::CsvLog log(o.log.empty() ? sc.out_dir / "train_log.csv" : fs::path(o.log));
  const auto runs = {&train::run_stage1, &train::run_stage2, &train::run_stage3};
  int s = 1;
  for (auto run : runs) {
    const train::RunResult r = run(ds, sc, &log);
    for (const auto& e : r.epochs) print_epoch(e);
    std::printf("stage %d done: best val top-1 %.4f -> %s\n", s, r.best_val_top1,
                train::stage_checkpoint_path(sc.out_dir, s).c_str());
    ++s;
  }
  return kOk;
}

// --- eval -----------------------------------------------------------------

struct EvalOpts {
  std::string data, checkpoint, split = "test", report;
  std::vector<std::size_t> topk{1, 5, 10};
  std::size_t confusions = 10, rows = 10, batch = 16;
  std::uint64_t seed = 0;
};

int run_eval(const EvalOpts& o) {
  data::Dataset ds(o.data);
  zoo::TrainingMeta meta;
  zoo::Network<float> net = zoo::load_checkpoint<float>(o.checkpoint, &meta);
  const zoo::ModelConfig& c = net.config();
  if (c.T != ds.frames() || c.H != ds.crop() || c.V != ds.vocab_size()) {
    throw ConfigError("checkpoint expects " + std::to_string(c.T) + " frames of " + std::to_string(c.H) +
                      " px over " + std::to_string(c.V) + " words; dataset does not match");
  }
  for (std::size_t k : o.topk) {
    if (k < 1) throw ConfigError("top-k values must be at least 1");
  }
  const train::EvalSummary ev = train::evaluate(net, ds, o.split, o.batch);
  const eval::EvalReport rep = eval::make_report(
      ev.scores, o.topk, o.confusions, {zoo::variant_name(net.variant()), o.checkpoint, o.split, o.seed});
  std::cout << eval::to_text(rep, ds.manifest().vocab, o.rows);
  if (!o.report.empty()) {
    std::ofstream out(o.report);
    if (!out) throw DataError("cannot write report " + o.report);
    out << eval::to_json(rep, ds.manifest().vocab).dump(2) << '\n';
  }
  return kOk;
}

// --- gradcheck ------------------------------------------------------------

struct GradOpts {
  std::string layer = "all";
  std::uint64_t seed = 0;
  std::size_t cases = 10;
};

int run_gradcheck(const GradOpts& o) {
  bool ok = true;
  double worst = 0;
  for (const auto& r : gradsuite::run(o.layer, o.seed, o.cases)) {
    std::printf("%-10s %3zu cases  max rel err %.3e  %s\n", r.layer.c_str(), r.cases, r.max_error,
                r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
    worst = std::max(worst, r.max_error);
  }
  std::printf("max relative error %.3e (tolerance %.0e)\n", worst, gradsuite::kTolerance);
  return ok ? kOk : kNumeric;
}

// --- summary --------------------------------------------------------------

struct SummaryOpts {
  std::string variant = "all", preset = "full";
  std::size_t frames = 31, size = 112, vocab = 500;
  bool json = false;
};

int run_summary(const SummaryOpts& o) {
  zoo::ModelConfig c = o.preset == "desk" ? zoo::ModelConfig::desk(o.frames, o.size, o.vocab) : zoo::ModelConfig{};
  if (o.preset != "desk" && o.preset != "full") throw ConfigError("preset must be desk or full");
  c.T = o.frames;
  c.H = c.W = o.size;
  c.V = o.vocab;
  std::vector<zoo::Variant> vs;
  if (o.variant == "all") {
    for (int i = 0; i < 7; ++i) vs.push_back(static_cast<zoo::Variant>(i));
  } else {
    vs.push_back(zoo::parse_variant(o.variant));
  }
  nlohmann::json j = nlohmann::json::array();
  if (!o.json) std::printf("%-4s %-8s %-7s %-8s %12s %12s %12s %12s\n", "id", "front", "trunk", "back-end", "front-end",
                           "trunk", "back-end", "total");
  for (zoo::Variant v : vs) {
    zoo::Network<float> net(v, c, 0);
    const zoo::ParamCounts p = net.param_counts();
    const zoo::VariantTraits t = net.variant_traits();
    const std::string front = t.frontend == zoo::FrontendMode::conv3d ? "3D" : "2D";
    const std::string trunk = t.trunk == zoo::TrunkKind::resnet ? "ResNet" : "DNN";
    const std::string back = t.backend == zoo::BackendKind::tconv
                                 ? "tconv"
                                 : std::to_string(t.lstm_layers) + "xBiLSTM";
    if (o.json) {
      j.push_back({{"variant", zoo::variant_name(v)},
                   {"frontend", p.frontend},
                   {"trunk", p.trunk},
                   {"backend", p.backend},
                   {"total", p.total()}});
    } else {
      std::printf("%-4s %-8s %-7s %-8s %12zu %12zu %12zu %12zu\n", zoo::variant_name(v).c_str(), front.c_str(),
                  trunk.c_str(), back.c_str(), p.frontend, p.trunk, p.backend, p.total());
    }
  }
  if (o.json) std::cout << j.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lipnet: word-level lipreading networks"};
  app.require_subcommand(1);

  GenOpts gen;
  auto* g = app.add_subcommand("gen-data", "write a synthetic word-in-utterance corpus");
  g->add_option("--vocab", gen.spec.vocab, "vocabulary size")->capture_default_str();
  g->add_option("--clips-per-word", gen.spec.clips_per_word, "clips per word")->capture_default_str();
  g->add_option("--frames", gen.spec.T, "frames per clip")->capture_default_str();
  g->add_option("--size", gen.spec.size, "stored frame extent in pixels")->capture_default_str();
  g->add_option("--noise", gen.spec.noise, "pixel noise standard deviation")->capture_default_str();
  g->add_option("--seed", gen.spec.seed)->capture_default_str();
  g->add_option("--out", gen.out, "output directory")->required();

  TrainOpts tr;
  auto* t = app.add_subcommand("train", "train one variant");
  t->add_option("--data", tr.data)->required();
  t->add_option("--variant", tr.variant, "N1..N7")->capture_default_str();
  t->add_option("--epochs", tr.cfg.max_epochs, "epoch budget (also the schedule length)")->capture_default_str();
  t->add_option("--batch", tr.cfg.batch)->capture_default_str();
  t->add_option("--lr", tr.cfg.lr_initial, "initial learning rate")->capture_default_str();
  t->add_option("--lr-final", tr.cfg.lr_final)->capture_default_str();
  t->add_option("--momentum", tr.cfg.momentum)->capture_default_str();
  t->add_option("--patience", tr.cfg.patience)->capture_default_str();
  t->add_option("--seed", tr.cfg.seed)->capture_default_str();
  t->add_option("--stage", tr.cfg.stage, "stage label for logs and checkpoint")->capture_default_str();
  t->add_option("--checkpoint,-o", tr.out, "output checkpoint")->capture_default_str();
  t->add_option("--init", tr.init, "partial-load weights from this checkpoint");
  t->add_option("--freeze", tr.freeze, "blob-name prefixes to freeze, e.g. frontend resnet")->delimiter(',');
  t->add_option("--loss", tr.loss, "every|last")->capture_default_str();
  t->add_option("--model", tr.model.preset, "desk|full")->capture_default_str();
  t->add_option("--log", tr.log, "CSV training log");
  t->add_flag("--no-augment", tr.no_augment);
  t->add_flag("--no-early-stop", tr.no_early_stop);

  StagedOpts st;
  auto* s = app.add_subcommand("train-staged", "three-stage protocol: N2, then N5 (frozen front), then N6/N7");
  s->add_option("--data", st.data)->required();
  s->add_option("--out", st.out, "directory for stage1/2/3.ckpt")->capture_default_str();
  s->add_option("--final", st.final, "N6 or N7")->capture_default_str();
  s->add_option("--epochs", st.max_epochs, "epoch budget of stages 1 and 3")->capture_default_str();
  s->add_option("--stage2-epochs", st.stage2_epochs)->capture_default_str();
  s->add_option("--batch", st.batch)->capture_default_str();
  s->add_option("--seed", st.seed)->capture_default_str();
  s->add_option("--model", st.model.preset, "desk|full")->capture_default_str();
  s->add_option("--log", st.log, "CSV training log (default <out>/train_log.csv)");

  EvalOpts ev;
  auto* e = app.add_subcommand("eval", "score a split and report top-N, confusions and per-word accuracy");
  e->add_option("--data", ev.data)->required();
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--split", ev.split)->capture_default_str();
  e->add_option("--topk", ev.topk, "comma-separated N values")->delimiter(',')->capture_default_str();
  e->add_option("--confusions", ev.confusions, "number of confusion pairs")->capture_default_str();
  e->add_option("--rows", ev.rows, "rows in the best/worst word table")->capture_default_str();
  e->add_option("--seed", ev.seed, "recorded in the report")->capture_default_str();
  e->add_option("--report", ev.report, "JSON report path");

  GradOpts gr;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of layer gradients");
  gc->add_option("--layer", gr.layer, "all or one of: conv1d conv2d conv3d batchnorm maxpool meanpool linear lstm "
                                      "bilstm loss")
      ->capture_default_str();
  gc->add_option("--seed", gr.seed)->capture_default_str();
  gc->add_option("--cases", gr.cases)->capture_default_str();

  SummaryOpts su;
  auto* sm = app.add_subcommand("summary", "per-sub-network parameter counts");
  sm->add_option("variant", su.variant, "N1..N7 or all")->capture_default_str();
  sm->add_option("--model", su.preset, "full|desk")->capture_default_str();
  sm->add_option("--frames", su.frames)->capture_default_str();
  sm->add_option("--size", su.size, "input crop")->capture_default_str();
  sm->add_option("--vocab", su.vocab)->capture_default_str();
  sm->add_flag("--json", su.json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*g) return run_gen(gen);
    if (*t) return run_train(tr);
    if (*s) return run_staged(st);
    if (*e) return run_eval(ev);
    if (*gc) return run_gradcheck(gr);
    if (*sm) return run_summary(su);
  } catch (const NumericError& err) {
    std::cerr << "numeric error: " << err.what() << '\n';
    return kNumeric;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kData;
  } catch (const FormatError& err) {
    std::cerr << "format error: " << err.what() << '\n';
    return kData;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kData;
  }
  return kUsage;
}
