// gwsurrogate: dataset generation, training and evaluation of the head-field
// surrogate. Exit codes: 0 ok, 2 configuration, 3 generation, 4 training
// divergence, 5 checkpoint mismatch.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gw/core/error.hpp"
#include "gw/data/dataset.hpp"
#include "gw/io/export.hpp"
#include "gw/model/checkpoint.hpp"
#include "gw/simd/kernels.hpp"
#include "gw/train/train.hpp"

namespace fs = std::filesystem;
using namespace gw;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitGeneration = 3;
constexpr int kExitTraining = 4;
constexpr int kExitCheckpoint = 5;

class CheckpointMismatch : public Error {
 public:
  using Error::Error;
};

// Ordered key=value record echoed to <out>/run.manifest.
class RunManifest {
 public:
  RunManifest(std::string command, int argc, char** argv) {
    std::string line;
    for (int i = 0; i < argc; ++i) line += (i ? " " : "") + std::string(argv[i]);
    set("command", std::move(command));
    set("argv", line);
    set("isa", simd::isa_name(simd::active().isa));
  }

  template <typename V>
  void set(const std::string& key, const V& value) {
    std::ostringstream os;
    os << std::setprecision(17) << value;
    entries_.emplace_back(key, os.str());
  }
  void warn(const std::string& message) {
    entries_.emplace_back("warning", message);
    std::cerr << "warning: " << message << "\n";
  }

  void write(const fs::path& dir) const {
    std::ostringstream os;
    for (const auto& [k, v] : entries_) os << k << "=" << v << "\n";
    io::write_text(dir / "run.manifest", os.str());
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::uint64_t resolve_seed(std::uint64_t flag_value) {
  if (const char* env = std::getenv("GW_SEED"); env != nullptr && *env != '\0') {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("GW_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  return flag_value;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

// Accepts a dataset file or a directory holding <split>.gwds.
fs::path dataset_file(const fs::path& p, const std::string& split) {
  fs::path f = fs::is_directory(p) ? p / (split + ".gwds") : p;
  if (!fs::exists(f)) throw ConfigError("dataset not found: " + f.string());
  return f;
}

data::Dataset load_dataset(const fs::path& p, const std::string& split) {
  return data::read_dataset(dataset_file(p, split));
}

model::Model open_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
  try {
    return model::load_checkpoint(path);
  } catch (const FormatError& e) {
    throw CheckpointMismatch(e.what());
  } catch (const ConfigError& e) {
    throw CheckpointMismatch(e.what());
  }
}

void require_grid(const model::Model& m, const data::Dataset& ds) {
  if (ds.samples.empty()) throw ConfigError("dataset is empty");
  const GridSpec& g = ds.samples[0].grid;
  try {
    m.config().validate_grid(g);
  } catch (const ConfigError& e) {
    throw CheckpointMismatch(std::string("dataset does not fit the checkpoint: ") + e.what());
  }
}

std::string grid_text(const GridSpec& g) {
  return std::to_string(g.height) + "x" + std::to_string(g.width);
}

void export_field(const fs::path& stem, std::span<const float> v, const GridSpec& g,
                  bool contours) {
  io::write_pgm16(stem.string() + ".pgm", v, g.height, g.width);
  if (contours) io::write_text(stem.string() + "_contours.csv", io::contour_csv(v, g.height, g.width));
}

// Absolute error map scaled to its own maximum (recorded in the PGM header).
void export_error(const fs::path& path, std::span<const float> pred, std::span<const float> target,
                  const GridSpec& g) {
  std::vector<float> err(pred.size());
  double hi = 0.0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    err[i] = std::abs(pred[i] - target[i]);
    hi = std::max(hi, static_cast<double>(err[i]));
  }
  io::write_pgm16(path, err, g.height, g.width, 0.0, hi > 0 ? hi : 1.0);
}

std::span<const float> image(const nn::Tensor4<float>& t, std::size_t n) {
  const std::size_t per = t.size() / t.n();
  return std::span<const float>(t.data() + n * per, per);
}

struct GenerateOpts {
  fs::path out;
  std::size_t train = 32000, val = 8000, test = 4000;
  int size = 64;
  std::uint64_t seed = 0;
  unsigned jobs = 0;
  int wells_min = 1, wells_max = 3;
};

int cmd_generate(const GenerateOpts& o, RunManifest& rm) {
  ensure_dir(o.out);
  const std::uint64_t seed = resolve_seed(o.seed);
  rm.set("out", o.out.string());
  rm.set("size", o.size);
  rm.set("seed", seed);
  rm.set("jobs", o.jobs);
  if (o.size % 16 != 0) {
    rm.warn("grid size " + std::to_string(o.size) +
            " is not divisible by 16; the default model cannot train on it");
  }
  const std::vector<std::pair<std::string, std::size_t>> splits{
      {"train", o.train}, {"val", o.val}, {"test", o.test}};
  // Validate every split before spending time on any of them.
  std::vector<std::pair<std::string, data::DatasetConfig>> configs;
  std::uint64_t split_id = 0;
  for (const auto& [name, count] : splits) {
    ++split_id;
    if (count == 0) continue;
    data::DatasetConfig c;
    c.grid = {o.size, o.size};
    c.n_samples = count;
    c.seed = data::derive_seed(seed, split_id);
    c.well_count_min = o.wells_min;
    c.well_count_max = o.wells_max;
    c.validate();
    configs.emplace_back(name, c);
  }
  if (configs.empty()) throw ConfigError("every split is empty");
  for (const auto& [name, c] : configs) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto ds = data::generate_dataset(c, o.jobs);
    const fs::path file = o.out / (name + ".gwds");
    data::write_dataset(ds, file);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << name << ": " << c.n_samples << " samples -> " << file.string() << " ("
              << std::fixed << std::setprecision(1) << secs << " s)\n";
    rm.set(name + ".samples", c.n_samples);
    rm.set(name + ".seed", c.seed);
  }
  rm.write(o.out);
  return 0;
}

struct TrainOpts {
  fs::path data, out = "run";
  std::string model = "attention-unet";
  int epochs = 130, batch = 32, width_divisor = 1;
  double lr = 8e-4;
  std::uint64_t seed = 0;
  std::vector<int> snapshots{10, 40, 130};
  std::vector<std::size_t> probes{0};
};

int cmd_train(const TrainOpts& o, RunManifest& rm) {
  const auto train_set = load_dataset(o.data, "train");
  const auto val_set = load_dataset(o.data, "val");
  ensure_dir(o.out);
  const std::uint64_t seed = resolve_seed(o.seed);
  model::ModelConfig mc;
  mc.variant = model::parse_variant(o.model);
  if (o.width_divisor < 1) throw ConfigError("--width-divisor must be >= 1");
  mc = mc.with_widths_divided_by(o.width_divisor);
  train::TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch;
  tc.learning_rate = o.lr;
  tc.seed = data::derive_seed(seed, 2);
  tc.snapshot_epochs = o.snapshots;
  tc.probe_indices = o.probes;
  tc.validate();
  const GridSpec grid = train_set.samples.at(0).grid;

  rm.set("data", o.data.string());
  rm.set("out", o.out.string());
  rm.set("seed", seed);
  rm.set("init_seed", data::derive_seed(seed, 1));
  rm.set("shuffle_seed", tc.seed);
  rm.set("model", model::variant_name(mc.variant));
  rm.set("width_divisor", o.width_divisor);
  rm.set("epochs", tc.epochs);
  rm.set("batch", tc.batch_size);
  rm.set("lr", tc.learning_rate);
  rm.set("adam", "beta1=0.9 beta2=0.999 eps=1e-8");
  rm.set("grid", grid_text(grid));
  rm.set("train.samples", train_set.samples.size());
  rm.set("val.samples", val_set.samples.size());

  model::Model m(mc, grid, data::derive_seed(seed, 1));
  std::cout << m.count_parameters().to_text();
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = train::train(m, train_set, val_set, tc, [&](const train::EpochRecord& e) {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "epoch " << e.epoch << " train_loss " << std::scientific << std::setprecision(4)
              << e.train_loss << " val_loss " << e.val_loss << std::fixed << std::setprecision(0)
              << " (" << secs << " s)\n"
              << std::defaultfloat << std::flush;
  });
  model::save_checkpoint(m, o.out / "model.gwck");
  io::write_text(o.out / "history.csv", train::history_csv(result.history));
  if (!result.snapshots.empty()) {
    const fs::path dir = o.out / "attention";
    ensure_dir(dir);
    for (const auto& s : result.snapshots) {
      for (std::size_t gate = 0; gate < s.maps.size(); ++gate) {
        const auto& a = s.maps[gate];
        io::write_pgm16(dir / ("epoch" + std::to_string(s.epoch) + "_sample" +
                               std::to_string(s.sample_index) + "_gate" +
                               std::to_string(gate + 1) + ".pgm"),
                        a.span(), a.h(), a.w());
      }
    }
  }
  rm.write(o.out);
  std::cout << "checkpoint -> " << (o.out / "model.gwck").string() << "\n";
  return 0;
}

struct EvalOpts {
  fs::path checkpoint, data, out = "eval";
  std::size_t subset = 500, topk = 5;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalOpts& o, RunManifest& rm) {
  auto m = open_checkpoint(o.checkpoint);
  const auto ds = load_dataset(o.data, "test");
  require_grid(m, ds);
  ensure_dir(o.out);
  const std::uint64_t seed = resolve_seed(o.seed);
  rm.set("checkpoint", o.checkpoint.string());
  rm.set("data", o.data.string());
  rm.set("subset", o.subset);
  rm.set("topk", o.topk);
  rm.set("seed", seed);

  const auto preds = train::predict(m, ds.samples);
  std::vector<std::size_t> all(ds.samples.size());
  std::iota(all.begin(), all.end(), 0);
  const auto targets = train::batch_targets(ds.samples, all);
  const auto metrics = train::compute_metrics(preds, targets);
  io::write_text(o.out / "metrics.csv", train::metrics_csv(metrics));
  {
    std::ostringstream os;
    os << std::setprecision(9) << "index,mse\n";
    for (std::size_t i = 0; i < metrics.per_sample_mse.size(); ++i) {
      os << i << "," << metrics.per_sample_mse[i] << "\n";
    }
    io::write_text(o.out / "per_sample_mse.csv", os.str());
  }
  std::cout << "rmse " << metrics.rmse << " pixel_rmse " << metrics.pixel_rmse << " r2 "
            << metrics.r2 << "\n";

  const auto ranking = train::rank_predictions(m, ds, o.subset, o.topk, seed);
  std::ostringstream rank;
  rank << std::setprecision(9) << "set,rank,index,mse\n";
  const fs::path gallery = o.out / "gallery";
  ensure_dir(gallery);
  const GridSpec& g = ds.samples[0].grid;
  auto dump = [&](const std::string& set, const std::vector<train::RankedSample>& list) {
    for (std::size_t r = 0; r < list.size(); ++r) {
      const auto& s = list[r];
      rank << set << "," << r + 1 << "," << s.index << "," << s.mse << "\n";
      std::cout << set << " " << r + 1 << ": sample " << s.index << " mse " << s.mse << "\n";
      const std::string stem = set + std::to_string(r + 1) + "_sample" + std::to_string(s.index);
      export_field(gallery / (stem + "_pred"), image(preds, s.index), g, true);
      export_field(gallery / (stem + "_target"), ds.samples[s.index].target, g, true);
      export_error(gallery / (stem + "_error.pgm"), image(preds, s.index),
                   ds.samples[s.index].target, g);
    }
  };
  dump("best", ranking.best);
  dump("worst", ranking.worst);
  io::write_text(o.out / "ranking.csv", rank.str());
  rm.write(o.out);
  return 0;
}

struct PredictOpts {
  fs::path checkpoint, data, out = "predict";
  std::vector<std::size_t> indices{0};
};

int cmd_predict(const PredictOpts& o, RunManifest& rm) {
  auto m = open_checkpoint(o.checkpoint);
  const auto ds = load_dataset(o.data, "test");
  require_grid(m, ds);
  ensure_dir(o.out);
  rm.set("checkpoint", o.checkpoint.string());
  rm.set("data", o.data.string());
  std::string list;
  for (std::size_t i : o.indices) {
    if (i >= ds.samples.size()) throw ConfigError("sample index " + std::to_string(i) + " out of range");
    list += (list.empty() ? "" : ",") + std::to_string(i);
  }
  rm.set("indices", list);
  const GridSpec& g = ds.samples[0].grid;
  const bool gated = m.config().variant == model::Variant::attention_unet;
  for (std::size_t i : o.indices) {
    const auto fr = m.forward(train::batch_inputs(ds.samples, {i}), nn::RunMode::eval(), nullptr,
                              gated);
    const std::string stem = "sample" + std::to_string(i);
    export_field(o.out / (stem + "_pred"), fr.output.span(), g, true);
    export_field(o.out / (stem + "_target"), ds.samples[i].target, g, true);
    export_error(o.out / (stem + "_error.pgm"), fr.output.span(), ds.samples[i].target, g);
    for (std::size_t gate = 0; gate < fr.attention.size(); ++gate) {
      const auto& a = fr.attention[gate];
      io::write_pgm16(o.out / (stem + "_alpha" + std::to_string(gate + 1) + ".pgm"), a.span(),
                      a.h(), a.w());
    }
    std::cout << "sample " << i << " -> " << (o.out / (stem + "_pred.pgm")).string() << "\n";
  }
  rm.write(o.out);
  return 0;
}

struct UncertaintyOpts {
  fs::path checkpoint, data, out = "uncertainty";
  std::vector<std::size_t> indices{0};
  int passes = 1000;
  std::uint64_t seed = 0;
};

int cmd_uncertainty(const UncertaintyOpts& o, RunManifest& rm) {
  auto m = open_checkpoint(o.checkpoint);
  const auto ds = load_dataset(o.data, "test");
  require_grid(m, ds);
  ensure_dir(o.out);
  const std::uint64_t seed = resolve_seed(o.seed);
  rm.set("checkpoint", o.checkpoint.string());
  rm.set("data", o.data.string());
  rm.set("passes", o.passes);
  rm.set("seed", seed);
  const GridSpec& g = ds.samples[0].grid;
  for (std::size_t i : o.indices) {
    if (i >= ds.samples.size()) throw ConfigError("sample index " + std::to_string(i) + " out of range");
    train::McOptions mo;
    mo.passes = o.passes;
    mo.seed = data::derive_seed(seed, i);
    const auto r = train::mc_dropout_predict(m, ds.samples[i], mo);
    const std::string stem = "sample" + std::to_string(i);
    io::write_pgm16(o.out / (stem + "_mean.pgm"), r.mean.span(), g.height, g.width);
    double hi = 0.0;
    for (float v : r.std.vec()) hi = std::max(hi, static_cast<double>(v));
    io::write_pgm16(o.out / (stem + "_std.pgm"), r.std.span(), g.height, g.width, 0.0,
                    hi > 0 ? hi : 1.0);
    std::ostringstream os;
    os << std::setprecision(9) << "row,col,mean,std\n";
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        os << y << "," << x << "," << r.mean[g.index(y, x)] << "," << r.std[g.index(y, x)]
           << "\n";
      }
    }
    io::write_text(o.out / (stem + "_uncertainty.csv"), os.str());
    rm.set(stem + ".seed", mo.seed);
    std::cout << "sample " << i << ": max std " << hi << "\n";
  }
  rm.write(o.out);
  return 0;
}

struct BenchOpts {
  fs::path checkpoint, out = "bench";
  int size = 64, runs = 10, warmup = 1, batch = 32;
  std::size_t scenarios = 32;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchOpts& o, RunManifest& rm) {
  auto m = open_checkpoint(o.checkpoint);
  ensure_dir(o.out);
  const std::uint64_t seed = resolve_seed(o.seed);
  data::DatasetConfig dc;
  dc.grid = {o.size, o.size};
  dc.n_samples = o.scenarios;
  dc.seed = seed;
  try {
    m.config().validate_grid(dc.grid);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("--size: ") + e.what());
  }
  rm.set("checkpoint", o.checkpoint.string());
  rm.set("size", o.size);
  rm.set("runs", o.runs);
  rm.set("warmup", o.warmup);
  rm.set("scenarios", o.scenarios);
  rm.set("batch", o.batch);
  rm.set("seed", seed);
  const auto report = train::benchmark_wallclock(m, dc, o.scenarios, o.runs, o.warmup, o.batch);
  std::cout << report.to_text();
  io::write_text(o.out / "bench.txt", report.to_text());
  io::write_text(o.out / "bench.csv", report.to_csv());
  rm.write(o.out);
  return 0;
}

struct GeneralizeOpts {
  fs::path checkpoint, out = "generalize";
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
  unsigned jobs = 0;
};

int cmd_generalize(const GeneralizeOpts& o, RunManifest& rm) {
  auto m = open_checkpoint(o.checkpoint);
  ensure_dir(o.out);
  const std::uint64_t seed = resolve_seed(o.seed);
  data::DatasetConfig base;
  base.grid = m.grid();
  base.seed = seed;
  rm.set("checkpoint", o.checkpoint.string());
  rm.set("grid", grid_text(base.grid));
  rm.set("samples", o.samples);
  rm.set("seed", seed);
  for (const auto& [name, c] : train::generalization_distributions(base, o.samples)) {
    rm.set(name + ".seed", c.seed);
  }
  const auto report = train::generalization_suite(m, base, o.samples, o.jobs);
  std::cout << report.to_text();
  io::write_text(o.out / "generalization.txt", report.to_text());
  io::write_text(o.out / "generalization.csv", report.to_csv());
  rm.write(o.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Groundwater head-field surrogate: data, training and evaluation"};
  app.require_subcommand(1);

  GenerateOpts gen;
  auto* g = app.add_subcommand("generate", "Generate train/val/test datasets");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--train", gen.train, "Training samples");
  g->add_option("--val", gen.val, "Validation samples");
  g->add_option("--test", gen.test, "Test samples");
  g->add_option("--size", gen.size, "Grid side length");
  g->add_option("--seed", gen.seed, "Base seed (GW_SEED overrides)");
  g->add_option("--jobs", gen.jobs, "Worker threads, 0 = available parallelism");
  g->add_option("--wells-min", gen.wells_min, "Minimum wells per sample");
  g->add_option("--wells-max", gen.wells_max, "Maximum wells per sample");

  TrainOpts tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--data", tr.data, "Dataset directory with train.gwds and val.gwds")->required();
  t->add_option("--model", tr.model, "attention-unet or unet");
  t->add_option("--epochs", tr.epochs, "Epochs");
  t->add_option("--lr", tr.lr, "Adam learning rate");
  t->add_option("--batch", tr.batch, "Mini-batch size");
  t->add_option("--seed", tr.seed, "Seed (GW_SEED overrides)");
  t->add_option("--out", tr.out, "Output directory");
  t->add_option("--width-divisor", tr.width_divisor, "Divide every channel width by this");
  t->add_option("--snapshots", tr.snapshots, "Epochs at which attention maps are saved")
      ->delimiter(',');
  t->add_option("--probe", tr.probes, "Validation samples whose attention maps are saved")
      ->delimiter(',');

  EvalOpts ev;
  auto* e = app.add_subcommand("eval", "Metrics and best/worst gallery on a dataset");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Dataset file or directory (test split)")->required();
  e->add_option("--subset", ev.subset, "Random subset size for the ranking");
  e->add_option("--topk", ev.topk, "Best/worst count");
  e->add_option("--seed", ev.seed, "Subset seed (GW_SEED overrides)");
  e->add_option("--out", ev.out, "Output directory");

  PredictOpts pr;
  auto* p = app.add_subcommand("predict", "Export predicted head fields");
  p->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required();
  p->add_option("--data", pr.data, "Dataset file or directory (test split)")->required();
  p->add_option("--index", pr.indices, "Sample indices")->delimiter(',');
  p->add_option("--out", pr.out, "Output directory");

  UncertaintyOpts un;
  auto* u = app.add_subcommand("uncertainty", "MC-dropout mean and std maps");
  u->add_option("--checkpoint", un.checkpoint, "Checkpoint file")->required();
  u->add_option("--data", un.data, "Dataset file or directory (test split)")->required();
  u->add_option("--index", un.indices, "Sample indices")->delimiter(',');
  u->add_option("--passes", un.passes, "Stochastic forward passes");
  u->add_option("--seed", un.seed, "Seed (GW_SEED overrides)");
  u->add_option("--out", un.out, "Output directory");

  BenchOpts be;
  auto* b = app.add_subcommand("bench", "Wall-clock comparison with the finite-difference solver");
  b->add_option("--checkpoint", be.checkpoint, "Checkpoint file")->required();
  b->add_option("--size", be.size, "Grid side length");
  b->add_option("--runs", be.runs, "Timed runs");
  b->add_option("--warmup", be.warmup, "Discarded warmup runs");
  b->add_option("--scenarios", be.scenarios, "Scenarios per run");
  b->add_option("--batch", be.batch, "Inference batch size");
  b->add_option("--seed", be.seed, "Scenario seed (GW_SEED overrides)");
  b->add_option("--out", be.out, "Output directory");

  GeneralizeOpts ge;
  auto* gz = app.add_subcommand("generalize", "MSE on shifted input distributions");
  gz->add_option("--checkpoint", ge.checkpoint, "Checkpoint file")->required();
  gz->add_option("--samples", ge.samples, "Samples per distribution");
  gz->add_option("--seed", ge.seed, "Seed (GW_SEED overrides)");
  gz->add_option("--jobs", ge.jobs, "Generation threads, 0 = available parallelism");
  gz->add_option("--out", ge.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (g->parsed()) {
      RunManifest rm("generate", argc, argv);
      return cmd_generate(gen, rm);
    }
    if (t->parsed()) {
      RunManifest rm("train", argc, argv);
      return cmd_train(tr, rm);
    }
    if (e->parsed()) {
      RunManifest rm("eval", argc, argv);
      return cmd_eval(ev, rm);
    }
    if (p->parsed()) {
      RunManifest rm("predict", argc, argv);
      return cmd_predict(pr, rm);
    }
    if (u->parsed()) {
      RunManifest rm("uncertainty", argc, argv);
      return cmd_uncertainty(un, rm);
    }
    if (b->parsed()) {
      RunManifest rm("bench", argc, argv);
      return cmd_bench(be, rm);
    }
    if (gz->parsed()) {
      RunManifest rm("generalize", argc, argv);
      return cmd_generalize(ge, rm);
    }
  } catch (const CheckpointMismatch& err) {
    std::cerr << "checkpoint error: " << err.what() << "\n";
    return kExitCheckpoint;
  } catch (const TrainingError& err) {
    std::cerr << "training diverged: " << err.what() << "\n";
    return kExitTraining;
  } catch (const GenerationError& err) {
    std::cerr << "generation failed: " << err.what() << "\n";
    return kExitGeneration;
  } catch (const ConvergenceError& err) {
    std::cerr << "generation failed: " << err.what() << "\n";
    return kExitGeneration;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
