#include "gw/train/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "gw/core/error.hpp"
#include "gw/fd/solver.hpp"
#include "gw/grf/grf.hpp"
#include "gw/simd/kernels.hpp"
#include "gw/train/loss.hpp"

namespace gw::train {

using nn::Shape4;
using nn::Tensor4;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch size must be >= 2 for batch normalisation");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam eps must be positive");
  if (eval_batch_size < 1) throw ConfigError("eval batch size must be >= 1");
}

template <typename T>
void Adam<T>::step(const std::vector<nn::Param<T>*>& params) {
  for (const auto* p : params) {
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->grad.size(); ++i) {
      if (!std::isfinite(static_cast<double>(p->grad[i]))) {
        throw TrainingError("non-finite gradient in " + p->name + " at element " +
                            std::to_string(i));
      }
    }
  }
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t j = 0; j < params.size(); ++j) {
      m_[j].assign(params[j]->value.size(), T(0));
      v_[j].assign(params[j]->value.size(), T(0));
    }
  }
  if (m_.size() != params.size()) throw ConfigError("adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t j = 0; j < params.size(); ++j) {
    auto* p = params[j];
    if (!p->trainable) continue;
    const std::size_t n = p->value.size();
    if constexpr (std::is_same_v<T, float>) {
      simd::active().adam(p->value.data(), m_[j].data(), v_[j].data(), p->grad.data(), n,
                          static_cast<float>(lr_), static_cast<float>(beta1_),
                          static_cast<float>(beta2_), static_cast<float>(eps_),
                          static_cast<float>(c1), static_cast<float>(c2));
    } else {
      T* w = p->value.data();
      const T* g = p->grad.data();
      T* m = m_[j].data();
      T* v = v_[j].data();
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
        w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
    }
  }
}

template class Adam<float>;
template class Adam<double>;

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "epoch,train_loss,val_loss\n";
  for (const auto& r : history) os << r.epoch << "," << r.train_loss << "," << r.val_loss << "\n";
  return os.str();
}

Tensor4<float> batch_inputs(const std::vector<Sample>& samples,
                            const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ValidationError("empty batch");
  const GridSpec& g = samples.at(indices[0]).grid;
  Tensor4<float> x(Shape4{static_cast<int>(indices.size()), 3, g.height, g.width});
  const std::size_t per = 3 * g.cells();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Sample& s = samples.at(indices[b]);
    if (!(s.grid == g)) throw ShapeError("batch mixes grid sizes");
    std::copy(s.input.begin(), s.input.end(), x.data() + b * per);
  }
  return x;
}

Tensor4<float> batch_targets(const std::vector<Sample>& samples,
                             const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ValidationError("empty batch");
  const GridSpec& g = samples.at(indices[0]).grid;
  Tensor4<float> y(Shape4{static_cast<int>(indices.size()), 1, g.height, g.width});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Sample& s = samples.at(indices[b]);
    if (!(s.grid == g)) throw ShapeError("batch mixes grid sizes");
    std::copy(s.target.begin(), s.target.end(), y.data() + b * g.cells());
  }
  return y;
}

Tensor4<float> predict(model::Model& model, const std::vector<Sample>& samples, int batch_size) {
  if (samples.empty()) throw ValidationError("predict: no samples");
  const GridSpec& g = samples[0].grid;
  Tensor4<float> out(Shape4{static_cast<int>(samples.size()), 1, g.height, g.width});
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto y = model.forward(batch_inputs(samples, idx), nn::RunMode::eval()).output;
    std::copy(y.vec().begin(), y.vec().end(), out.data() + start * g.cells());
  }
  return out;
}

namespace {

double eval_loss(model::Model& model, const std::vector<Sample>& samples, int batch_size) {
  const auto preds = predict(model, samples, batch_size);
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), 0);
  return mse_loss(preds, batch_targets(samples, all));
}

void check_grid(const model::Model& model, const data::Dataset& ds, const char* what) {
  if (ds.samples.empty()) throw ValidationError(std::string(what) + " set is empty");
  if (!(ds.samples[0].grid == model.grid())) {
    throw ConfigError(std::string(what) + " grid " + std::to_string(ds.samples[0].grid.height) +
                      "x" + std::to_string(ds.samples[0].grid.width) +
                      " does not match the model grid");
  }
}

}  // namespace

TrainResult train(model::Model& model, const data::Dataset& train_set,
                  const data::Dataset& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  check_grid(model, train_set, "training");
  check_grid(model, val_set, "validation");
  const auto& samples = train_set.samples;
  for (std::size_t p : config.probe_indices) {
    if (p >= val_set.samples.size()) throw ConfigError("probe index out of range");
  }

  TrainResult result;
  auto snapshot = [&](int epoch) {
    if (model.config().variant != model::Variant::attention_unet) return;
    if (std::find(config.snapshot_epochs.begin(), config.snapshot_epochs.end(), epoch) ==
        config.snapshot_epochs.end()) {
      return;
    }
    for (std::size_t p : config.probe_indices) {
      auto fr = model.forward(batch_inputs(val_set.samples, {p}), nn::RunMode::eval(), nullptr,
                              true);
      result.snapshots.push_back({epoch, p, std::move(fr.attention)});
    }
  };

  if (config.record_initial_loss) {
    EpochRecord r{0, eval_loss(model, samples, config.eval_batch_size),
                  eval_loss(model, val_set.samples, config.eval_batch_size)};
    result.history.push_back(r);
    if (on_epoch) on_epoch(r);
  }
  snapshot(0);

  std::mt19937_64 rng(config.seed);
  Adam<float> opt(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps);
  const auto params = model.parameters();
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      if (end - start < 2) break;
      const std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
      const auto x = batch_inputs(samples, idx);
      const auto y = batch_targets(samples, idx);
      model.zero_grad();
      const auto pred = model.forward(x, nn::RunMode::train(), &rng).output;
      const double loss = mse_loss(pred, y);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches));
      }
      model.backward(mse_loss_grad(pred, y));
      try {
        opt.step(params);
      } catch (const TrainingError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches) + ": " + e.what());
      }
      loss_sum += loss;
      ++batches;
    }
    EpochRecord r{epoch, loss_sum / std::max(1, batches),
                  eval_loss(model, val_set.samples, config.eval_batch_size)};
    result.history.push_back(r);
    if (on_epoch) on_epoch(r);
    snapshot(epoch);
  }
  return result;
}

Metrics compute_metrics(const Tensor4<float>& preds, const Tensor4<float>& targets) {
  if (!(preds.shape() == targets.shape())) {
    throw ShapeError("metrics: prediction " + preds.shape().str() + " vs target " +
                     targets.shape().str());
  }
  const int n = preds.n();
  const std::size_t per = preds.size() / n;
  Metrics m;
  m.per_sample_mse.resize(n);
  double sse = 0.0;
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < per; ++j) {
      const double d = static_cast<double>(targets[i * per + j]) - preds[i * per + j];
      s += d * d;
    }
    m.per_sample_mse[i] = s / per;
    sse += s;
  }
  m.rmse = std::sqrt(sse / n);
  m.pixel_rmse = std::sqrt(sse / (static_cast<double>(n) * per));
  m.mean_mse = sse / (static_cast<double>(n) * per);
  if (n < 2) throw DomainError("r2 undefined: need at least two samples");
  std::vector<double> mean(per, 0.0);
  for (int i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < per; ++j) mean[j] += targets[i * per + j];
  }
  for (double& v : mean) v /= n;
  double sst = 0.0;
  for (int i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < per; ++j) {
      const double d = targets[i * per + j] - mean[j];
      sst += d * d;
    }
  }
  if (sst == 0.0) throw DomainError("r2 undefined: targets have zero variance");
  m.r2 = 1.0 - sse / sst;
  return m;
}

std::string metrics_csv(const Metrics& m) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "rmse,pixel_rmse,r2,mean_mse,n_samples\n";
  os << m.rmse << "," << m.pixel_rmse << "," << m.r2 << "," << m.mean_mse << ","
     << m.per_sample_mse.size() << "\n";
  return os.str();
}

McResult mc_dropout_predict(model::Model& model, const Sample& input, const McOptions& options) {
  if (options.passes < 2) throw ConfigError("mc dropout needs at least 2 passes");
  if (options.batch_size < 1) throw ConfigError("mc dropout batch size must be >= 1");
  if (options.dropout_enabled && !model.has_dropout()) {
    throw ConfigError("mc dropout requested on a model without dropout layers");
  }
  const nn::RunMode mode = options.dropout_enabled ? nn::RunMode::mc_dropout()
                                                   : nn::RunMode::eval();
  const GridSpec& g = input.grid;
  const std::size_t cells = g.cells();
  std::mt19937_64 rng(options.seed);
  // Welford accumulation keeps identical passes at exactly zero spread.
  std::vector<double> mean(cells, 0.0), m2(cells, 0.0);
  int done = 0;
  while (done < options.passes) {
    const int b = std::min(options.batch_size, options.passes - done);
    Tensor4<float> x(Shape4{b, 3, g.height, g.width});
    for (int r = 0; r < b; ++r) std::copy(input.input.begin(), input.input.end(), x.data() + r * 3 * cells);
    const auto y = model.forward(x, mode, &rng).output;
    for (int r = 0; r < b; ++r) {
      ++done;
      for (std::size_t c = 0; c < cells; ++c) {
        const double v = y[r * cells + c];
        const double delta = v - mean[c];
        mean[c] += delta / done;
        m2[c] += delta * (v - mean[c]);
      }
    }
  }
  McResult out{Tensor4<float>(Shape4{1, 1, g.height, g.width}),
               Tensor4<float>(Shape4{1, 1, g.height, g.width})};
  for (std::size_t c = 0; c < cells; ++c) {
    out.mean[c] = static_cast<float>(mean[c]);
    out.std[c] = static_cast<float>(std::sqrt(m2[c] / options.passes));
  }
  return out;
}

Ranking rank_by_mse(const std::vector<double>& mse, const std::vector<std::size_t>& candidates,
                    std::size_t k) {
  std::vector<std::size_t> asc = candidates;
  std::sort(asc.begin(), asc.end(), [&](std::size_t a, std::size_t b) {
    return mse.at(a) != mse.at(b) ? mse[a] < mse[b] : a < b;
  });
  std::vector<std::size_t> desc = candidates;
  std::sort(desc.begin(), desc.end(), [&](std::size_t a, std::size_t b) {
    return mse.at(a) != mse.at(b) ? mse[a] > mse[b] : a < b;
  });
  k = std::min(k, candidates.size());
  Ranking r;
  for (std::size_t i = 0; i < k; ++i) {
    r.best.push_back({asc[i], mse[asc[i]]});
    r.worst.push_back({desc[i], mse[desc[i]]});
  }
  return r;
}

Ranking rank_predictions(model::Model& model, const data::Dataset& dataset,
                         std::size_t subset_size, std::size_t k, std::uint64_t seed) {
  const std::size_t n = dataset.samples.size();
  std::vector<std::size_t> subset(n);
  std::iota(subset.begin(), subset.end(), 0);
  if (subset_size < n) {
    std::mt19937_64 rng(seed);
    std::shuffle(subset.begin(), subset.end(), rng);
    subset.resize(subset_size);
    std::sort(subset.begin(), subset.end());
  }
  std::vector<Sample> chosen;
  chosen.reserve(subset.size());
  for (std::size_t i : subset) chosen.push_back(dataset.samples[i]);
  const auto preds = predict(model, chosen);
  std::vector<std::size_t> all(chosen.size());
  std::iota(all.begin(), all.end(), 0);
  const auto targets = batch_targets(chosen, all);
  const std::size_t per = preds.size() / preds.n();
  std::vector<double> mse(n, 0.0);
  for (std::size_t b = 0; b < subset.size(); ++b) {
    double s = 0.0;
    for (std::size_t j = 0; j < per; ++j) {
      const double d = static_cast<double>(preds[b * per + j]) - targets[b * per + j];
      s += d * d;
    }
    mse[subset[b]] = s / per;
  }
  return rank_by_mse(mse, subset, k);
}

const GeneralizationRow& GeneralizationReport::row(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw ConfigError("no generalization row named '" + name + "'");
}

std::string GeneralizationReport::to_text() const {
  const double base = rows.empty() ? 0.0 : rows.front().mean_mse;
  std::ostringstream os;
  os << std::left << std::setw(18) << "distribution" << std::right << std::setw(9) << "samples"
     << std::setw(14) << "mse" << std::setw(14) << "pixel_rmse" << std::setw(12) << "vs_base"
     << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(18) << r.name << std::right << std::setw(9) << r.n_samples
       << std::scientific << std::setprecision(4) << std::setw(14) << r.mean_mse << std::setw(14)
       << r.pixel_rmse << std::fixed << std::setprecision(3) << std::setw(12)
       << (base > 0 ? r.mean_mse / base : 0.0) << std::defaultfloat << "\n";
  }
  return os.str();
}

std::string GeneralizationReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "distribution,n_samples,mean_mse,pixel_rmse\n";
  for (const auto& r : rows) {
    os << r.name << "," << r.n_samples << "," << r.mean_mse << "," << r.pixel_rmse << "\n";
  }
  return os.str();
}

std::vector<std::pair<std::string, data::DatasetConfig>> generalization_distributions(
    const data::DatasetConfig& base, std::size_t n_samples) {
  std::vector<std::pair<std::string, data::DatasetConfig>> out;
  auto make = [&](const std::string& name, std::uint64_t salt) {
    data::DatasetConfig c = base;
    c.n_samples = n_samples;
    c.seed = data::derive_seed(base.seed, 0x6e6e000000000000ULL + salt);
    out.emplace_back(name, c);
    return &out.back().second;
  };
  make("in_distribution", 0);
  make("k_3_classes", 1)->class_values = {0.1, 0.55, 1.0};
  {
    auto* c = make("k_10_classes", 2);
    c->class_values.clear();
    for (int i = 0; i < 10; ++i) c->class_values.push_back(0.1 + 0.1 * i);
  }
  {
    auto* c = make("wells_3", 3);
    c->well_count_min = c->well_count_max = 3;
  }
  {
    auto* c = make("wells_10", 4);
    c->well_count_min = c->well_count_max = 10;
  }
  return out;
}

GeneralizationReport generalization_suite(model::Model& model, const data::DatasetConfig& base,
                                          std::size_t n_samples, unsigned workers) {
  GeneralizationReport report;
  for (const auto& [name, cfg] : generalization_distributions(base, n_samples)) {
    const auto ds = data::generate_dataset(cfg, workers);
    const auto preds = predict(model, ds.samples);
    std::vector<std::size_t> all(ds.samples.size());
    std::iota(all.begin(), all.end(), 0);
    const auto targets = batch_targets(ds.samples, all);
    const double mse = mse_loss(preds, targets);
    report.rows.push_back({name, ds.samples.size(), mse, std::sqrt(mse)});
  }
  return report;
}

namespace {

TimingStats stats_of(const std::vector<double>& xs) {
  TimingStats s;
  for (double x : xs) s.mean_s += x;
  s.mean_s /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - s.mean_s) * (x - s.mean_s);
  s.std_s = xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1)) : 0.0;
  return s;
}

}  // namespace

std::string BenchReport::to_text() const {
  std::ostringstream os;
  os << "wall-clock per sample, " << grid.height << "x" << grid.width << ", " << scenarios
     << " scenarios, mean of " << runs << " runs (" << warmup << " warmup excluded)\n";
  os << std::left << std::setw(20) << "method" << std::right << std::setw(14) << "mean_s"
     << std::setw(14) << "std_s" << "\n";
  os << std::scientific << std::setprecision(4);
  os << std::left << std::setw(20) << "finite_difference" << std::right << std::setw(14)
     << fd.mean_s << std::setw(14) << fd.std_s << "\n";
  os << std::left << std::setw(20) << "surrogate" << std::right << std::setw(14)
     << surrogate.mean_s << std::setw(14) << surrogate.std_s << "\n";
  os << std::fixed << std::setprecision(2) << "speedup " << speedup() << "x\n";
  return os.str();
}

std::string BenchReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "method,mean_s,std_s,runs,scenarios\n";
  os << "finite_difference," << fd.mean_s << "," << fd.std_s << "," << runs << "," << scenarios
     << "\n";
  os << "surrogate," << surrogate.mean_s << "," << surrogate.std_s << "," << runs << ","
     << scenarios << "\n";
  return os.str();
}

BenchReport benchmark_wallclock(model::Model& model, const data::DatasetConfig& scenarios,
                                std::size_t n_scenarios, int runs, int warmup, int batch_size) {
  if (runs < 2 || warmup < 1) throw ConfigError("benchmark needs runs >= 2 and warmup >= 1");
  if (n_scenarios < 1) throw ConfigError("benchmark needs at least one scenario");
  scenarios.validate();
  model.config().validate_grid(scenarios.grid);

  struct Case {
    ScenarioSpec scenario;
    ConductivityField k;
  };
  std::vector<Case> cases;
  std::vector<Sample> inputs;
  for (std::size_t i = 0; i < n_scenarios; ++i) {
    std::mt19937_64 rng(data::derive_seed(scenarios.seed, i));
    ScenarioSpec s = data::sample_scenario(rng, scenarios);
    const grf::GrfConfig gc{scenarios.grid, scenarios.correlation_length, scenarios.class_values,
                            rng()};
    ConductivityField k = grf::sample_conductivity(gc);
    const HeadField h = fd::solve_steady_state(k, s, 1e-10, nullptr, scenarios.well_count_max);
    inputs.push_back(data::encode_sample(s, k, h));
    cases.push_back({std::move(s), std::move(k)});
  }

  using clock = std::chrono::steady_clock;
  std::vector<double> fd_times, nn_times;
  double sink = 0.0;
  for (int r = 0; r < warmup + runs; ++r) {
    const auto t0 = clock::now();
    for (const auto& c : cases) {
      const HeadField h =
          fd::solve_steady_state(c.k, c.scenario, 1e-10, nullptr, scenarios.well_count_max);
      sink += h.values[h.values.size() / 2];
    }
    const auto t1 = clock::now();
    const auto y = predict(model, inputs, batch_size);
    const auto t2 = clock::now();
    sink += y[y.size() / 2];
    if (r < warmup) continue;
    fd_times.push_back(std::chrono::duration<double>(t1 - t0).count() / n_scenarios);
    nn_times.push_back(std::chrono::duration<double>(t2 - t1).count() / n_scenarios);
  }
  if (!std::isfinite(sink)) throw TrainingError("benchmark produced non-finite values");

  BenchReport rep;
  rep.grid = scenarios.grid;
  rep.scenarios = n_scenarios;
  rep.runs = runs;
  rep.warmup = warmup;
  rep.fd = stats_of(fd_times);
  rep.surrogate = stats_of(nn_times);
  return rep;
}

}  // namespace gw::train
