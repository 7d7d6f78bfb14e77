#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gw/data/dataset.hpp"
#include "gw/model/unet.hpp"
#include "gw/nn/tensor.hpp"

namespace gw::train {

struct TrainConfig {
  int epochs = 130;
  int batch_size = 32;
  double learning_rate = 8e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  // Epochs after which attention maps of the probe samples are captured.
  std::vector<int> snapshot_epochs{10, 40, 130};
  std::vector<std::size_t> probe_indices{0};
  // Evaluate losses before the first update and record them as epoch 0.
  bool record_initial_loss = true;
  // Samples per eval-mode forward when computing validation loss.
  int eval_batch_size = 64;

  void validate() const;
};

// Bias-corrected Adam (Kingma & Ba, Algorithm 1):
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   theta <- theta - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
template <typename T>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Updates every trainable parameter from its accumulated gradient. Throws
  // TrainingError naming the parameter when a gradient is not finite; no
  // parameter is modified in that case.
  void step(const std::vector<nn::Param<T>*>& params);

  int steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct AttentionSnapshot {
  int epoch = 0;
  std::size_t sample_index = 0;
  std::vector<nn::Tensor4<float>> maps;  // deepest gate first, (1, 1, h, w)
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::vector<AttentionSnapshot> snapshots;
};

// Header "epoch,train_loss,val_loss".
std::string history_csv(const std::vector<EpochRecord>& history);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch training with a per-epoch shuffle drawn from config.seed. A
// trailing batch of one sample is dropped (batch norm needs two).
TrainResult train(model::Model& model, const data::Dataset& train_set,
                  const data::Dataset& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// (N, 3, H, W) input and (N, 1, H, W) target tensors for the listed samples.
nn::Tensor4<float> batch_inputs(const std::vector<Sample>& samples,
                                const std::vector<std::size_t>& indices);
nn::Tensor4<float> batch_targets(const std::vector<Sample>& samples,
                                 const std::vector<std::size_t>& indices);

// Eval-mode predictions for every sample, (N, 1, H, W).
nn::Tensor4<float> predict(model::Model& model, const std::vector<Sample>& samples,
                           int batch_size = 64);

struct Metrics {
  // sqrt(mean over samples of the summed squared error per image).
  double rmse = 0.0;
  // sqrt(mean over all pixels of the squared error).
  double pixel_rmse = 0.0;
  double r2 = 0.0;
  double mean_mse = 0.0;
  std::vector<double> per_sample_mse;
};

// preds and targets are (N, 1, H, W); R^2 uses the mean target image and
// needs N >= 2 with non-zero variance.
Metrics compute_metrics(const nn::Tensor4<float>& preds, const nn::Tensor4<float>& targets);
std::string metrics_csv(const Metrics& m);

struct McOptions {
  int passes = 1000;
  std::uint64_t seed = 0;
  int batch_size = 50;
  // false runs every pass with dropout inactive.
  bool dropout_enabled = true;
};

struct McResult {
  nn::Tensor4<float> mean;  // (1, 1, H, W)
  nn::Tensor4<float> std;   // population standard deviation over passes
};

// Batch norm uses running statistics while dropout stays active.
McResult mc_dropout_predict(model::Model& model, const Sample& input, const McOptions& options);

struct RankedSample {
  std::size_t index = 0;
  double mse = 0.0;
};

struct Ranking {
  std::vector<RankedSample> best;   // ascending MSE
  std::vector<RankedSample> worst;  // descending MSE
};

// Orders the candidates by MSE with the lower index first on ties.
Ranking rank_by_mse(const std::vector<double>& mse, const std::vector<std::size_t>& candidates,
                    std::size_t k);

// Per-sample MSE over a seeded random subset of the dataset (the whole set
// when subset_size >= size).
Ranking rank_predictions(model::Model& model, const data::Dataset& dataset,
                         std::size_t subset_size = 500, std::size_t k = 5,
                         std::uint64_t seed = 0);

struct GeneralizationRow {
  std::string name;
  std::size_t n_samples = 0;
  double mean_mse = 0.0;
  double pixel_rmse = 0.0;
};

struct GeneralizationReport {
  std::vector<GeneralizationRow> rows;  // in-distribution baseline first

  const GeneralizationRow& row(const std::string& name) const;
  std::string to_text() const;
  std::string to_csv() const;
};

// The base distribution plus four shifted ones: conductivity with 3 and with
// 10 classes, and exactly 3 and exactly 10 wells.
std::vector<std::pair<std::string, data::DatasetConfig>> generalization_distributions(
    const data::DatasetConfig& base, std::size_t n_samples = 1000);

GeneralizationReport generalization_suite(model::Model& model, const data::DatasetConfig& base,
                                          std::size_t n_samples = 1000, unsigned workers = 1);

struct TimingStats {
  double mean_s = 0.0;
  double std_s = 0.0;
};

struct BenchReport {
  GridSpec grid;
  std::size_t scenarios = 0;
  int runs = 0;
  int warmup = 0;
  TimingStats fd;         // per sample
  TimingStats surrogate;  // per sample, batched inference
  double speedup() const { return fd.mean_s / surrogate.mean_s; }
  std::string to_text() const;
  std::string to_csv() const;
};

// Times the finite-difference solve and surrogate inference on the same
// scenarios. Each run solves every scenario once and pushes all of them
// through the model in batches; `warmup` runs are discarded.
BenchReport benchmark_wallclock(model::Model& model, const data::DatasetConfig& scenarios,
                                std::size_t n_scenarios, int runs = 10, int warmup = 1,
                                int batch_size = 32);

}  // namespace gw::train
