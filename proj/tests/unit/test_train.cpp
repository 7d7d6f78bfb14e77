#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "gw/core/error.hpp"
#include "gw/data/dataset.hpp"
#include "gw/model/checkpoint.hpp"
#include "gw/train/loss.hpp"
#include "gw/train/train.hpp"

using namespace gw;
using nn::Shape4;
using nn::Tensor4;

namespace {

model::ModelConfig tiny_config() {
  model::ModelConfig c;
  c.encoder_widths = {4, 8, 16, 32};
  return c;
}

data::DatasetConfig tiny_data(std::size_t n, std::uint64_t seed) {
  data::DatasetConfig c;
  c.grid = {16, 16};
  c.n_samples = n;
  c.seed = seed;
  return c;
}

nn::Param<float> scalar_param(float value, float grad) {
  nn::Param<float> p("p", {1, 1, 1, 1});
  p.value[0] = value;
  p.grad[0] = grad;
  return p;
}

}  // namespace

TEST_CASE("mse loss") {
  const Tensor4<float> pred({2, 1, 1, 2}, {0.5f, 0.5f, 1.0f, 0.0f});
  const Tensor4<float> same_half({2, 1, 1, 2}, {0.0f, 1.0f, 1.0f, 0.0f});
  // Per-image means 0.25 and 0, batch mean 0.125.
  CHECK(train::mse_loss(pred, same_half) == doctest::Approx(0.125));
  const Tensor4<float> a({1, 1, 1, 2}, {0.5f, 0.5f}), b({1, 1, 1, 2}, {0.0f, 1.0f});
  CHECK(train::mse_loss(a, b) == doctest::Approx(0.25));
  const auto g = train::mse_loss_grad(a, b);
  CHECK(g[0] == doctest::Approx(0.5));
  CHECK(g[1] == doctest::Approx(-0.5));
  CHECK_THROWS_AS(train::mse_loss(a, pred), ShapeError);
}

TEST_CASE("adam") {
  SUBCASE("first step moves by lr in the gradient's direction") {
    auto p = scalar_param(1.0f, 0.5f);
    train::Adam<float> opt(0.1, 0.9, 0.999, 1e-8);
    opt.step({&p});
    CHECK(p.value[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)));
    CHECK(opt.steps() == 1);
  }
  SUBCASE("zero gradient leaves the parameter in place") {
    auto p = scalar_param(2.0f, 0.0f);
    train::Adam<float> opt(0.1, 0.9, 0.999, 1e-8);
    opt.step({&p});
    CHECK(p.value[0] == 2.0f);
  }
  SUBCASE("three iterations against a hand trace") {
    const double grads[3] = {1.0, -0.5, 0.25};
    double theta = 0.3, m = 0.0, v = 0.0;
    auto p = scalar_param(0.3f, 0.0f);
    train::Adam<float> opt(0.01, 0.9, 0.999, 1e-8);
    for (int t = 1; t <= 3; ++t) {
      const double g = grads[t - 1];
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      theta -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
      p.grad[0] = static_cast<float>(g);
      opt.step({&p});
      CHECK(p.value[0] == doctest::Approx(theta).epsilon(1e-6));
    }
  }
  SUBCASE("non-finite gradients are rejected before any update") {
    auto good = scalar_param(1.0f, 0.1f);
    auto bad = scalar_param(1.0f, std::numeric_limits<float>::quiet_NaN());
    bad.name = "down2.conv.weight";
    train::Adam<float> opt(0.1, 0.9, 0.999, 1e-8);
    CHECK_THROWS_WITH_AS(opt.step({&good, &bad}), doctest::Contains("down2.conv.weight"),
                         TrainingError);
    CHECK(good.value[0] == 1.0f);
  }
  SUBCASE("non-trainable arrays are skipped") {
    auto stat = scalar_param(1.0f, 1.0f);
    stat.trainable = false;
    train::Adam<float> opt(0.1, 0.9, 0.999, 1e-8);
    opt.step({&stat});
    CHECK(stat.value[0] == 1.0f);
  }
}

TEST_CASE("metrics") {
  Tensor4<float> targets({3, 1, 2, 2}, {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f, 0.9f,
                                        0.1f, 0.5f, 0.2f});
  SUBCASE("perfect prediction") {
    const auto m = train::compute_metrics(targets, targets);
    CHECK(m.rmse == 0.0);
    CHECK(m.r2 == 1.0);
  }
  SUBCASE("mean image scores zero") {
    Tensor4<float> mean_img(targets.shape());
    for (int i = 0; i < 4; ++i) {
      const double s = (double(targets[i]) + targets[4 + i] + targets[8 + i]) / 3.0;
      for (int n = 0; n < 3; ++n) mean_img[n * 4 + i] = static_cast<float>(s);
    }
    CHECK(train::compute_metrics(mean_img, targets).r2 == doctest::Approx(0.0).epsilon(1e-6));
  }
  SUBCASE("rmse and pixel rmse") {
    Tensor4<float> preds = targets;
    preds[0] += 0.2f;
    preds[5] -= 0.1f;
    const auto m = train::compute_metrics(preds, targets);
    // Summed squared error per image: 0.04, 0.01, 0.
    CHECK(m.rmse == doctest::Approx(std::sqrt(0.05 / 3)).epsilon(1e-5));
    CHECK(m.pixel_rmse == doctest::Approx(std::sqrt(0.05 / 12)).epsilon(1e-5));
    CHECK(m.rmse == doctest::Approx(m.pixel_rmse * 2.0));
    REQUIRE(m.per_sample_mse.size() == 3);
    CHECK(m.per_sample_mse[0] == doctest::Approx(0.01).epsilon(1e-5));
    CHECK(m.mean_mse == doctest::Approx(0.05 / 12).epsilon(1e-5));
    CHECK(train::metrics_csv(m).find("r2") != std::string::npos);
  }
  SUBCASE("degenerate inputs") {
    const Tensor4<float> one({1, 1, 2, 2}, 0.5f);
    CHECK_THROWS_AS(train::compute_metrics(one, one), DomainError);
    const Tensor4<float> flat({3, 1, 2, 2}, 0.5f);
    CHECK_THROWS_AS(train::compute_metrics(flat, flat), DomainError);
  }
}

TEST_CASE("ranking breaks ties by index") {
  const std::vector<double> mse{0.3, 0.1, 0.3, 0.1, 0.5};
  const auto r = train::rank_by_mse(mse, {0, 1, 2, 3, 4}, 3);
  REQUIRE(r.best.size() == 3);
  CHECK(r.best[0].index == 1);
  CHECK(r.best[1].index == 3);
  CHECK(r.best[2].index == 0);
  CHECK(r.worst[0].index == 4);
  CHECK(r.worst[1].index == 0);
  CHECK(r.worst[2].index == 2);
  CHECK(train::rank_by_mse(mse, {2, 4}, 5).best.size() == 2);
}

TEST_CASE("mc dropout") {
  model::Model m(tiny_config(), {16, 16}, 3);
  const auto ds = data::generate_dataset(tiny_data(1, 4));
  train::McOptions opt;
  opt.passes = 20;
  opt.batch_size = 7;
  opt.seed = 5;
  opt.dropout_enabled = false;
  const auto off = train::mc_dropout_predict(m, ds.samples[0], opt);
  for (float s : off.std.vec()) REQUIRE(s == 0.0f);
  const auto eval = train::predict(m, ds.samples);
  for (std::size_t i = 0; i < eval.size(); ++i) REQUIRE(off.mean[i] == doctest::Approx(eval[i]));

  opt.dropout_enabled = true;
  const auto on = train::mc_dropout_predict(m, ds.samples[0], opt);
  double std_sum = 0.0;
  for (float s : on.std.vec()) {
    REQUIRE(s >= 0.0f);
    std_sum += s;
  }
  CHECK(std_sum > 0.0);
  CHECK(train::mc_dropout_predict(m, ds.samples[0], opt).std == on.std);

  opt.passes = 1;
  CHECK_THROWS_AS(train::mc_dropout_predict(m, ds.samples[0], opt), ConfigError);
  auto no_drop = tiny_config();
  no_drop.dropout_rate = 0.0;
  model::Model nd(no_drop, {16, 16}, 3);
  opt.passes = 4;
  CHECK_THROWS_AS(train::mc_dropout_predict(nd, ds.samples[0], opt), ConfigError);
}

TEST_CASE("training reduces the loss and is reproducible") {
  const auto tr = data::generate_dataset(tiny_data(64, 10));
  const auto va = data::generate_dataset(tiny_data(16, 11));
  train::TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  cfg.seed = 12;
  cfg.snapshot_epochs = {2, 4};
  cfg.probe_indices = {0, 3};

  model::Model a(tiny_config(), {16, 16}, 13);
  std::vector<int> seen;
  const auto ra = train::train(a, tr, va, cfg, [&](const train::EpochRecord& r) {
    seen.push_back(r.epoch);
  });
  REQUIRE(ra.history.size() == 5);
  CHECK(ra.history[0].epoch == 0);
  CHECK(seen == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(ra.history.back().train_loss < ra.history.front().train_loss);
  CHECK(ra.history.back().val_loss < ra.history.front().val_loss);
  REQUIRE(ra.snapshots.size() == 4);
  CHECK(ra.snapshots[0].epoch == 2);
  CHECK(ra.snapshots[1].sample_index == 3);
  CHECK(ra.snapshots[0].maps.size() == 3);

  model::Model b(tiny_config(), {16, 16}, 13);
  const auto rb = train::train(b, tr, va, cfg);
  CHECK(model::serialize_checkpoint(a) == model::serialize_checkpoint(b));
  for (std::size_t i = 0; i < ra.history.size(); ++i) {
    CHECK(ra.history[i].train_loss == rb.history[i].train_loss);
    CHECK(ra.history[i].val_loss == rb.history[i].val_loss);
  }

  const std::string csv = train::history_csv(ra.history);
  CHECK(csv.rfind("epoch,train_loss,val_loss\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("training configuration errors") {
  train::TrainConfig cfg;
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("a diverging run reports the epoch") {
  const auto tr = data::generate_dataset(tiny_data(8, 20));
  train::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.record_initial_loss = false;
  model::Model m(tiny_config(), {16, 16}, 1);
  m.find_parameter("head.tconv.bias")->value[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH_AS(train::train(m, tr, tr, cfg), doctest::Contains("epoch 1"),
                       TrainingError);
}

TEST_CASE("generalization distributions and report") {
  const auto base = tiny_data(1000, 7);
  const auto dists = train::generalization_distributions(base, 25);
  REQUIRE(dists.size() == 5);
  CHECK(dists[0].first == "in_distribution");
  CHECK(dists[1].second.class_values == std::vector<double>{0.1, 0.55, 1.0});
  CHECK(dists[2].second.class_values.size() == 10);
  CHECK(dists[2].second.class_values.front() == doctest::Approx(0.1));
  CHECK(dists[2].second.class_values.back() == doctest::Approx(1.0));
  CHECK(dists[3].second.well_count_min == 3);
  CHECK(dists[3].second.well_count_max == 3);
  CHECK(dists[4].second.well_count_min == 10);
  for (const auto& [name, cfg] : dists) {
    CHECK(cfg.n_samples == 25);
    CHECK(cfg.grid == base.grid);
    CHECK(cfg.seed != base.seed);
  }

  model::Model m(tiny_config(), {16, 16}, 2);
  const auto report = train::generalization_suite(m, base, 4);
  REQUIRE(report.rows.size() == 5);
  for (const auto& row : report.rows) {
    CHECK(row.n_samples == 4);
    CHECK(row.mean_mse > 0.0);
    CHECK(row.pixel_rmse == doctest::Approx(std::sqrt(row.mean_mse)));
  }
  CHECK(report.row("wells_10").n_samples == 4);
  CHECK_THROWS(report.row("missing"));
  const std::string csv = report.to_csv();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(report.to_text().find("wells_10") != std::string::npos);
}

TEST_CASE("benchmark report") {
  model::Model m(tiny_config(), {16, 16}, 2);
  const auto r = train::benchmark_wallclock(m, tiny_data(1, 3), 4, 2, 1, 2);
  CHECK(r.runs == 2);
  CHECK(r.warmup == 1);
  CHECK(r.scenarios == 4);
  CHECK(r.fd.mean_s > 0.0);
  CHECK(r.surrogate.mean_s > 0.0);
  CHECK(r.fd.std_s >= 0.0);
  CHECK(r.speedup() == doctest::Approx(r.fd.mean_s / r.surrogate.mean_s));
  CHECK(r.to_text().find("16x16") != std::string::npos);
  CHECK(r.to_csv().find("finite_difference,") != std::string::npos);
}

TEST_CASE("prediction subset ranking") {
  model::Model m(tiny_config(), {16, 16}, 2);
  const auto ds = data::generate_dataset(tiny_data(12, 30));
  const auto r = train::rank_predictions(m, ds, 8, 3, 1);
  REQUIRE(r.best.size() == 3);
  CHECK(r.best[0].mse <= r.best[1].mse);
  CHECK(r.worst[0].mse >= r.worst[1].mse);
  CHECK(r.best[0].mse <= r.worst[0].mse);
  const auto again = train::rank_predictions(m, ds, 8, 3, 1);
  CHECK(again.best[0].index == r.best[0].index);
}
