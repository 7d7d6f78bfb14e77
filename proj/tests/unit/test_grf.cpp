#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "gw/core/error.hpp"
#include "gw/grf/grf.hpp"

using namespace gw;

TEST_CASE("covariance is the squared-exponential kernel") {
  CHECK(grf::covariance(0.0, 8.0) == 1.0);
  CHECK(grf::covariance(8.0, 8.0) == doctest::Approx(std::exp(-1.0)));
  CHECK(grf::covariance(4.0, 8.0) == doctest::Approx(std::exp(-0.25)));
}

TEST_CASE("config validation") {
  grf::GrfConfig c{GridSpec{16, 16}};
  CHECK_NOTHROW(c.validate());
  c.correlation_length = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.correlation_length = 8.0;
  c.class_values = {0.5, 0.2};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.class_values = {-0.1, 0.2};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("same seed gives the same field, different seeds differ") {
  grf::GrfConfig c{GridSpec{32, 24}, 8.0, grf::default_class_values(), 77};
  const auto a = grf::sample_continuous_grf(c);
  const auto b = grf::sample_continuous_grf(c);
  CHECK(a.values == b.values);
  c.seed = 78;
  CHECK(grf::sample_continuous_grf(c).values != a.values);
  CHECK(a.values.size() == 32u * 24u);
}

TEST_CASE("per-cell mean and variance over many seeds") {
  const int n = 10000;
  grf::GrfConfig c{GridSpec{16, 16}};
  std::vector<double> sum(256, 0.0), sq(256, 0.0);
  for (int s = 0; s < n; ++s) {
    c.seed = static_cast<std::uint64_t>(s);
    const auto f = grf::sample_continuous_grf(c);
    for (int i = 0; i < 256; ++i) {
      sum[i] += f.values[i];
      sq[i] += f.values[i] * f.values[i];
    }
  }
  double worst_mean = 0.0, min_var = 10.0, max_var = 0.0;
  for (int i = 0; i < 256; ++i) {
    const double mu = sum[i] / n;
    const double var = sq[i] / n - mu * mu;
    worst_mean = std::max(worst_mean, std::abs(mu));
    min_var = std::min(min_var, var);
    max_var = std::max(max_var, var);
  }
  CHECK(worst_mean < 0.05);
  CHECK(min_var >= 0.9);
  CHECK(max_var <= 1.1);
}

TEST_CASE("empirical lag correlation matches the analytic covariance") {
  grf::GrfConfig c{GridSpec{32, 32}};
  double lag1 = 0.0, lag4 = 0.0, var = 0.0;
  long pairs1 = 0, pairs4 = 0, cells = 0;
  for (int s = 0; s < 400; ++s) {
    c.seed = 1000 + static_cast<std::uint64_t>(s);
    const auto f = grf::sample_continuous_grf(c);
    for (int r = 0; r < 32; ++r) {
      for (int col = 0; col < 32; ++col) {
        const double v = f.values[r * 32 + col];
        var += v * v;
        ++cells;
        if (col + 1 < 32) {
          lag1 += v * f.values[r * 32 + col + 1];
          ++pairs1;
        }
        if (r + 4 < 32) {
          lag4 += v * f.values[(r + 4) * 32 + col];
          ++pairs4;
        }
      }
    }
  }
  const double v = var / cells;
  CHECK(lag1 / pairs1 / v == doctest::Approx(std::exp(-1.0 / 64.0)).epsilon(0.05));
  CHECK(std::abs(lag4 / pairs4 / v - std::exp(-16.0 / 64.0)) < 0.05);
}

TEST_CASE("embedding failure reports the negative eigenvalue") {
  grf::GrfConfig c{GridSpec{16, 16}, 400.0, grf::default_class_values(), 1};
  CHECK_THROWS_AS(grf::sample_continuous_grf(c), GenerationError);
}

TEST_CASE("class thresholds are standard normal quantiles") {
  const auto t = grf::class_thresholds(5);
  REQUIRE(t.size() == 4);
  CHECK(t[0] == doctest::Approx(-0.8416212335729143));
  CHECK(t[1] == doctest::Approx(-0.2533471031357997));
  CHECK(t[2] == doctest::Approx(0.2533471031357997));
  CHECK(t[3] == doctest::Approx(0.8416212335729143));
  const auto t2 = grf::class_thresholds(2);
  REQUIRE(t2.size() == 1);
  CHECK(t2[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("quantisation of constant and extreme fields") {
  const auto& cls = grf::default_class_values();
  grf::ContinuousField zero{GridSpec{4, 4}, std::vector<double>(16, 0.0)};
  const auto k0 = grf::quantize_field(zero, cls);
  for (double v : k0.values) CHECK(v == 0.55);
  grf::ContinuousField ext{GridSpec{4, 4}, std::vector<double>(16, -10.0)};
  ext.values[3] = 10.0;
  const auto k1 = grf::quantize_field(ext, cls);
  CHECK(k1.values[0] == 0.1);
  CHECK(k1.values[3] == 1.0);
}

TEST_CASE("a value exactly on a threshold takes the lower class") {
  const auto t = grf::class_thresholds(5);
  grf::ContinuousField f{GridSpec{4, 4}, std::vector<double>(16, t[1])};
  const auto k = grf::quantize_field(f, grf::default_class_values());
  CHECK(k.values[0] == 0.325);
}

TEST_CASE("classes have equal mass and quantisation is monotone") {
  const auto& cls = grf::default_class_values();
  std::vector<long> counts(cls.size(), 0);
  long total = 0;
  for (int s = 0; s < 100; ++s) {
    grf::GrfConfig c{GridSpec{64, 64}, 8.0, cls, 5000 + static_cast<std::uint64_t>(s)};
    const auto f = grf::sample_continuous_grf(c);
    const auto k = grf::quantize_field(f, cls);
    std::vector<std::size_t> order(f.values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return f.values[a] < f.values[b]; });
    for (std::size_t i = 1; i < order.size(); ++i) {
      REQUIRE(k.values[order[i]] >= k.values[order[i - 1]]);
    }
    for (double v : k.values) {
      const auto it = std::find(cls.begin(), cls.end(), v);
      REQUIRE(it != cls.end());
      ++counts[it - cls.begin()];
      ++total;
    }
  }
  for (long c : counts) CHECK(std::abs(static_cast<double>(c) / total - 0.2) < 0.02);
}

TEST_CASE("sample_conductivity draws only configured classes") {
  grf::GrfConfig c{GridSpec{20, 20}, 8.0, {0.1, 0.55, 1.0}, 3};
  const auto k = grf::sample_conductivity(c);
  const std::set<double> seen(k.values.begin(), k.values.end());
  for (double v : seen) CHECK((v == 0.1 || v == 0.55 || v == 1.0));
}
