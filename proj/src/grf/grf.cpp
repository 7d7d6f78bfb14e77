#include "gw/grf/grf.hpp"

#include <fftw3.h>

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <tuple>

#include "gw/core/error.hpp"

namespace gw::grf {
namespace {

// FFTW planning is not thread-safe; execution with new-array calls is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct Embedding {
  int rows = 0;
  int cols = 0;
  std::vector<double> sqrt_eigen;  // sqrt(lambda / (rows * cols))
  fftw_plan plan = nullptr;

  Embedding() = default;
  Embedding(const Embedding&) = delete;
  Embedding& operator=(const Embedding&) = delete;
  ~Embedding() {
    if (plan) {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Tries successively larger tori; returns nullptr with the diagnostic filled
// when none is PSD within tolerance.
std::shared_ptr<const Embedding> build_embedding(int h, int w, double ell) {
  constexpr int kMaxGrowth = 4;  // up to 2^4 times the minimal torus
  constexpr double kRelTol = 1e-8;
  double worst = 0.0;
  int rows = next_pow2(2 * h);
  int cols = next_pow2(2 * w);
  for (int grow = 0; grow <= kMaxGrowth; ++grow, rows *= 2, cols *= 2) {
    const std::size_t m = static_cast<std::size_t>(rows) * cols;
    auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * m));
    fftw_plan plan;
    {
      std::lock_guard lock(fftw_planner_mutex());
      plan = fftw_plan_dft_2d(rows, cols, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    for (int i = 0; i < rows; ++i) {
      const int di = std::min(i, rows - i);
      for (int j = 0; j < cols; ++j) {
        const int dj = std::min(j, cols - j);
        buf[static_cast<std::size_t>(i) * cols + j][0] =
            covariance(std::hypot(static_cast<double>(di), static_cast<double>(dj)), ell);
        buf[static_cast<std::size_t>(i) * cols + j][1] = 0.0;
      }
    }
    fftw_execute(plan);
    double max_eig = 0.0, min_eig = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      max_eig = std::max(max_eig, buf[k][0]);
      min_eig = std::min(min_eig, buf[k][0]);
    }
    if (min_eig >= -kRelTol * max_eig) {
      auto emb = std::make_shared<Embedding>();
      emb->rows = rows;
      emb->cols = cols;
      emb->sqrt_eigen.resize(m);
      for (std::size_t k = 0; k < m; ++k) {
        emb->sqrt_eigen[k] = std::sqrt(std::max(buf[k][0], 0.0) / static_cast<double>(m));
      }
      emb->plan = plan;
      fftw_free(buf);
      return emb;
    }
    worst = min_eig / max_eig;
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan);
    }
    fftw_free(buf);
  }
  std::ostringstream os;
  os << "circulant embedding not positive semi-definite for correlation length " << ell
     << " on " << h << "x" << w << " (min/max eigenvalue ratio " << worst << " at torus "
     << rows / 2 << "x" << cols / 2 << ")";
  throw GenerationError(os.str());
}

std::shared_ptr<const Embedding> embedding_for(int h, int w, double ell) {
  static std::mutex cache_mutex;
  static std::map<std::tuple<int, int, double>, std::shared_ptr<const Embedding>> cache;
  const auto key = std::make_tuple(h, w, ell);
  {
    std::lock_guard lock(cache_mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto emb = build_embedding(h, w, ell);
  std::lock_guard lock(cache_mutex);
  return cache.emplace(key, std::move(emb)).first->second;
}

}  // namespace

void GrfConfig::validate() const {
  grid.validate();
  if (!(correlation_length > 0.0) || !std::isfinite(correlation_length)) {
    throw ConfigError("correlation length must be > 0");
  }
  if (class_values.size() < 2) throw ConfigError("need at least 2 conductivity classes");
  for (std::size_t i = 0; i < class_values.size(); ++i) {
    if (!(class_values[i] > 0.0)) throw ConfigError("conductivity classes must be > 0");
    if (i > 0 && !(class_values[i] > class_values[i - 1])) {
      throw ConfigError("conductivity classes must be strictly ascending");
    }
  }
}

double covariance(double distance, double correlation_length) {
  const double r = distance / correlation_length;
  return std::exp(-r * r);
}

ContinuousField sample_continuous_grf(const GrfConfig& config) {
  config.validate();
  const int h = config.grid.height;
  const int w = config.grid.width;
  const auto emb = embedding_for(h, w, config.correlation_length);
  const std::size_t m = static_cast<std::size_t>(emb->rows) * emb->cols;

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * m));
  for (std::size_t k = 0; k < m; ++k) {
    buf[k][0] = emb->sqrt_eigen[k] * normal(rng);
    buf[k][1] = emb->sqrt_eigen[k] * normal(rng);
  }
  fftw_execute_dft(emb->plan, buf, buf);

  ContinuousField field{config.grid, std::vector<double>(config.grid.cells())};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      field.values[config.grid.index(r, c)] = buf[static_cast<std::size_t>(r) * emb->cols + c][0];
    }
  }
  fftw_free(buf);
  return field;
}

std::vector<double> class_thresholds(std::size_t class_count) {
  const boost::math::normal_distribution<double> std_normal;
  std::vector<double> t;
  t.reserve(class_count > 0 ? class_count - 1 : 0);
  for (std::size_t i = 1; i < class_count; ++i) {
    t.push_back(boost::math::quantile(std_normal, static_cast<double>(i) / class_count));
  }
  return t;
}

ConductivityField quantize_field(const ContinuousField& field,
                                 std::span<const double> class_values) {
  if (class_values.size() < 2) throw ConfigError("need at least 2 conductivity classes");
  const auto thresholds = class_thresholds(class_values.size());
  ConductivityField k{field.grid, std::vector<double>(field.values.size())};
  for (std::size_t i = 0; i < field.values.size(); ++i) {
    // lower_bound counts thresholds strictly below the value: ties go low.
    const auto idx = std::lower_bound(thresholds.begin(), thresholds.end(), field.values[i]) -
                     thresholds.begin();
    k.values[i] = class_values[static_cast<std::size_t>(idx)];
  }
  return k;
}

ConductivityField sample_conductivity(const GrfConfig& config) {
  return quantize_field(sample_continuous_grf(config), config.class_values);
}

}  // namespace gw::grf
