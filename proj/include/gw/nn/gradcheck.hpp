#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gw::nn {

// One array to perturb: `value` is modified in place and restored; `analytic`
// holds the gradient produced by the backward pass under test.
template <typename T>
struct GradProbe {
  std::string name;
  std::span<T> value;
  std::span<const T> analytic;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst;  // "<name>[<index>] analytic=<a> numeric=<n>"
  std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Central differences of `loss` over up to max_per_probe randomly chosen
// entries of each probe (all entries when the probe is smaller).
template <typename T>
GradCheckResult gradient_check(const std::function<double()>& loss,
                               const std::vector<GradProbe<T>>& probes, double eps = 1e-3,
                               std::size_t max_per_probe = 64, std::uint64_t seed = 1,
                               double floor = 1e-6) {
  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (const auto& probe : probes) {
    std::vector<std::size_t> idx(probe.value.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (idx.size() > max_per_probe) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_per_probe);
    }
    for (const std::size_t i : idx) {
      const T saved = probe.value[i];
      probe.value[i] = static_cast<T>(saved + eps);
      const double up = loss();
      probe.value[i] = static_cast<T>(saved - eps);
      const double down = loss();
      probe.value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(probe.analytic[i], numeric, floor);
      ++result.checked;
      if (err > result.max_relative_error || result.worst.empty()) {
        result.max_relative_error = err;
        result.worst = probe.name + "[" + std::to_string(i) +
                       "] analytic=" + std::to_string(static_cast<double>(probe.analytic[i])) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace gw::nn
