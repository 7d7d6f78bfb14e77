#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gw/core/grid.hpp"

namespace gw::grf {

inline const std::vector<double>& default_class_values() {
  static const std::vector<double> values{0.1, 0.325, 0.55, 0.775, 1.0};
  return values;
}

struct GrfConfig {
  GridSpec grid;
  double correlation_length = 8.0;  // cells
  std::vector<double> class_values = default_class_values();
  std::uint64_t seed = 0;

  void validate() const;
};

// Stationary zero-mean unit-variance field on the grid.
struct ContinuousField {
  GridSpec grid;
  std::vector<double> values;
};

// Isotropic squared-exponential covariance, C(r) = exp(-(r / l)^2).
double covariance(double distance, double correlation_length);

// Samples a Gaussian random field by circulant embedding of the covariance
// on a periodic torus at least twice the grid in each direction. The torus is
// enlarged until the embedding is positive semi-definite; GenerationError
// carries the most negative eigenvalue when no admissible size is found.
ContinuousField sample_continuous_grf(const GrfConfig& config);

// k - 1 equal-probability thresholds Phi^-1(i / k), ascending.
std::vector<double> class_thresholds(std::size_t class_count);

// Maps each cell to class_values[#thresholds strictly below the value].
ConductivityField quantize_field(const ContinuousField& field,
                                 std::span<const double> class_values);

// Convenience: sample then quantize with config.class_values.
ConductivityField sample_conductivity(const GrfConfig& config);

}  // namespace gw::grf
