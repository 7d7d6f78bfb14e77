#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "gw/core/grid.hpp"
#include "gw/grf/grf.hpp"

namespace gw::data {

inline constexpr char kDatasetMagic[4] = {'G', 'W', 'D', 'S'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 28;
inline constexpr const char* kGeneratorVersion = "gwsurrogate-datagen/1";

struct DatasetConfig {
  GridSpec grid;
  std::size_t n_samples = 1;
  std::uint64_t seed = 0;
  int well_count_min = 1;
  int well_count_max = 3;
  double well_head_min = 0.5;  // [min, max)
  double well_head_max = 1.0;
  double boundary_head = 1.0;
  double correlation_length = 8.0;
  std::vector<double> class_values = grf::default_class_values();

  void validate() const;
  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct Dataset {
  DatasetConfig config;
  std::vector<Sample> samples;
};

// splitmix64 finaliser over (seed, index); per-sample streams are independent
// of generation order.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

ScenarioSpec sample_scenario(std::mt19937_64& rng, const DatasetConfig& config);

Sample encode_sample(const ScenarioSpec& scenario, const ConductivityField& k,
                     const HeadField& head);

struct DecodedInput {
  CellMask mask;
  std::vector<double> fixed_heads;
  ConductivityField conductivity;
};
DecodedInput decode_sample(const Sample& sample);

// Sample i is a pure function of (config, i). workers = 0 uses the hardware
// concurrency.
Sample generate_sample(const DatasetConfig& config, std::size_t index);
Dataset generate_dataset(const DatasetConfig& config, unsigned workers = 1);

// "<dir>/<stem>.gwds" pairs with "<dir>/<stem>.manifest".
std::filesystem::path manifest_path(const std::filesystem::path& dataset_path);

// Writes the binary file and its manifest sidecar.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

std::string manifest_text(const DatasetConfig& config,
                          const std::vector<std::string>& extra_lines = {});
void write_manifest(const DatasetConfig& config, const std::filesystem::path& path,
                    const std::vector<std::string>& extra_lines = {});
DatasetConfig parse_manifest(const std::string& text);

}  // namespace gw::data
