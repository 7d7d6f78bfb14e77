#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gw/model/unet.hpp"

namespace gw::model {

inline constexpr char kCheckpointMagic[4] = {'G', 'W', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   "GWCK" | u32 version | u32 len | config text (ModelConfig::to_text plus
//   a "grid=HxW" line) | u32 array count | per array: u32 name len, name,
//   u32 dtype (0 = float32), u32 rank (4), 4 x u32 dims | float32 payloads in
//   index order.
std::vector<std::uint8_t> serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
// Throws ConfigError when the stored variant or widths differ from `expected`.
Model load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace gw::model
