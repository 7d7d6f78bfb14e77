#include "gw/core/grid.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <utility>

#include "gw/core/error.hpp"

namespace gw {

void GridSpec::validate() const {
  if (height < 4 || width < 4) {
    std::ostringstream os;
    os << "grid " << height << "x" << width << " too small (need H, W >= 4)";
    throw ValidationError(os.str());
  }
}

void ScenarioSpec::validate(int well_max) const {
  grid.validate();
  if (!(boundary_head > 0.0 && boundary_head <= 1.0)) {
    throw ValidationError("boundary head outside (0, 1]");
  }
  if (static_cast<int>(wells.size()) > well_max) {
    throw ValidationError("too many wells: " + std::to_string(wells.size()) + " > " +
                          std::to_string(well_max));
  }
  std::set<std::pair<int, int>> seen;
  for (const Well& w : wells) {
    if (!grid.contains(w.row, w.col)) {
      throw ValidationError("well outside grid at (" + std::to_string(w.row) + ", " +
                            std::to_string(w.col) + ")");
    }
    if (grid.on_ring(w.row, w.col)) {
      throw ValidationError("well on boundary at (" + std::to_string(w.row) + ", " +
                            std::to_string(w.col) + ")");
    }
    if (!seen.emplace(w.row, w.col).second) {
      throw ValidationError("duplicate well at (" + std::to_string(w.row) + ", " +
                            std::to_string(w.col) + ")");
    }
    if (!(w.head > 0.0 && w.head <= 1.0)) {
      throw ValidationError("well head outside (0, 1]");
    }
  }
}

std::vector<double> ScenarioSpec::fixed_heads() const {
  std::vector<double> heads(grid.cells(), 0.0);
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      if (grid.on_ring(r, c)) heads[grid.index(r, c)] = boundary_head;
    }
  }
  for (const Well& w : wells) heads[grid.index(w.row, w.col)] = w.head;
  return heads;
}

std::size_t CellMask::count() const {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), std::uint8_t{1}));
}

CellMask build_fixed_mask(const ScenarioSpec& scenario, int well_max) {
  scenario.validate(well_max);
  const GridSpec& g = scenario.grid;
  CellMask mask{g, std::vector<std::uint8_t>(g.cells(), 0)};
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      if (g.on_ring(r, c)) mask.flags[g.index(r, c)] = 1;
    }
  }
  for (const Well& w : scenario.wells) mask.flags[g.index(w.row, w.col)] = 1;
  return mask;
}

std::vector<std::string> validate_sample(const Sample& s) {
  std::vector<std::string> out;
  const std::size_t n = s.grid.cells();
  if (s.grid.height < 1 || s.grid.width < 1) {
    out.emplace_back("empty grid");
    return out;
  }
  if (s.input.size() != Sample::kInputChannels * n) {
    out.emplace_back("input size " + std::to_string(s.input.size()) + " != 3*H*W");
  }
  if (s.target.size() != n) {
    out.emplace_back("target size " + std::to_string(s.target.size()) + " != H*W");
  }
  if (!out.empty()) return out;

  auto head = s.channel(0);
  auto mask = s.channel(1);
  auto cond = s.channel(2);
  bool bad_mask = false, head_outside = false, bad_k = false, bad_target = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i] != 0.0f && mask[i] != 1.0f) bad_mask = true;
    if (mask[i] != 1.0f && head[i] != 0.0f) head_outside = true;
    if (!(cond[i] > 0.0f) || !std::isfinite(cond[i])) bad_k = true;
    if (!(s.target[i] >= 0.0f && s.target[i] <= 1.0f)) bad_target = true;
  }
  if (bad_mask) out.emplace_back("mask not binary");
  if (head_outside) out.emplace_back("head outside mask");
  if (bad_k) out.emplace_back("conductivity not positive");
  if (bad_target) out.emplace_back("target out of [0,1]");
  return out;
}

}  // namespace gw
