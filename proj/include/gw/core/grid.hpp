#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gw {

// Row-major cell grid, origin at the top-left.
struct GridSpec {
  int height = 64;
  int width = 64;

  std::size_t cells() const { return static_cast<std::size_t>(height) * width; }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * width + col;
  }
  bool contains(int row, int col) const {
    return row >= 0 && row < height && col >= 0 && col < width;
  }
  bool on_ring(int row, int col) const {
    return row == 0 || col == 0 || row == height - 1 || col == width - 1;
  }
  std::size_t ring_cells() const {
    return static_cast<std::size_t>(2 * height + 2 * width - 4);
  }

  // Throws ValidationError unless H, W >= 4.
  void validate() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct Well {
  int row = 0;
  int col = 0;
  double head = 0.0;

  friend bool operator==(const Well&, const Well&) = default;
};

inline constexpr int kDefaultWellMax = 3;

// Dirichlet problem: constant head on the outer ring plus fixed-head wells.
struct ScenarioSpec {
  GridSpec grid;
  double boundary_head = 1.0;
  std::vector<Well> wells;

  // Throws ValidationError naming the first broken invariant.
  void validate(int well_max = kDefaultWellMax) const;

  // Per-cell imposed heads: boundary_head on the ring, well heads at wells,
  // 0 at free cells.
  std::vector<double> fixed_heads() const;

  friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

// true = fixed (Dirichlet) cell.
struct CellMask {
  GridSpec grid;
  std::vector<std::uint8_t> flags;

  bool fixed(int row, int col) const { return flags[grid.index(row, col)] != 0; }
  std::size_t count() const;
};

struct ConductivityField {
  GridSpec grid;
  std::vector<double> values;

  double at(int row, int col) const { return values[grid.index(row, col)]; }
};

struct HeadField {
  GridSpec grid;
  std::vector<double> values;

  double at(int row, int col) const { return values[grid.index(row, col)]; }
};

// Input image: 3 x H x W (head at fixed cells, mask, conductivity);
// target: 1 x H x W head field. Channel-major, row-major within a channel.
struct Sample {
  static constexpr int kInputChannels = 3;
  static constexpr int kOutputChannels = 1;

  GridSpec grid;
  std::vector<float> input;
  std::vector<float> target;

  std::span<const float> channel(int c) const {
    return std::span<const float>(input).subspan(c * grid.cells(), grid.cells());
  }
  std::span<float> channel(int c) {
    return std::span<float>(input).subspan(c * grid.cells(), grid.cells());
  }

  friend bool operator==(const Sample&, const Sample&) = default;
};

CellMask build_fixed_mask(const ScenarioSpec& scenario, int well_max = kDefaultWellMax);

// Every violated Sample invariant; empty when the sample is well formed.
std::vector<std::string> validate_sample(const Sample& sample);

}  // namespace gw
