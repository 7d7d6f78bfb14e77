#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gw::io {

// Binary 16-bit PGM (P5, maxval 65535, big-endian samples). Values map
// linearly from [lo, hi] onto [0, 65535] and are clamped outside it. The
// mapping is written as a "# range lo hi" comment line.
std::string pgm16(std::span<const float> values, int height, int width, double lo = 0.0,
                  double hi = 1.0);
void write_pgm16(const std::filesystem::path& path, std::span<const float> values, int height,
                 int width, double lo = 0.0, double hi = 1.0);

struct Point {
  double x = 0.0;  // column, cell-centre coordinates
  double y = 0.0;  // row
};

using Polyline = std::vector<Point>;

// Iso-lines of a row-major field by marching squares with linear
// interpolation along cell edges; saddles are resolved by the cell-centre
// average. Open lines end on the domain edge, closed ones repeat their first
// point at the end.
std::vector<Polyline> contour_lines(std::span<const float> values, int height, int width,
                                    double level);

inline const std::vector<double>& default_contour_levels() {
  static const std::vector<double> levels{0.9, 0.92, 0.94, 0.96, 0.98};
  return levels;
}

// Header "level,line,vertex,x,y".
std::string contour_csv(std::span<const float> values, int height, int width,
                        const std::vector<double>& levels = default_contour_levels());

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace gw::io
