#include "gw/io/export.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "gw/core/error.hpp"

namespace gw::io {

std::string pgm16(std::span<const float> values, int height, int width, double lo, double hi) {
  if (height < 1 || width < 1 || values.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeError("pgm: " + std::to_string(values.size()) + " values for a " +
                     std::to_string(height) + "x" + std::to_string(width) + " image");
  }
  if (!(hi > lo)) throw DomainError("pgm: empty value range");
  std::ostringstream head;
  head << std::setprecision(9) << "P5\n# range " << lo << " " << hi << "\n"
       << width << " " << height << "\n65535\n";
  std::string out = head.str();
  out.reserve(out.size() + values.size() * 2);
  for (float v : values) {
    double t = (static_cast<double>(v) - lo) / (hi - lo);
    t = std::isnan(t) ? 0.0 : std::clamp(t, 0.0, 1.0);
    const auto q = static_cast<unsigned>(std::lround(t * 65535.0));
    out.push_back(static_cast<char>(q >> 8));
    out.push_back(static_cast<char>(q & 0xff));
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path.string());
  os << text;
  if (!os) throw FormatError("short write to " + path.string());
}

void write_pgm16(const std::filesystem::path& path, std::span<const float> values, int height,
                 int width, double lo, double hi) {
  write_text(path, pgm16(values, height, width, lo, hi));
}

namespace {

// Edge ids: 2 * cell for the edge to the right neighbour, 2 * cell + 1 for
// the edge to the neighbour below.
struct Segment {
  long a, b;
};

}  // namespace

std::vector<Polyline> contour_lines(std::span<const float> values, int height, int width,
                                    double level) {
  if (values.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeError("contour: field size does not match grid");
  }
  auto v = [&](int r, int c) { return static_cast<double>(values[r * width + c]); };
  auto above = [&](int r, int c) { return v(r, c) >= level; };
  auto right_edge = [&](int r, int c) { return 2L * (r * width + c); };
  auto down_edge = [&](int r, int c) { return 2L * (r * width + c) + 1; };

  std::vector<Segment> segs;
  for (int r = 0; r + 1 < height; ++r) {
    for (int c = 0; c + 1 < width; ++c) {
      const int code = (above(r, c) ? 1 : 0) | (above(r, c + 1) ? 2 : 0) |
                       (above(r + 1, c + 1) ? 4 : 0) | (above(r + 1, c) ? 8 : 0);
      if (code == 0 || code == 15) continue;
      const long top = right_edge(r, c), bottom = right_edge(r + 1, c);
      const long left = down_edge(r, c), right = down_edge(r, c + 1);
      switch (code) {
        case 1: case 14: segs.push_back({left, top}); break;
        case 2: case 13: segs.push_back({top, right}); break;
        case 3: case 12: segs.push_back({left, right}); break;
        case 4: case 11: segs.push_back({right, bottom}); break;
        case 6: case 9: segs.push_back({top, bottom}); break;
        case 7: case 8: segs.push_back({left, bottom}); break;
        case 5: case 10: {
          const double centre = 0.25 * (v(r, c) + v(r, c + 1) + v(r + 1, c) + v(r + 1, c + 1));
          const bool centre_above = centre >= level;
          // Corners 0 and 2 share a side; the centre decides whether the
          // above-level region joins them.
          if ((code == 5) == centre_above) {
            segs.push_back({left, bottom});
            segs.push_back({top, right});
          } else {
            segs.push_back({left, top});
            segs.push_back({right, bottom});
          }
          break;
        }
        default: break;
      }
    }
  }

  auto point = [&](long edge) {
    const long cell = edge / 2;
    const int r = static_cast<int>(cell / width), c = static_cast<int>(cell % width);
    const int r2 = (edge & 1) ? r + 1 : r, c2 = (edge & 1) ? c : c + 1;
    const double v1 = v(r, c), v2 = v(r2, c2);
    const double t = v1 == v2 ? 0.5 : std::clamp((level - v1) / (v2 - v1), 0.0, 1.0);
    return Point{c + t * (c2 - c), r + t * (r2 - r)};
  };

  std::unordered_multimap<long, std::size_t> at;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    at.emplace(segs[i].a, i);
    at.emplace(segs[i].b, i);
  }
  std::vector<bool> used(segs.size(), false);
  auto next_from = [&](long edge) -> long {
    auto [lo, hi] = at.equal_range(edge);
    for (auto it = lo; it != hi; ++it) {
      if (!used[it->second]) return static_cast<long>(it->second);
    }
    return -1;
  };
  auto degree = [&](long edge) { return at.count(edge); };

  std::vector<Polyline> lines;
  auto trace = [&](std::size_t start, long from) {
    std::vector<long> edges{from};
    long cur = from;
    long s = static_cast<long>(start);
    while (s >= 0) {
      used[s] = true;
      cur = segs[s].a == cur ? segs[s].b : segs[s].a;
      edges.push_back(cur);
      s = next_from(cur);
    }
    Polyline line;
    for (long e : edges) line.push_back(point(e));
    lines.push_back(std::move(line));
  };
  // Open lines first, starting from endpoints used by a single segment.
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (used[i]) continue;
    if (degree(segs[i].a) == 1) trace(i, segs[i].a);
    else if (degree(segs[i].b) == 1) trace(i, segs[i].b);
  }
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (!used[i]) trace(i, segs[i].a);
  }
  return lines;
}

std::string contour_csv(std::span<const float> values, int height, int width,
                        const std::vector<double>& levels) {
  std::ostringstream os;
  os << std::setprecision(9) << "level,line,vertex,x,y\n";
  for (double level : levels) {
    const auto lines = contour_lines(values, height, width, level);
    for (std::size_t l = 0; l < lines.size(); ++l) {
      for (std::size_t k = 0; k < lines[l].size(); ++k) {
        os << level << "," << l << "," << k << "," << lines[l][k].x << "," << lines[l][k].y
           << "\n";
      }
    }
  }
  return os.str();
}

}  // namespace gw::io
