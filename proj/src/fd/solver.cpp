#include "gw/fd/solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gw/core/error.hpp"

namespace gw::fd {
namespace {

constexpr std::array<std::array<int, 2>, 4> kNeighbours{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

void check_inputs(const ConductivityField& k, const CellMask& mask,
                  std::span<const double> fixed_heads) {
  if (!(k.grid == mask.grid) || k.values.size() != mask.grid.cells() ||
      mask.flags.size() != mask.grid.cells() || fixed_heads.size() != mask.grid.cells()) {
    throw ShapeError("conductivity, mask and fixed heads must share the grid");
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

HeadField scatter(const CellMask& mask, std::span<const double> fixed_heads,
                  const LinearSystem& sys, std::span<const double> x) {
  HeadField h{mask.grid, std::vector<double>(fixed_heads.begin(), fixed_heads.end())};
  for (std::size_t u = 0; u < sys.n_free; ++u) h.values[sys.free_cell[u]] = x[u];
  return h;
}

}  // namespace

double transmissivity(double k_i, double k_j) {
  if (!(k_i > 0.0) || !(k_j > 0.0)) {
    throw DomainError("non-positive conductivity in transmissivity");
  }
  return 2.0 * k_i * k_j / (k_i + k_j);
}

double LinearSystem::coefficient(int row, int col) const {
  for (int p = row_ptr[row]; p < row_ptr[row + 1]; ++p) {
    if (col_idx[p] == col) return values[p];
  }
  return 0.0;
}

void LinearSystem::multiply(std::span<const double> x, std::span<double> y) const {
  for (std::size_t i = 0; i < n_free; ++i) {
    double s = 0.0;
    for (int p = row_ptr[i]; p < row_ptr[i + 1]; ++p) s += values[p] * x[col_idx[p]];
    y[i] = s;
  }
}

LinearSystem assemble_system(const ConductivityField& k, const CellMask& mask,
                             std::span<const double> fixed_heads) {
  check_inputs(k, mask, fixed_heads);
  const GridSpec& g = mask.grid;
  LinearSystem sys;
  sys.grid = g;
  sys.free_index.assign(g.cells(), -1);
  for (std::size_t c = 0; c < g.cells(); ++c) {
    if (!mask.flags[c]) {
      sys.free_index[c] = static_cast<int>(sys.free_cell.size());
      sys.free_cell.push_back(static_cast<int>(c));
    }
  }
  sys.n_free = sys.free_cell.size();
  if (sys.n_free == 0) throw ValidationError("degenerate system: no free cells");

  sys.row_ptr.reserve(sys.n_free + 1);
  sys.row_ptr.push_back(0);
  sys.rhs.assign(sys.n_free, 0.0);
  for (std::size_t u = 0; u < sys.n_free; ++u) {
    const int cell = sys.free_cell[u];
    const int r = cell / g.width;
    const int c = cell % g.width;
    double diag = 0.0;
    // Off-diagonals in ascending column order keep the CSR rows sorted.
    std::array<std::pair<int, double>, 4> off{};
    int n_off = 0;
    for (const auto& [dr, dc] : kNeighbours) {
      const int nr = r + dr;
      const int nc = c + dc;
      if (!g.contains(nr, nc)) continue;
      const std::size_t nb = g.index(nr, nc);
      const double t = transmissivity(k.values[cell], k.values[nb]);
      diag += t;
      if (mask.flags[nb]) {
        sys.rhs[u] += t * fixed_heads[nb];
      } else {
        off[n_off++] = {sys.free_index[nb], -t};
      }
    }
    std::sort(off.begin(), off.begin() + n_off);
    bool diag_written = false;
    for (int i = 0; i < n_off; ++i) {
      if (!diag_written && off[i].first > static_cast<int>(u)) {
        sys.col_idx.push_back(static_cast<int>(u));
        sys.values.push_back(diag);
        diag_written = true;
      }
      sys.col_idx.push_back(off[i].first);
      sys.values.push_back(off[i].second);
    }
    if (!diag_written) {
      sys.col_idx.push_back(static_cast<int>(u));
      sys.values.push_back(diag);
    }
    sys.row_ptr.push_back(static_cast<int>(sys.col_idx.size()));
  }
  return sys;
}

std::vector<double> conjugate_gradient(const LinearSystem& sys, const SolverOptions& options,
                                       SolveStats* stats) {
  const std::size_t n = sys.n_free;
  const std::size_t cap = options.max_iterations ? options.max_iterations : 10 * n;
  std::vector<double> inv_diag(n);
  for (std::size_t i = 0; i < n; ++i) inv_diag[i] = 1.0 / sys.coefficient(int(i), int(i));

  std::vector<double> x(n, 0.0), r(sys.rhs), z(n), p(n), q(n);
  const double rhs_norm = std::sqrt(dot(sys.rhs, sys.rhs));
  if (rhs_norm == 0.0) {
    if (stats) *stats = {0, 0.0};
    return x;
  }
  for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
  p = z;
  double rz = dot(r, z);
  double rel = std::sqrt(dot(r, r)) / rhs_norm;
  std::size_t it = 0;
  while (rel > options.tolerance) {
    if (it >= cap) {
      std::ostringstream os;
      os << "conjugate gradient did not converge in " << it << " iterations (relative residual "
         << rel << ")";
      throw ConvergenceError(os.str(), static_cast<int>(it), rel);
    }
    sys.multiply(p, q);
    const double alpha = rz / dot(p, q);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    rel = std::sqrt(dot(r, r)) / rhs_norm;
    ++it;
  }
  if (stats) {
    // Report the true residual rather than the recurrence.
    sys.multiply(x, q);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (sys.rhs[i] - q[i]) * (sys.rhs[i] - q[i]);
    *stats = {static_cast<int>(it), std::sqrt(s) / rhs_norm};
  }
  return x;
}

HeadField solve_system(const ConductivityField& k, const CellMask& mask,
                       std::span<const double> fixed_heads, const SolverOptions& options,
                       SolveStats* stats) {
  const LinearSystem sys = assemble_system(k, mask, fixed_heads);
  const auto x = conjugate_gradient(sys, options, stats);
  return scatter(mask, fixed_heads, sys, x);
}

HeadField solve_steady_state(const ConductivityField& k, const ScenarioSpec& scenario,
                             double tolerance, SolveStats* stats, int well_max) {
  const CellMask mask = build_fixed_mask(scenario, well_max);
  const auto heads = scenario.fixed_heads();
  return solve_system(k, mask, heads, SolverOptions{tolerance, 0}, stats);
}

HeadField dense_reference_solve(const ConductivityField& k, const CellMask& mask,
                                std::span<const double> fixed_heads) {
  if (mask.grid.cells() > kDenseCellCap) {
    throw ValidationError("dense reference solve size cap exceeded (" +
                          std::to_string(mask.grid.cells()) + " > " +
                          std::to_string(kDenseCellCap) + " cells)");
  }
  const LinearSystem sys = assemble_system(k, mask, fixed_heads);
  const auto n = static_cast<Eigen::Index>(sys.n_free);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int p = sys.row_ptr[i]; p < sys.row_ptr[i + 1]; ++p) a(i, sys.col_idx[p]) = sys.values[p];
  }
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(sys.rhs.data(), n);
  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw ValidationError("dense system not positive definite");
  const Eigen::VectorXd x = llt.solve(b);
  return scatter(mask, fixed_heads, sys, std::span<const double>(x.data(), sys.n_free));
}

HeadField dense_reference_solve(const ConductivityField& k, const ScenarioSpec& scenario,
                                int well_max) {
  const CellMask mask = build_fixed_mask(scenario, well_max);
  return dense_reference_solve(k, mask, scenario.fixed_heads());
}

double max_flux_imbalance(const ConductivityField& k, const CellMask& mask,
                          const HeadField& head) {
  const GridSpec& g = mask.grid;
  double worst = 0.0;
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const std::size_t i = g.index(r, c);
      if (mask.flags[i]) continue;
      double s = 0.0;
      for (const auto& [dr, dc] : kNeighbours) {
        if (!g.contains(r + dr, c + dc)) continue;
        const std::size_t j = g.index(r + dr, c + dc);
        s += transmissivity(k.values[i], k.values[j]) * (head.values[j] - head.values[i]);
      }
      worst = std::max(worst, std::abs(s));
    }
  }
  return worst;
}

}  // namespace gw::fd
