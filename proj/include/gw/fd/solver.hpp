#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gw/core/grid.hpp"

namespace gw::fd {

// Inter-cell face coefficient: harmonic mean of the two cell conductivities.
double transmissivity(double k_i, double k_j);

// 5-point operator over free cells: for each free cell i,
//   sum_j T_ij (h_i - h_j) = 0,
// with fixed neighbours moved to the right-hand side.
struct LinearSystem {
  GridSpec grid;
  std::size_t n_free = 0;
  std::vector<int> row_ptr;  // CSR, n_free + 1 entries
  std::vector<int> col_idx;
  std::vector<double> values;
  std::vector<double> rhs;
  std::vector<int> free_index;  // cell -> unknown, -1 for fixed cells
  std::vector<int> free_cell;   // unknown -> cell

  double coefficient(int row, int col) const;
  void multiply(std::span<const double> x, std::span<double> y) const;
};

// Requires mask, conductivity and fixed_heads to share a grid (any size with
// at least one free cell; the ScenarioSpec minimum does not apply here).
LinearSystem assemble_system(const ConductivityField& k, const CellMask& mask,
                             std::span<const double> fixed_heads);

struct SolverOptions {
  double tolerance = 1e-10;  // relative residual ||r|| / ||rhs||
  std::size_t max_iterations = 0;  // 0: 10 * n_free
};

struct SolveStats {
  int iterations = 0;
  double relative_residual = 0.0;
};

// Jacobi-preconditioned conjugate gradient. Throws ConvergenceError carrying
// the final residual when the iteration cap is hit.
std::vector<double> conjugate_gradient(const LinearSystem& system, const SolverOptions& options,
                                       SolveStats* stats = nullptr);

HeadField solve_system(const ConductivityField& k, const CellMask& mask,
                       std::span<const double> fixed_heads,
                       const SolverOptions& options = {}, SolveStats* stats = nullptr);

HeadField solve_steady_state(const ConductivityField& k, const ScenarioSpec& scenario,
                             double tolerance = 1e-10, SolveStats* stats = nullptr,
                             int well_max = kDefaultWellMax);

// Dense Cholesky of the same system. Test oracle only; capped at 4096 cells.
inline constexpr std::size_t kDenseCellCap = 4096;
HeadField dense_reference_solve(const ConductivityField& k, const CellMask& mask,
                                std::span<const double> fixed_heads);
HeadField dense_reference_solve(const ConductivityField& k, const ScenarioSpec& scenario,
                                int well_max = kDefaultWellMax);

// max over free cells of |sum_j T_ij (h_j - h_i)|.
double max_flux_imbalance(const ConductivityField& k, const CellMask& mask,
                          const HeadField& head);

}  // namespace gw::fd
