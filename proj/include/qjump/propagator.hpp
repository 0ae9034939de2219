#pragma once

#include <vector>

#include "qjump/master_equation.hpp"

namespace qjump {

/// Uniform time grid t_k = t0 + k dt, k = 0..steps().
struct TimeGrid {
    double t0 = 0.0;
    double t_max = 5.0;
    double dt = 1e-2;

    TimeGrid() = default;
    TimeGrid(double t0_, double t_max_, double dt_);

    int steps() const;
    int points() const { return steps() + 1; }
    double time(int k) const { return t0 + k * dt; }
    bool operator==(const TimeGrid& o) const;
};

struct OracleSolution {
    TimeGrid grid;
    std::vector<DensityMatrix> states;
};

/// Classical RK4 on d rho/dt = L_t[rho]. `substeps` > 1 refines each grid
/// interval internally (used for self-convergence checks).
OracleSolution propagate(const MasterEquation& me, const DensityMatrix& rho0,
                         const TimeGrid& grid, int substeps = 1);

/// Dynamical map Lambda_{t_k} as a d^2 x d^2 matrix acting on column-stacked
/// density matrices: vec(rho)[col * d + row] = rho(row, col).
Matrix propagator_map(const MasterEquation& me, const TimeGrid& grid, int t_index,
                      int substeps = 1);

/// V_{t,s} = Lambda_t Lambda_s^{-1}. Throws SingularMap when Lambda_s has
/// condition number above 1e12.
Matrix intermediate_propagator(const MasterEquation& me, const TimeGrid& grid, int s_index,
                               int t_index, int substeps = 1);

Vector vec(const Matrix& m);
Matrix unvec(const Vector& v, int dim);

/// Choi matrix sum_ij |i><j| (x) S(|i><j|) of a column-stacked superoperator.
Matrix choi_matrix(const Matrix& superop, int dim);

}  // namespace qjump
