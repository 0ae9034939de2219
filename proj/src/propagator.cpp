#include "qjump/propagator.hpp"

#include <cmath>

namespace qjump {

TimeGrid::TimeGrid(double t0_, double t_max_, double dt_) : t0(t0_), t_max(t_max_), dt(dt_) {
    if (!(dt > 0.0) || !(t_max > t0) || !std::isfinite(t_max) || !std::isfinite(dt)) {
        throw Error(ErrorKind::ParseError, "time grid needs dt > 0 and t_max > t0");
    }
}

int TimeGrid::steps() const { return static_cast<int>(std::llround((t_max - t0) / dt)); }

bool TimeGrid::operator==(const TimeGrid& o) const {
    return t0 == o.t0 && dt == o.dt && steps() == o.steps();
}

namespace {

Matrix rk4_step(const MasterEquation& me, double t, double h, const Matrix& rho) {
    const GeneratorSnapshot g0 = me.at(t);
    const GeneratorSnapshot gm = me.at(t + 0.5 * h);
    const GeneratorSnapshot g1 = me.at(t + h);
    const Matrix k1 = lindblad_apply(g0, rho);
    const Matrix k2 = lindblad_apply(gm, rho + 0.5 * h * k1);
    const Matrix k3 = lindblad_apply(gm, rho + 0.5 * h * k2);
    const Matrix k4 = lindblad_apply(g1, rho + h * k3);
    return rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Evolves every column-stacked matrix unit at once; returns maps at all grid points up to last.
std::vector<Matrix> maps_up_to(const MasterEquation& me, const TimeGrid& grid, int last,
                               int substeps) {
    const int d = me.dim();
    const int d2 = d * d;
    std::vector<Matrix> units(d2);
    for (int j = 0; j < d2; ++j) units[j] = unvec(Vector::Unit(d2, j), d);
    std::vector<Matrix> maps;
    maps.reserve(last + 1);
    auto snapshot = [&]() {
        Matrix m(d2, d2);
        for (int j = 0; j < d2; ++j) m.col(j) = vec(units[j]);
        return m;
    };
    maps.push_back(snapshot());
    const double h = grid.dt / substeps;
    for (int k = 0; k < last; ++k) {
        for (int s = 0; s < substeps; ++s) {
            const double t = grid.time(k) + s * h;
            for (auto& u : units) u = rk4_step(me, t, h, u);
        }
        maps.push_back(snapshot());
    }
    return maps;
}

}  // namespace

OracleSolution propagate(const MasterEquation& me, const DensityMatrix& rho0, const TimeGrid& grid,
                         int substeps) {
    if (rho0.rows() != me.dim() || rho0.cols() != me.dim()) {
        throw Error(ErrorKind::DimMismatch, "initial state dimension does not match the model");
    }
    substeps = std::max(substeps, 1);
    OracleSolution sol{grid, {}};
    sol.states.reserve(grid.points());
    sol.states.push_back(rho0);
    Matrix rho = rho0;
    const double h = grid.dt / substeps;
    for (int k = 0; k < grid.steps(); ++k) {
        for (int s = 0; s < substeps; ++s) rho = rk4_step(me, grid.time(k) + s * h, h, rho);
        sol.states.push_back(rho);
    }
    return sol;
}

Matrix propagator_map(const MasterEquation& me, const TimeGrid& grid, int t_index, int substeps) {
    if (t_index < 0 || t_index > grid.steps()) {
        throw Error(ErrorKind::IndexOutOfRange, "time index outside grid");
    }
    return maps_up_to(me, grid, t_index, std::max(substeps, 1)).back();
}

Matrix intermediate_propagator(const MasterEquation& me, const TimeGrid& grid, int s_index,
                               int t_index, int substeps) {
    if (s_index < 0 || t_index > grid.steps() || s_index > t_index) {
        throw Error(ErrorKind::IndexOutOfRange, "need 0 <= s_index <= t_index <= steps");
    }
    const auto maps = maps_up_to(me, grid, t_index, std::max(substeps, 1));
    const Matrix& lam_s = maps[s_index];
    Eigen::JacobiSVD<Matrix> svd(lam_s);
    const auto& sv = svd.singularValues();
    const double smin = sv[sv.size() - 1];
    if (!(smin > 0.0) || sv[0] / smin > 1e12) {
        throw Error(ErrorKind::SingularMap, "dynamical map is not numerically invertible",
                    grid.time(s_index));
    }
    return maps[t_index] * lam_s.inverse();
}

Vector vec(const Matrix& m) {
    return Eigen::Map<const Vector>(m.data(), m.size());
}

Matrix unvec(const Vector& v, int dim) {
    return Eigen::Map<const Matrix>(v.data(), dim, dim);
}

Matrix choi_matrix(const Matrix& superop, int dim) {
    const int d2 = dim * dim;
    if (superop.rows() != d2 || superop.cols() != d2) {
        throw Error(ErrorKind::DimMismatch, "superoperator must be d^2 x d^2");
    }
    Matrix choi = Matrix::Zero(d2, d2);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
            const Matrix img = unvec(superop.col(j * dim + i), dim);  // S(|i><j|)
            choi.block(i * dim, j * dim, dim, dim) = img;
        }
    }
    return choi;
}

}  // namespace qjump
