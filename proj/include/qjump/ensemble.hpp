#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qjump/propagator.hpp"
#include "qjump/unravel_extended.hpp"

namespace qjump {

enum class MethodKind { MCWF, WTD, NMQJ, WROQJ, RROQJ, PSIROQJ, DOUBLED, TRIPLED, IM, PLQT, CLONING };

std::string_view method_name(MethodKind m);
/// Case-insensitive; accepts the lowercase names used by the CLI ("mcwf", "psiroqj", ...).
MethodKind parse_method(std::string_view name);
std::vector<MethodKind> all_methods();

struct MethodSpec {
    MethodKind kind = MethodKind::MCWF;
    GaugeTransform gauge;          ///< R-ROQJ / Psi-ROQJ
    RatePolicy rate_policy;        ///< IM
    TripledRateChoice tripled_a;   ///< TRIPLED; empty = minimal admissible a(t)

    MethodSpec() = default;
    explicit MethodSpec(MethodKind k) : kind(k) {}
    MethodSpec(MethodKind k, GaugeTransform g) : kind(k), gauge(std::move(g)) {}
    MethodSpec(MethodKind k, RatePolicy p) : kind(k), rate_policy(std::move(p)) {}

    std::string name() const { return std::string(method_name(kind)); }
};

struct AbortInfo {
    ErrorKind kind = ErrorKind::ParseError;
    double time = 0.0;
    std::string message;
};

struct EnsembleResult {
    MethodKind method = MethodKind::MCWF;
    TimeGrid grid;
    /// One entry per completed grid point; shorter than grid.points() after an abort.
    std::vector<DensityMatrix> rho_hat;
    /// Trace-distance standard error from batch means.
    std::vector<double> std_error;
    /// batch_rho[b][k]: estimate from batch b alone.
    std::vector<std::vector<DensityMatrix>> batch_rho;
    std::size_t n_traj = 0;
    double wall_clock_ms = 0.0;
    std::map<std::string, std::size_t> event_counts;
    /// Method-specific per-time series, e.g. "rms_weight", "block_trace", "population".
    std::map<std::string, std::vector<double>> diagnostics;
    std::optional<AbortInfo> abort;

    std::size_t completed_points() const { return rho_hat.size(); }
    double time(std::size_t k) const { return grid.time(static_cast<int>(k)); }
};

struct RunOptions {
    int threads = 0;  ///< 0: hardware concurrency
    int batches = 20;
};

/// Runs the ensemble and throws the first method error (with its grid time).
EnsembleResult run_ensemble(const MethodSpec& method, const MasterEquation& me, const PureState& psi0,
                            const TimeGrid& grid, std::size_t n_traj, std::uint64_t seed,
                            const RunOptions& opts = {});

/// Same, but a method error truncates the result at the last valid grid
/// point and is reported in `abort` instead of being thrown.
EnsembleResult run_ensemble_partial(const MethodSpec& method, const MasterEquation& me, const PureState& psi0,
                                    const TimeGrid& grid, std::size_t n_traj, std::uint64_t seed,
                                    const RunOptions& opts = {});

struct SeriesPoint {
    double t = 0.0;
    double value = 0.0;
};

/// Pointwise trace distance to the oracle over the completed points.
std::vector<SeriesPoint> error_vs_oracle(const EnsembleResult& result, const OracleSolution& oracle);

struct ObservablePoint {
    double t = 0.0;
    double mean = 0.0;
    double std_error = 0.0;
};

std::vector<ObservablePoint> observable_series(const EnsembleResult& result, const Matrix& observable);

/// Batch-means standard error of the trace distance around `center`.
double batch_std_error(const std::vector<DensityMatrix>& batches, const DensityMatrix& center);

}  // namespace qjump
