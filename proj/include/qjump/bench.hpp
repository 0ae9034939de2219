#pragma once

// Run configuration and the run/divisibility commands behind the CLI.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "qjump/ensemble.hpp"
#include "qjump/models.hpp"

namespace qjump {

struct ObservableSpec {
    std::string name;
    Matrix op;
};

struct RunConfig {
    std::string model = "eternally_nm";
    std::map<std::string, double> model_params;
    std::vector<MethodKind> methods;
    /// [method.<name>] sections, keyed by canonical method name.
    std::map<std::string, std::map<std::string, std::string>> method_params;
    TimeGrid grid{0.0, 5.0, 1e-2};
    std::size_t n_traj = 10000;
    std::uint64_t seed = 42;
    int threads = 0;
    std::vector<cplx> initial_state;  ///< empty: |+>
    std::vector<ObservableSpec> observables;  ///< empty: sigma_x, sigma_y, sigma_z for qubits
    std::string output = "qjump";
    int divisibility_samples = 200;
};

/// Parses the flat INI-like grammar documented in docs/config.md. Throws
/// ParseError (message starts with "line N:"), UnknownModel, UnknownMethod
/// or BadAmplitudes.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);

/// Parses "1", "-0.5", "2i", "1-2i", "-i", "0.5+0.25i".
cplx parse_complex(std::string_view text);

/// Validates names, grid and amplitudes; fills default observables.
void finalize_config(RunConfig& cfg);

PureState initial_state(const RunConfig& cfg, int dim);
MethodSpec build_method(MethodKind kind, const RunConfig& cfg, const NamedModel& model);

/// Writes <output>_<method>.csv, <output>_oracle.csv and <output>_summary.json.
/// Returns 0 on success, 2 if any method aborted.
int run_command(const RunConfig& cfg, bool oracle_only, std::ostream& log);

/// Writes <output>_divisibility.csv. Returns 0.
int divisibility_command(const RunConfig& cfg, std::ostream& log);

/// "%.12g" formatting used in every CSV.
std::string format_number(double x);

}  // namespace qjump
