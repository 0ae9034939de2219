#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qjump/linalg.hpp"

namespace qjump {

using TimeMatrix = std::function<Matrix(double)>;
using TimeScalar = std::function<double(double)>;

/// One dissipative channel: jump operator L(t) with a signed rate gamma(t).
struct Channel {
    TimeMatrix op;
    TimeScalar rate;
    std::string label;
};

/// Every operator of the generator evaluated at a single time.
struct GeneratorSnapshot {
    double t = 0.0;
    Matrix hamiltonian;
    std::vector<Matrix> ops;
    std::vector<Matrix> ops_dag;
    std::vector<double> rates;
    Matrix gamma_l;  ///< sum_a gamma_a L_a^dag L_a
    Matrix gamma;    ///< trace sink when set, otherwise gamma_l
    Matrix k_eff;    ///< H - (i/2) gamma

    int dim() const { return static_cast<int>(hamiltonian.rows()); }
    double min_rate() const;
    bool has_negative_rate() const { return min_rate() < -kEps; }
};

/// Time-local GKSL generator
///   L_t[rho] = -i[H, rho] + sum_a g_a L_a rho L_a^dag - 1/2 {Gamma, rho}
/// with Gamma = sum_a g_a L_a^dag L_a unless a trace sink overrides it.
class MasterEquation {
public:
    MasterEquation(int dim, TimeMatrix hamiltonian, std::vector<Channel> channels = {},
                   std::optional<TimeMatrix> trace_sink = std::nullopt);

    int dim() const { return dim_; }
    const std::vector<Channel>& channels() const { return channels_; }
    const TimeMatrix& hamiltonian() const { return hamiltonian_; }
    const std::optional<TimeMatrix>& trace_sink() const { return trace_sink_; }
    bool trace_preserving() const { return !trace_sink_.has_value(); }

    /// Evaluates all operators at t. Validates dimensions and hermiticity of H.
    GeneratorSnapshot at(double t) const;

private:
    int dim_;
    TimeMatrix hamiltonian_;
    std::vector<Channel> channels_;
    std::optional<TimeMatrix> trace_sink_;
};

struct DivisibilityReport {
    double time = 0.0;
    bool cp = false;
    bool p = false;
    double min_rate = 0.0;
    double min_w_eigenvalue = 0.0;
};

Matrix gamma_big(const MasterEquation& me, double t);
Matrix effective_hamiltonian(const MasterEquation& me, double t);

Matrix jump_superop_apply(const GeneratorSnapshot& g, const Matrix& rho);
Matrix jump_superop_apply(const MasterEquation& me, double t, const Matrix& rho);

Matrix lindblad_apply(const GeneratorSnapshot& g, const Matrix& rho);
Matrix lindblad_apply(const MasterEquation& me, double t, const Matrix& rho);

bool is_cp_divisible_at(const MasterEquation& me, double t);

/// One-sided numeric test: the smallest eigenvalue of the projected jump
/// operator W over `sample_count` Haar-random states plus the computational
/// basis. A negative result certifies a P-divisibility violation; a positive
/// one does not prove P divisibility.
bool is_p_divisible_at(const MasterEquation& me, double t, int sample_count);

/// Closed form for phase-covariant qubit dynamics.
bool phase_covariant_p_divisible_at(double gamma_plus, double gamma_minus, double gamma_z);

DivisibilityReport divisibility_report(const MasterEquation& me, double t, int sample_count);

}  // namespace qjump
