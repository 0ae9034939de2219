#pragma once

// Benchmark master equations.

#include <map>
#include <string>
#include <string_view>

#include "qjump/unravel_local.hpp"

namespace qjump {

struct PhaseCovariantRates {
    TimeScalar gamma_plus;
    TimeScalar gamma_minus;
    TimeScalar gamma_z;
    double omega0 = 0.0;
};

/// H = omega0 sigma_z; channels (sigma_+, g+), (sigma_-, g-), (sigma_z, gz) in that order.
MasterEquation phase_covariant(const PhaseCovariantRates& rates);

/// g+- = 1, gz = -tanh(t)/2.
MasterEquation eternally_nm(double omega0 = 0.0);
PhaseCovariantRates eternally_nm_rates(double omega0 = 0.0);

/// g+- = exp(-t/10) [kappa + (1 - kappa) exp(-t/4) cos 2t] / 2, gz = 1/2.
MasterEquation non_p_divisible(double kappa, double omega0 = 0.0);
PhaseCovariantRates non_p_divisible_rates(double kappa, double omega0 = 0.0);

/// H = (omega0/2) sigma_z + omega sigma_x, single channel (sigma_-, gamma).
MasterEquation spontaneous_emission(double omega0, double omega, double gamma);

/// g+- = 1, gz = cos(2t)/2: CP divisible up to pi/4, P divisible throughout.
MasterEquation delayed_negative_phase_covariant(double omega0 = 0.0);
PhaseCovariantRates delayed_negative_rates(double omega0 = 0.0);

/// (|0> + |1>)/sqrt 2.
PureState plus_state();

/// A model looked up by name, with the rate-operator gauge that keeps its
/// rate operator non-negative along the benchmark trajectories.
struct NamedModel {
    std::string name;
    MasterEquation me;
    GaugeTransform gauge;
    std::optional<PhaseCovariantRates> rates;
};

/// Names: eternally_nm, non_p_divisible, spontaneous_emission,
/// phase_covariant, delayed_negative. Parameters: omega0, omega, gamma,
/// kappa, gamma_plus, gamma_minus, gamma_z (constants for phase_covariant).
/// Unknown parameter keys throw ParseError; unknown names UnknownModel.
NamedModel make_model(std::string_view name, const std::map<std::string, double>& params = {});

/// C_t = g(t) 1 as a time-dependent gauge.
GaugeTransform dephasing_gauge(TimeScalar gamma_z);

}  // namespace qjump
