#include "qjump/models.hpp"

#include <cmath>
#include <set>

namespace qjump {

MasterEquation phase_covariant(const PhaseCovariantRates& rates) {
    const double w0 = rates.omega0;
    const Matrix h = w0 * pauli::sz();
    std::vector<Channel> channels{
        {[](double) { return pauli::sp(); }, rates.gamma_plus, "sigma_plus"},
        {[](double) { return pauli::sm(); }, rates.gamma_minus, "sigma_minus"},
        {[](double) { return pauli::sz(); }, rates.gamma_z, "sigma_z"},
    };
    return MasterEquation(2, [h](double) { return h; }, std::move(channels));
}

PhaseCovariantRates eternally_nm_rates(double omega0) {
    return {[](double) { return 1.0; }, [](double) { return 1.0; },
            [](double t) { return -0.5 * std::tanh(t); }, omega0};
}

MasterEquation eternally_nm(double omega0) { return phase_covariant(eternally_nm_rates(omega0)); }

PhaseCovariantRates non_p_divisible_rates(double kappa, double omega0) {
    auto g = [kappa](double t) {
        return 0.5 * std::exp(-t / 10.0) * (kappa + (1.0 - kappa) * std::exp(-t / 4.0) * std::cos(2.0 * t));
    };
    return {g, g, [](double) { return 0.5; }, omega0};
}

MasterEquation non_p_divisible(double kappa, double omega0) {
    if (!(kappa >= 0.0 && kappa <= 1.0)) {
        throw Error(ErrorKind::ParseError, "kappa must lie in [0, 1]");
    }
    return phase_covariant(non_p_divisible_rates(kappa, omega0));
}

MasterEquation spontaneous_emission(double omega0, double omega, double gamma) {
    if (gamma < 0.0) throw Error(ErrorKind::NegativeRate, "spontaneous emission needs gamma >= 0");
    const Matrix h = 0.5 * omega0 * pauli::sz() + omega * pauli::sx();
    std::vector<Channel> channels{{[](double) { return pauli::sm(); }, [gamma](double) { return gamma; }, "sigma_minus"}};
    return MasterEquation(2, [h](double) { return h; }, std::move(channels));
}

PhaseCovariantRates delayed_negative_rates(double omega0) {
    return {[](double) { return 1.0; }, [](double) { return 1.0; },
            [](double t) { return 0.5 * std::cos(2.0 * t); }, omega0};
}

MasterEquation delayed_negative_phase_covariant(double omega0) {
    return phase_covariant(delayed_negative_rates(omega0));
}

PureState plus_state() {
    Vector v(2);
    v << 1.0, 1.0;
    return PureState::from_amplitudes(v);
}

GaugeTransform dephasing_gauge(TimeScalar gamma_z) {
    return GaugeTransform::time_dependent(
        [gamma_z](double t) -> Matrix { return gamma_z(t) * Matrix::Identity(2, 2); });
}

NamedModel make_model(std::string_view name, const std::map<std::string, double>& params) {
    auto get = [&](const std::string& key, double fallback) {
        const auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    };
    auto allow = [&](std::set<std::string> keys) {
        for (const auto& [k, v] : params) {
            if (!keys.count(k)) {
                throw Error(ErrorKind::ParseError,
                            "model '" + std::string(name) + "' has no parameter '" + k + "'");
            }
        }
    };
    const std::string n(name);
    if (n == "eternally_nm") {
        allow({"omega0"});
        auto rates = eternally_nm_rates(get("omega0", 0.0));
        return {n, phase_covariant(rates), dephasing_gauge(rates.gamma_z), rates};
    }
    if (n == "non_p_divisible") {
        allow({"omega0", "kappa"});
        auto rates = non_p_divisible_rates(get("kappa", 0.25), get("omega0", 0.0));
        return {n, non_p_divisible(get("kappa", 0.25), get("omega0", 0.0)), GaugeTransform::none(), rates};
    }
    if (n == "delayed_negative") {
        allow({"omega0"});
        auto rates = delayed_negative_rates(get("omega0", 0.0));
        return {n, phase_covariant(rates), dephasing_gauge(rates.gamma_z), rates};
    }
    if (n == "spontaneous_emission") {
        allow({"omega0", "omega", "gamma"});
        return {n, spontaneous_emission(get("omega0", 0.0), get("omega", 0.0), get("gamma", 1.0)),
                GaugeTransform::none(), std::nullopt};
    }
    if (n == "phase_covariant") {
        allow({"omega0", "gamma_plus", "gamma_minus", "gamma_z"});
        const double gp = get("gamma_plus", 1.0);
        const double gm = get("gamma_minus", 1.0);
        const double gz = get("gamma_z", 0.0);
        PhaseCovariantRates rates{[gp](double) { return gp; }, [gm](double) { return gm; },
                                  [gz](double) { return gz; }, get("omega0", 0.0)};
        return {n, phase_covariant(rates), GaugeTransform::none(), rates};
    }
    throw Error(ErrorKind::UnknownModel, "unknown model '" + n + "'");
}

}  // namespace qjump
