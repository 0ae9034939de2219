#include "qjump/master_equation.hpp"

#include <algorithm>
#include <limits>
#include <random>

#include "qjump/unravel_local.hpp"

namespace qjump {

double GeneratorSnapshot::min_rate() const {
    double m = std::numeric_limits<double>::infinity();
    for (double r : rates) m = std::min(m, r);
    return rates.empty() ? 0.0 : m;
}

MasterEquation::MasterEquation(int dim, TimeMatrix hamiltonian, std::vector<Channel> channels,
                               std::optional<TimeMatrix> trace_sink)
    : dim_(dim),
      hamiltonian_(std::move(hamiltonian)),
      channels_(std::move(channels)),
      trace_sink_(std::move(trace_sink)) {
    if (dim_ < 1) throw Error(ErrorKind::DimMismatch, "dimension must be positive");
    if (!hamiltonian_) {
        const int d = dim_;
        hamiltonian_ = [d](double) { return Matrix::Zero(d, d).eval(); };
    }
}

GeneratorSnapshot MasterEquation::at(double t) const {
    GeneratorSnapshot g;
    g.t = t;
    g.hamiltonian = hamiltonian_(t);
    if (g.hamiltonian.rows() != dim_ || g.hamiltonian.cols() != dim_) {
        throw Error(ErrorKind::DimMismatch, "hamiltonian has wrong dimension", t);
    }
    require_hermitian(g.hamiltonian);
    g.gamma_l = Matrix::Zero(dim_, dim_);
    g.ops.reserve(channels_.size());
    for (const auto& ch : channels_) {
        Matrix l = ch.op(t);
        if (l.rows() != dim_ || l.cols() != dim_) {
            throw Error(ErrorKind::DimMismatch, "jump operator '" + ch.label + "' has wrong dimension", t);
        }
        const double r = ch.rate(t);
        Matrix ld = l.adjoint();
        g.gamma_l += r * (ld * l);
        g.ops.push_back(std::move(l));
        g.ops_dag.push_back(std::move(ld));
        g.rates.push_back(r);
    }
    if (trace_sink_) {
        g.gamma = (*trace_sink_)(t);
        if (g.gamma.rows() != dim_ || g.gamma.cols() != dim_) {
            throw Error(ErrorKind::DimMismatch, "trace sink has wrong dimension", t);
        }
        require_hermitian(g.gamma);
    } else {
        g.gamma = g.gamma_l;
    }
    g.k_eff = g.hamiltonian - 0.5 * kI * g.gamma;
    return g;
}

Matrix gamma_big(const MasterEquation& me, double t) { return me.at(t).gamma; }

Matrix effective_hamiltonian(const MasterEquation& me, double t) { return me.at(t).k_eff; }

Matrix jump_superop_apply(const GeneratorSnapshot& g, const Matrix& rho) {
    if (rho.rows() != g.dim() || rho.cols() != g.dim()) {
        throw Error(ErrorKind::DimMismatch, "state dimension does not match generator");
    }
    Matrix out = Matrix::Zero(g.dim(), g.dim());
    for (std::size_t a = 0; a < g.ops.size(); ++a) {
        out += g.rates[a] * (g.ops[a] * rho * g.ops_dag[a]);
    }
    return out;
}

Matrix jump_superop_apply(const MasterEquation& me, double t, const Matrix& rho) {
    return jump_superop_apply(me.at(t), rho);
}

Matrix lindblad_apply(const GeneratorSnapshot& g, const Matrix& rho) {
    Matrix out = jump_superop_apply(g, rho);
    out.noalias() += -kI * (g.hamiltonian * rho - rho * g.hamiltonian);
    out.noalias() += -0.5 * (g.gamma * rho + rho * g.gamma);
    return out;
}

Matrix lindblad_apply(const MasterEquation& me, double t, const Matrix& rho) {
    return lindblad_apply(me.at(t), rho);
}

bool is_cp_divisible_at(const MasterEquation& me, double t) {
    for (const auto& ch : me.channels()) {
        if (ch.rate(t) < -kEps) return false;
    }
    return true;
}

namespace {

double min_w_eigenvalue(const GeneratorSnapshot& g, int sample_count) {
    const int d = g.dim();
    double best = std::numeric_limits<double>::infinity();
    auto probe = [&](const PureState& psi) {
        for (const auto& ep : w_rate_operator(g, psi)) best = std::min(best, ep.value);
    };
    for (int i = 0; i < d; ++i) probe(PureState::basis(d, i));
    // Fixed seed: the diagnostic is reproducible.
    std::mt19937_64 gen(0x5eed5eedULL);
    std::normal_distribution<double> normal;
    for (int s = 0; s < sample_count; ++s) {
        Vector v(d);
        for (int i = 0; i < d; ++i) v[i] = cplx(normal(gen), normal(gen));
        probe(PureState::from_amplitudes(v));
    }
    return best;
}

}  // namespace

bool is_p_divisible_at(const MasterEquation& me, double t, int sample_count) {
    return min_w_eigenvalue(me.at(t), std::max(sample_count, 1)) >= -kEps;
}

bool phase_covariant_p_divisible_at(double gamma_plus, double gamma_minus, double gamma_z) {
    if (gamma_plus < 0.0 || gamma_minus < 0.0) return false;
    return gamma_z >= -0.5 * std::sqrt(gamma_plus * gamma_minus);
}

DivisibilityReport divisibility_report(const MasterEquation& me, double t, int sample_count) {
    const GeneratorSnapshot g = me.at(t);
    DivisibilityReport r;
    r.time = t;
    r.min_rate = g.min_rate();
    r.cp = r.min_rate >= -kEps;
    r.min_w_eigenvalue = min_w_eigenvalue(g, std::max(sample_count, 1));
    r.p = r.min_w_eigenvalue >= -kEps;
    return r;
}

}  // namespace qjump
