#include "qjump/unravel_extended.hpp"

#include <algorithm>
#include <cmath>

namespace qjump {

// ---- Doubled space -----------------------------------------------------

DoubledSnapshot DoubledModel::at(double t) const {
    DoubledSnapshot s;
    s.a = a(t);
    s.b = b(t);
    s.c.reserve(c.size());
    s.d.reserve(d.size());
    for (const auto& f : c) s.c.push_back(f(t));
    for (const auto& f : d) s.d.push_back(f(t));
    auto check = [&](const Matrix& m) {
        if (m.rows() != dim || m.cols() != dim) {
            throw Error(ErrorKind::DimMismatch, "doubled model operator has wrong dimension", t);
        }
    };
    check(s.a);
    check(s.b);
    for (const auto& m : s.c) check(m);
    for (const auto& m : s.d) check(m);
    return s;
}

DoubledModel gksl_to_doubled(const MasterEquation& me) {
    DoubledModel m;
    m.dim = me.dim();
    auto drift = [me](double t) -> Matrix {
        const auto g = me.at(t);
        return -kI * g.hamiltonian - 0.5 * g.gamma;
    };
    m.a = drift;
    m.b = drift;
    for (const auto& ch : me.channels()) {
        m.c.push_back([ch](double t) -> Matrix { return std::sqrt(std::abs(ch.rate(t))) * ch.op(t); });
        m.d.push_back([ch](double t) -> Matrix {
            const double r = ch.rate(t);
            const double sign = r < 0.0 ? -1.0 : 1.0;
            return sign * std::sqrt(std::abs(r)) * ch.op(t);
        });
    }
    return m;
}

std::vector<DoubledBranch> doubled_branches(const DoubledSnapshot& s, const DoubledState& theta, double dt,
                                            double t) {
    const double n2 = theta.norm2();
    if (!(n2 > 1e-28)) throw Error(ErrorKind::ZeroVector, "doubled state has zero norm", t);
    const double n = std::sqrt(n2);
    std::vector<DoubledBranch> br;
    double mass = 0.0;
    double rate_sum = 0.0;
    for (std::size_t i = 0; i < s.c.size(); ++i) {
        DoubledState j{s.c[i] * theta.phi, s.d[i] * theta.psi};
        const double jn2 = j.norm2();
        const double r = jn2 / n2;
        rate_sum += r;
        if (jn2 <= 1e-28) continue;
        const double scale = n / std::sqrt(jn2);
        j.phi *= scale;
        j.psi *= scale;
        br.push_back({r * dt, std::move(j), {EventKind::Jump, static_cast<int>(i)}});
        mass += r * dt;
    }
    if (mass > 1.0 + 1e-12) throw Error(ErrorKind::StepTooLarge, "doubled jump probability exceeds one", t);
    DoubledState drift{theta.phi + dt * (s.a * theta.phi + 0.5 * rate_sum * theta.phi),
                       theta.psi + dt * (s.b * theta.psi + 0.5 * rate_sum * theta.psi)};
    br.push_back({1.0 - mass, std::move(drift), {}});
    return br;
}

DoubledOutcome doubled_step(const DoubledSnapshot& s, const DoubledState& theta, double dt, double u, double t) {
    auto br = doubled_branches(s, theta, dt, t);
    double cum = 0.0;
    for (std::size_t k = 0; k + 1 < br.size(); ++k) {
        cum += br[k].probability;
        if (u < cum) return {std::move(br[k].state), br[k].event};
    }
    return {std::move(br.back().state), br.back().event};
}

DoubledOutcome doubled_step(const DoubledModel& model, const DoubledState& theta, double t, double dt, double u) {
    return doubled_step(model.at(t), theta, dt, u, t);
}

// ---- Tripled space -----------------------------------------------------

std::vector<ChannelPair> gksl_to_pairs(const MasterEquation& me) {
    std::vector<ChannelPair> pairs;
    for (const auto& ch : me.channels()) {
        pairs.push_back({[ch](double t) -> Matrix { return std::sqrt(0.5 * std::abs(ch.rate(t))) * ch.op(t); },
                         [ch](double t) -> Matrix {
                             const double r = ch.rate(t);
                             const double sign = r < 0.0 ? -1.0 : 1.0;
                             return sign * std::sqrt(0.5 * std::abs(r)) * ch.op(t);
                         }});
    }
    return pairs;
}

Matrix tripled_omega(const Matrix& c, const Matrix& d, double a) {
    const Matrix diff = c - d;
    const Matrix arg = a * Matrix::Identity(c.rows(), c.cols()) - diff.adjoint() * diff;
    return sqrt_psd(0.5 * (arg + arg.adjoint()), 1e-9);
}

namespace {

Matrix aux_unit(int row, int col) {
    Matrix m = Matrix::Zero(3, 3);
    m(row, col) = 1.0;
    return m;
}

}  // namespace

TripledEmbedding tripled_embed(int dim, TimeMatrix hamiltonian, std::vector<ChannelPair> pairs,
                               TripledRateChoice a_choice) {
    if (!a_choice.empty() && a_choice.size() != pairs.size()) {
        throw Error(ErrorKind::DimMismatch, "need one auxiliary rate per channel pair");
    }
    TripledEmbedding e;
    e.base_dim = dim;
    if (!hamiltonian) hamiltonian = [dim](double) { return Matrix::Zero(dim, dim).eval(); };
    e.hamiltonian3 = [hamiltonian](double t) -> Matrix { return kron(hamiltonian(t), pauli::identity(3)); };
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const ChannelPair p = pairs[i];
        TimeScalar a = a_choice.empty()
                           ? TimeScalar([p](double t) { return operator_norm_sq(p.c(t) - p.d(t)); })
                           : a_choice[i];
        e.a.push_back(a);
        const Matrix e11 = aux_unit(kAux1, kAux1);
        const Matrix e22 = aux_unit(kAux2, kAux2);
        const Matrix e31 = aux_unit(kAux3, kAux1);
        const Matrix e32 = aux_unit(kAux3, kAux2);
        e.jumps3.push_back([p, e11, e22](double t) -> Matrix { return kron(p.c(t), e11) + kron(p.d(t), e22); });
        e.jumps3.push_back([p, e11, e22](double t) -> Matrix { return kron(p.d(t), e11) + kron(p.c(t), e22); });
        e.jumps3.push_back([p, a, e31](double t) -> Matrix { return kron(tripled_omega(p.c(t), p.d(t), a(t)), e31); });
        e.jumps3.push_back([p, a, e32](double t) -> Matrix { return kron(tripled_omega(p.c(t), p.d(t), a(t)), e32); });
    }
    return e;
}

TripledEmbedding tripled_embed(const MasterEquation& me, TripledRateChoice a_choice) {
    if (!me.trace_preserving()) {
        throw Error(ErrorKind::InvalidRatePolicy, "tripled embedding needs a trace-preserving generator");
    }
    return tripled_embed(me.dim(), me.hamiltonian(), gksl_to_pairs(me), std::move(a_choice));
}

MasterEquation TripledEmbedding::master_equation() const {
    std::vector<Channel> channels;
    for (std::size_t k = 0; k < jumps3.size(); ++k) {
        channels.push_back({jumps3[k], [](double) { return 1.0; }, "J" + std::to_string(k % 4 + 1)});
    }
    return MasterEquation(3 * base_dim, hamiltonian3, std::move(channels));
}

namespace {

Vector chi() {
    Vector v = Vector::Zero(3);
    v[kAux1] = 1.0 / std::sqrt(2.0);
    v[kAux2] = 1.0 / std::sqrt(2.0);
    return v;
}

}  // namespace

Matrix tripled_initial(const DensityMatrix& rho0) {
    const Vector c = chi();
    return kron(rho0, c * c.adjoint());
}

PureState tripled_initial(const PureState& psi0) {
    return PureState::from_amplitudes(kron(psi0.vec(), chi()));
}

Matrix tripled_block12(const Matrix& w, int base_dim) {
    if (w.rows() != 3 * base_dim || w.cols() != 3 * base_dim) {
        throw Error(ErrorKind::DimMismatch, "tripled state must be 3d x 3d");
    }
    Matrix b(base_dim, base_dim);
    for (int s = 0; s < base_dim; ++s) {
        for (int r = 0; r < base_dim; ++r) b(s, r) = w(3 * s + kAux1, 3 * r + kAux2);
    }
    return b;
}

DensityMatrix tripled_extract(const Matrix& w, int base_dim, double tol) {
    const Matrix b = tripled_block12(w, base_dim);
    const cplx tr = b.trace();
    if (std::abs(tr) <= tol) {
        throw Error(ErrorKind::DegenerateBlock, "off-diagonal block of the tripled state has vanishing trace");
    }
    return b / tr;
}

// ---- Weighted trajectories ---------------------------------------------

double RatePolicy::rate(double t, int channel, double gamma) const {
    const double r = custom ? custom(t, channel, gamma) : std::max(std::abs(gamma), r_min);
    if (!(r > 0.0) || !std::isfinite(r)) {
        throw Error(ErrorKind::InvalidRatePolicy, "influence-martingale rates must be strictly positive", t);
    }
    return r;
}

namespace {

std::pair<WeightedTrajectory, Event> sample_weighted(const std::vector<WeightedBranch>& br,
                                                     const WeightedTrajectory& wt, double u) {
    double cum = 0.0;
    const WeightedBranch* pick = &br.back();
    for (std::size_t k = 0; k + 1 < br.size(); ++k) {
        cum += br[k].probability;
        if (u < cum) {
            pick = &br[k];
            break;
        }
    }
    WeightedTrajectory out;
    out.state = PureState::from_amplitudes(pick->state);
    out.weight = wt.weight * pick->weight_factor;
    out.sign = wt.sign * pick->sign_factor;
    return {out, pick->event};
}

}  // namespace

std::vector<WeightedBranch> im_branches(const GeneratorSnapshot& g, const PureState& psi, double dt,
                                        const RatePolicy& policy) {
    if (psi.dim() != g.dim()) throw Error(ErrorKind::DimMismatch, "state dimension does not match generator", g.t);
    std::vector<WeightedBranch> br;
    double mass = 0.0;
    double true_mass = 0.0;
    for (std::size_t a = 0; a < g.ops.size(); ++a) {
        const double gamma = g.rates[a];
        const double r = policy.rate(g.t, static_cast<int>(a), gamma);
        const Vector lpsi = g.ops[a] * psi.vec();
        const double n2 = lpsi.squaredNorm();
        if (n2 <= 1e-28) continue;
        true_mass += gamma * n2 * dt;
        WeightedBranch b;
        b.probability = r * n2 * dt;
        b.state = lpsi / std::sqrt(n2);
        b.weight_factor = gamma / r;
        b.sign_factor = gamma < 0.0 ? -1 : 1;
        b.event = {EventKind::Jump, static_cast<int>(a)};
        mass += b.probability;
        br.push_back(std::move(b));
    }
    if (mass >= 1.0) throw Error(ErrorKind::StepTooLarge, "jump probabilities exceed one; reduce dt", g.t);
    // 1 - sum (gamma - r) ||L psi||^2 dt to first order; the ratio keeps E[mu] = 1 exactly.
    const double drift_factor = (1.0 - true_mass) / (1.0 - mass);
    WeightedBranch det;
    det.probability = 1.0 - mass;
    det.state = normalize(psi.vec() - kI * dt * (g.k_eff * psi.vec())).first.vec();
    det.weight_factor = drift_factor;
    det.sign_factor = drift_factor < 0.0 ? -1 : 1;
    br.push_back(std::move(det));
    return br;
}

std::pair<WeightedTrajectory, Event> im_step(const WeightedTrajectory& wt, const GeneratorSnapshot& g, double dt,
                                             const RatePolicy& policy, double u) {
    return sample_weighted(im_branches(g, wt.state, dt, policy), wt, u);
}

std::pair<WeightedTrajectory, Event> im_step(const WeightedTrajectory& wt, const MasterEquation& me, double t,
                                             double dt, const RatePolicy& policy, double u) {
    return im_step(wt, me.at(t), dt, policy, u);
}

std::vector<WeightedBranch> plqt_branches(const GeneratorSnapshot& g, const PureState& psi, double dt) {
    if (psi.dim() != g.dim()) throw Error(ErrorKind::DimMismatch, "state dimension does not match generator", g.t);
    std::vector<WeightedBranch> br;
    double signed_mass = 0.0;
    for (std::size_t a = 0; a < g.ops.size(); ++a) {
        const double gamma = g.rates[a];
        const Vector lpsi = g.ops[a] * psi.vec();
        const double n2 = lpsi.squaredNorm();
        if (n2 <= 1e-28 || gamma == 0.0) continue;
        signed_mass += gamma * n2 * dt;
        WeightedBranch b;
        b.probability = std::abs(gamma) * n2 * dt;
        b.state = lpsi / std::sqrt(n2);
        b.sign_factor = gamma < 0.0 ? -1 : 1;
        b.weight_factor = b.sign_factor;
        b.event = {EventKind::Jump, static_cast<int>(a)};
        br.push_back(std::move(b));
    }
    double mass = 0.0;
    for (const auto& b : br) mass += b.probability;
    WeightedBranch det;
    det.probability = 1.0 - mass;
    det.state = normalize(psi.vec() - kI * dt * (g.k_eff * psi.vec())).first.vec();
    if (det.probability <= 0.0) {
        throw Error(ErrorKind::StepTooLarge, "jump probabilities exceed one; reduce dt", g.t);
    }
    // 1 + 2 sum_{g<0} |g| ||L psi||^2 dt to first order; the ratio keeps E[weight] = 1 exactly.
    det.weight_factor = (1.0 - signed_mass) / det.probability;
    br.push_back(std::move(det));
    return br;
}

std::pair<WeightedTrajectory, Event> plqt_step(const WeightedTrajectory& wt, const GeneratorSnapshot& g, double dt,
                                               double u) {
    return sample_weighted(plqt_branches(g, wt.state, dt), wt, u);
}

std::pair<WeightedTrajectory, Event> plqt_step(const WeightedTrajectory& wt, const MasterEquation& me, double t,
                                               double dt, double u) {
    return plqt_step(wt, me.at(t), dt, u);
}

// ---- Cloning -----------------------------------------------------------

CloningProbabilities cloning_probabilities(const GeneratorSnapshot& g, const PureState& psi, double dt) {
    if (psi.dim() != g.dim()) throw Error(ErrorKind::DimMismatch, "state dimension does not match generator", g.t);
    CloningProbabilities p;
    for (std::size_t a = 0; a < g.ops.size(); ++a) {
        if (g.rates[a] < -kEps) {
            throw Error(ErrorKind::NegativeRate, "cloning needs non-negative rates", g.t);
        }
        p.jumps += std::max(g.rates[a], 0.0) * (g.ops[a] * psi.vec()).squaredNorm() * dt;
    }
    const double x = (psi.vec().adjoint() * (g.gamma_l - g.gamma) * psi.vec())(0).real();
    p.clone = std::max(0.0, x * dt);
    p.destroy = std::max(0.0, -x * dt);
    p.deterministic = 1.0 - p.jumps - std::abs(x) * dt;
    if (p.deterministic < -1e-12) {
        throw Error(ErrorKind::StepTooLarge, "cloning probabilities exceed one; reduce dt", g.t);
    }
    return p;
}

Branches cloning_branches(const GeneratorSnapshot& g, const PureState& psi, double dt) {
    const auto p = cloning_probabilities(g, psi, dt);
    Branches br;
    for (std::size_t a = 0; a < g.ops.size(); ++a) {
        const Vector lpsi = g.ops[a] * psi.vec();
        const double n2 = lpsi.squaredNorm();
        const double pa = std::max(g.rates[a], 0.0) * n2 * dt;
        if (pa <= 0.0 || n2 <= 1e-28) continue;
        Branch b;
        b.probability = pa;
        b.state = normalize(lpsi).first.vec();
        b.event = {EventKind::Jump, static_cast<int>(a)};
        br.push_back(std::move(b));
    }
    if (p.clone > 0.0) {
        Branch b;
        b.probability = p.clone;
        b.state = psi.vec();
        b.event = {EventKind::Clone, -1};
        b.weight_factor = 2.0;  // two copies
        br.push_back(std::move(b));
    }
    if (p.destroy > 0.0) {
        Branch b;
        b.probability = p.destroy;
        b.state = psi.vec();
        b.event = {EventKind::Destroy, -1};
        b.weight_factor = 0.0;
        br.push_back(std::move(b));
    }
    Branch det;
    det.probability = p.deterministic;
    det.state = normalize(psi.vec() - kI * dt * (g.k_eff * psi.vec())).first.vec();
    br.push_back(std::move(det));
    return br;
}

CloningOutcome cloning_step(const PureState& psi, const GeneratorSnapshot& g, double dt, double u) {
    const auto br = cloning_branches(g, psi, dt);
    double cum = 0.0;
    const Branch* pick = &br.back();
    for (std::size_t k = 0; k + 1 < br.size(); ++k) {
        cum += br[k].probability;
        if (u < cum) {
            pick = &br[k];
            break;
        }
    }
    CloningOutcome out;
    out.kind = pick->event.kind;
    out.channel = pick->event.kind == EventKind::Jump ? pick->event.id : -1;
    out.state = PureState::from_amplitudes(pick->state);
    return out;
}

CloningOutcome cloning_step(const PureState& psi, const MasterEquation& me, double t, double dt, double u) {
    return cloning_step(psi, me.at(t), dt, u);
}

Population Population::uniform(const PureState& psi, std::size_t n) {
    Population p;
    p.members.assign(n, psi);
    p.initial_count = n;
    return p;
}

double Population::trace_estimate() const {
    if (initial_count == 0) return 0.0;
    return scale * static_cast<double>(members.size()) / static_cast<double>(initial_count);
}

Matrix Population::density() const {
    if (members.empty()) {
        return Matrix::Zero(0, 0);
    }
    const int d = members.front().dim();
    Matrix rho = Matrix::Zero(d, d);
    for (const auto& m : members) rho.noalias() += m.projector();
    return rho * (scale / static_cast<double>(initial_count));
}

void cloning_population_step(Population& pop, const GeneratorSnapshot& g, double dt, Rng& rng,
                             std::vector<std::size_t>* event_counts) {
    std::vector<PureState> next;
    next.reserve(pop.members.size() + pop.members.size() / 8 + 4);
    for (const auto& m : pop.members) {
        const auto out = cloning_step(m, g, dt, rng.uniform());
        if (event_counts != nullptr) {
            const auto k = static_cast<std::size_t>(out.kind);
            if (event_counts->size() <= k) event_counts->resize(k + 1, 0);
            ++(*event_counts)[k];
        }
        switch (out.kind) {
            case EventKind::Clone:
                next.push_back(m);
                next.push_back(m);
                break;
            case EventKind::Destroy:
                break;
            default:
                next.push_back(out.state);
                break;
        }
    }
    pop.members = std::move(next);
    const std::size_t n0 = pop.initial_count;
    const std::size_t n = pop.members.size();
    if (n0 > 0 && n > 0 && (n > 2 * n0 || 2 * n < n0)) {
        pop.scale *= static_cast<double>(n) / static_cast<double>(n0);
        std::vector<PureState> resampled;
        resampled.reserve(n0);
        for (std::size_t k = 0; k < n0; ++k) resampled.push_back(pop.members[rng.below(n)]);
        pop.members = std::move(resampled);
    }
}

// ---- Orthogonal positive decomposition ---------------------------------

OpdDecomposition opd_decompose(const Matrix& q) {
    require_hermitian(q);
    const int d = static_cast<int>(q.rows());
    Matrix plus = Matrix::Zero(d, d);
    Matrix minus = Matrix::Zero(d, d);
    for (const auto& ep : eigh(q)) {
        if (ep.value > 0.0) plus += ep.value * ep.vector.projector();
        if (ep.value < 0.0) minus += -ep.value * ep.vector.projector();
    }
    OpdDecomposition r;
    r.mu_plus = plus.trace().real();
    r.mu_minus = minus.trace().real();
    if (r.mu_plus > kEps) r.sigma_plus = plus / r.mu_plus;
    if (r.mu_minus > kEps) r.sigma_minus = minus / r.mu_minus;
    return r;
}

}  // namespace qjump
