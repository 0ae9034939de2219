#include "qjump/unravel_local.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace qjump {

namespace {

constexpr double kSelfFidelity = 1.0 - 1e-9;

void require_dim(const GeneratorSnapshot& g, const PureState& psi) {
    if (psi.dim() != g.dim()) {
        throw Error(ErrorKind::DimMismatch, "state dimension does not match generator", g.t);
    }
}

void require_nonnegative_rates(const GeneratorSnapshot& g) {
    for (std::size_t a = 0; a < g.rates.size(); ++a) {
        if (g.rates[a] < -kEps) {
            throw Error(ErrorKind::NegativeRate,
                        "negative rate on channel " + std::to_string(a) +
                            "; use a non-Markovian unraveling",
                        g.t);
        }
    }
}

Branch deterministic_branch(const Vector& drifted, double p_jumps) {
    Branch b;
    b.probability = 1.0 - p_jumps;
    b.state = normalize(drifted).first.vec();
    return b;
}

double jump_mass(const Branches& br) {
    double s = 0.0;
    for (const auto& b : br) {
        if (b.event.kind != EventKind::Deterministic) s += b.probability;
    }
    return s;
}

}  // namespace

void check_step_size(const Branches& branches, double t) {
    if (jump_mass(branches) > 1.0 + 1e-12) {
        throw Error(ErrorKind::StepTooLarge, "jump probabilities exceed one; reduce dt", t);
    }
}

StepOutcome sample_branch(const Branches& branches, double u) {
    if (branches.empty()) throw Error(ErrorKind::NoJumpPossible, "no branches to sample");
    const double mass = jump_mass(branches);
    double cum = 0.0;
    const Branch* pick = &branches.back();
    for (const auto& b : branches) {
        if (b.event.kind == EventKind::Deterministic) continue;
        cum += b.probability;
        if (u < cum) {
            pick = &b;
            break;
        }
    }
    if (pick->event.kind != EventKind::Deterministic && u >= cum) {
        // u fell past all jumps and there is no deterministic branch
        pick = &branches.back();
    }
    StepOutcome out;
    out.state = PureState::from_amplitudes(pick->state);
    out.event = pick->event;
    out.probability = pick->probability;
    out.eigenvalue = pick->eigenvalue;
    out.weight_factor = pick->weight_factor;
    if (pick->event.kind != EventKind::Deterministic && mass > 0.0) out.fraction = u / mass;
    return out;
}

GaugeTransform GaugeTransform::time_dependent(std::function<Matrix(double)> c) {
    GaugeTransform g;
    g.kind = Kind::TimeDependent;
    g.c_op = std::move(c);
    return g;
}

GaugeTransform GaugeTransform::state_dependent(std::function<Vector(double, const PureState&)> f) {
    GaugeTransform g;
    g.kind = Kind::StateDependent;
    g.phi = std::move(f);
    return g;
}

Vector GaugeTransform::phi_of(double t, const PureState& psi) const {
    Vector out;
    switch (kind) {
        case Kind::None:
            return Vector::Zero(psi.dim());
        case Kind::TimeDependent:
            out = c_op(t) * psi.vec();
            break;
        case Kind::StateDependent:
            out = phi(t, psi);
            break;
    }
    if (out.size() != psi.dim()) {
        throw Error(ErrorKind::DimMismatch, "gauge output has wrong dimension", t);
    }
    return out;
}

// ---- MCWF ---------------------------------------------------------------

Branches mcwf_branches(const GeneratorSnapshot& g, const PureState& psi, double dt) {
    require_dim(g, psi);
    require_nonnegative_rates(g);
    Branches br;
    double mass = 0.0;
    for (std::size_t a = 0; a < g.ops.size(); ++a) {
        const Vector lpsi = g.ops[a] * psi.vec();
        const double n2 = lpsi.squaredNorm();
        const double p = std::max(g.rates[a], 0.0) * n2 * dt;
        if (p <= 0.0 || n2 <= 1e-28) continue;
        Branch b;
        b.probability = p;
        b.state = normalize(lpsi).first.vec();
        b.event = {EventKind::Jump, static_cast<int>(a)};
        br.push_back(std::move(b));
        mass += p;
    }
    check_step_size(br, g.t);
    br.push_back(deterministic_branch(psi.vec() - kI * dt * (g.k_eff * psi.vec()), mass));
    return br;
}

StepOutcome mcwf_step(const GeneratorSnapshot& g, const PureState& psi, double dt, double u) {
    return sample_branch(mcwf_branches(g, psi, dt), u);
}

StepOutcome mcwf_step(const MasterEquation& me, const PureState& psi, double t, double dt, double u) {
    return mcwf_step(me.at(t), psi, dt, u);
}

// ---- WTD ----------------------------------------------------------------

SnapshotCache::SnapshotCache(const MasterEquation& me, double t0, double h, int n) : t0_(t0), h_(h) {
    snaps_.reserve(n + 1);
    for (int k = 0; k <= n; ++k) snaps_.push_back(me.at(t0 + k * h));
}

const GeneratorSnapshot* SnapshotCache::find(double t) const {
    if (snaps_.empty() || h_ <= 0.0) return nullptr;
    const double x = (t - t0_) / h_;
    const long k = std::lround(x);
    if (k < 0 || k >= static_cast<long>(snaps_.size())) return nullptr;
    if (std::abs(x - static_cast<double>(k)) > 1e-9) return nullptr;
    return &snaps_[k];
}

namespace {

class KSource {
public:
    KSource(const MasterEquation& me, const SnapshotCache* cache) : me_(me), cache_(cache) {}

    const Matrix& k_at(double t) {
        if (cache_ != nullptr) {
            if (const auto* s = cache_->find(t)) {
                check(*s);
                return s->k_eff;
            }
        }
        scratch_ = me_.at(t);
        check(scratch_);
        return scratch_.k_eff;
    }

private:
    static void check(const GeneratorSnapshot& g) { require_nonnegative_rates(g); }

    const MasterEquation& me_;
    const SnapshotCache* cache_;
    GeneratorSnapshot scratch_;
};

Vector rk4_schrodinger(KSource& src, double t, double h, const Vector& psi) {
    const Matrix k0 = src.k_at(t);
    const Matrix km = src.k_at(t + 0.5 * h);
    const Matrix& k1m = src.k_at(t + h);
    const Vector k1 = -kI * (k0 * psi);
    const Vector k2 = -kI * (km * (psi + 0.5 * h * k1));
    const Vector k3 = -kI * (km * (psi + 0.5 * h * k2));
    const Vector k4 = -kI * (k1m * (psi + h * k3));
    return psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

WtdResult wtd_advance(const MasterEquation& me, const Vector& psi_tilde, double t0, double x,
                      double t_cap, double h, const SnapshotCache* cache) {
    if (psi_tilde.size() != me.dim()) {
        throw Error(ErrorKind::DimMismatch, "state dimension does not match generator", t0);
    }
    KSource src(me, cache);
    WtdResult res{t0, psi_tilde, false};
    if (res.psi_tilde.squaredNorm() <= x) {
        res.jumped = true;
        return res;
    }
    double t = t0;
    Vector psi = psi_tilde;
    while (t < t_cap - 1e-13) {
        const double step = std::min(h, t_cap - t);
        const Vector next = rk4_schrodinger(src, t, step, psi);
        if (next.squaredNorm() <= x) {
            double lo = 0.0;
            double hi = step;
            Vector at_hi = next;
            while (hi - lo > 1e-10) {
                const double mid = 0.5 * (lo + hi);
                const Vector v = rk4_schrodinger(src, t, mid, psi);
                if (v.squaredNorm() <= x) {
                    hi = mid;
                    at_hi = v;
                } else {
                    lo = mid;
                }
            }
            res.time = t + hi;
            res.psi_tilde = at_hi;
            res.jumped = true;
            return res;
        }
        psi = next;
        t += step;
    }
    res.time = t_cap;
    res.psi_tilde = psi;
    return res;
}

WtdResult wtd_next_jump(const MasterEquation& me, const PureState& psi0, double t0, double x,
                        double t_cap, double h) {
    return wtd_advance(me, psi0.vec(), t0, x, t_cap, h, nullptr);
}

int wtd_select_channel(const GeneratorSnapshot& g, const PureState& psi, double u) {
    require_dim(g, psi);
    require_nonnegative_rates(g);
    const double denom = (psi.vec().adjoint() * g.gamma * psi.vec())(0).real();
    if (denom <= kEps) {
        throw Error(ErrorKind::NoJumpPossible, "no channel can fire from this state", g.t);
    }
    std::vector<double> w(g.ops.size());
    double total = 0.0;
    for (std::size_t a = 0; a < g.ops.size(); ++a) {
        w[a] = std::max(g.rates[a], 0.0) * (g.ops[a] * psi.vec()).squaredNorm();
        total += w[a];
    }
    if (total <= kEps) {
        throw Error(ErrorKind::NoJumpPossible, "no channel can fire from this state", g.t);
    }
    double cum = 0.0;
    int last = 0;
    for (std::size_t a = 0; a < w.size(); ++a) {
        if (w[a] <= 0.0) continue;
        last = static_cast<int>(a);
        cum += w[a] / total;
        if (u < cum) return last;
    }
    return last;
}

int wtd_select_channel(const MasterEquation& me, const PureState& psi, double t1, double u) {
    return wtd_select_channel(me.at(t1), psi, u);
}

// ---- NMQJ ---------------------------------------------------------------

NmqjEnsemble NmqjEnsemble::uniform(const PureState& psi, std::size_t n) {
    NmqjEnsemble e;
    e.buckets.push_back({n, psi});
    e.member_bucket.assign(n, 0);
    return e;
}

Matrix NmqjEnsemble::density() const {
    if (buckets.empty()) throw Error(ErrorKind::ZeroVector, "empty ensemble");
    const int d = buckets.front().state.dim();
    Matrix rho = Matrix::Zero(d, d);
    std::size_t n = 0;
    for (const auto& b : buckets) {
        if (b.count == 0) continue;
        rho += static_cast<double>(b.count) * b.state.projector();
        n += b.count;
    }
    if (n == 0) throw Error(ErrorKind::ZeroVector, "empty ensemble");
    return rho / static_cast<double>(n);
}

double reverse_jump_probability(double method_p, long n_i, long n_j) {
    if (n_i <= 0) throw Error(ErrorKind::DivisionByZero, "reverse jump from an empty bucket");
    const double p = -(static_cast<double>(n_j) / static_cast<double>(n_i)) * method_p;
    return std::max(p, 0.0);
}

namespace {

struct MemberMove {
    double probability;
    EventKind kind;
    int channel;
    int target;  ///< reverse: bucket index; direct: slot in `direct_targets`
};

int find_bucket(const std::vector<NmqjBucket>& buckets, const Vector& v) {
    for (std::size_t k = 0; k < buckets.size(); ++k) {
        if (overlap2(buckets[k].state.vec(), v) >= kBucketFidelity) return static_cast<int>(k);
    }
    return -1;
}

int latest_direct_event(const std::vector<NmqjEvent>& log, int into, int channel, int from) {
    int fallback = -1;
    for (auto it = log.rbegin(); it != log.rend(); ++it) {
        if (it->kind != EventKind::Jump || it->target_bucket != into || it->channel != channel) continue;
        if (it->source_bucket == from) return it->id;
        if (fallback < 0) fallback = it->id;
    }
    return fallback;
}

}  // namespace

NmqjEnsemble nmqj_step(const GeneratorSnapshot& g, const NmqjEnsemble& ens, double dt, Rng& rng) {
    const int nb = static_cast<int>(ens.buckets.size());
    for (const auto& b : ens.buckets) require_dim(g, b.state);

    // Jump images L_a psi_j, reused for direct jumps and reverse-target matching.
    std::vector<std::vector<Vector>> images(nb, std::vector<Vector>(g.ops.size()));
    std::vector<std::vector<double>> image_norm2(nb, std::vector<double>(g.ops.size()));
    for (int j = 0; j < nb; ++j) {
        for (std::size_t a = 0; a < g.ops.size(); ++a) {
            images[j][a] = g.ops[a] * ens.buckets[j].state.vec();
            image_norm2[j][a] = images[j][a].squaredNorm();
        }
    }

    struct DirectTarget {
        int source;
        int channel;
    };
    std::vector<DirectTarget> direct_targets;
    std::vector<std::vector<MemberMove>> moves(nb);

    std::vector<double> bucket_mass(nb, 0.0);
    for (int i = 0; i < nb; ++i) {
        if (ens.buckets[i].count == 0) continue;
        for (std::size_t a = 0; a < g.ops.size(); ++a) {
            if (g.rates[a] < 0.0) continue;
            const double p = g.rates[a] * image_norm2[i][a] * dt;
            if (p <= 0.0) continue;
            direct_targets.push_back({i, static_cast<int>(a)});
            moves[i].push_back({p, EventKind::Jump, static_cast<int>(a),
                                static_cast<int>(direct_targets.size()) - 1});
            bucket_mass[i] += p;
        }
    }
    // Negative rates: every populated pre-jump bucket j with a nonzero image
    // needs a populated bucket i holding that image; members of i move back to j.
    for (int j = 0; j < nb; ++j) {
        const auto n_j = static_cast<long>(ens.buckets[j].count);
        if (n_j == 0) continue;
        for (std::size_t a = 0; a < g.ops.size(); ++a) {
            const double rate = g.rates[a];
            if (rate >= 0.0 || image_norm2[j][a] <= 1e-28) continue;
            const Vector img = images[j][a] / std::sqrt(image_norm2[j][a]);
            if (overlap2(img, ens.buckets[j].state.vec()) >= kBucketFidelity) continue;
            int i = -1;
            for (int k = 0; k < nb; ++k) {
                if (ens.buckets[k].count > 0 && overlap2(ens.buckets[k].state.vec(), img) >= kBucketFidelity) {
                    i = k;
                    break;
                }
            }
            if (i < 0) {
                throw Error(ErrorKind::MissingTargetState,
                            "negative rate on channel " + std::to_string(a) +
                                ": no populated bucket holds the jump image of bucket " + std::to_string(j),
                            g.t);
            }
            const double direct = rate * image_norm2[j][a] * dt;
            const double p =
                reverse_jump_probability(direct, static_cast<long>(ens.buckets[i].count), n_j);
            if (p <= 0.0) continue;
            moves[i].push_back({p, EventKind::ReverseJump, static_cast<int>(a), j});
            bucket_mass[i] += p;
        }
    }
    for (int i = 0; i < nb; ++i) {
        if (bucket_mass[i] > 1.0 + 1e-12) {
            throw Error(ErrorKind::StepTooLarge, "NMQJ move probability exceeds one; reduce dt", g.t);
        }
    }

    // One draw per member, in member order.
    const std::size_t n = ens.member_bucket.size();
    std::vector<int> chosen(n, -1);
    for (std::size_t m = 0; m < n; ++m) {
        const int i = ens.member_bucket[m];
        const double u = rng.uniform();
        double cum = 0.0;
        for (std::size_t k = 0; k < moves[i].size(); ++k) {
            cum += moves[i][k].probability;
            if (u < cum) {
                chosen[m] = static_cast<int>(k);
                break;
            }
        }
    }

    NmqjEnsemble out;
    out.log = ens.log;
    out.member_bucket = ens.member_bucket;
    out.buckets.reserve(ens.buckets.size());
    for (const auto& b : ens.buckets) {
        const Vector drifted = b.state.vec() - kI * dt * (g.k_eff * b.state.vec());
        out.buckets.push_back({b.count, normalize(drifted).first});
    }

    std::vector<int> direct_bucket(direct_targets.size(), -1);
    auto resolve_direct = [&](int slot) {
        if (direct_bucket[slot] >= 0) return direct_bucket[slot];
        const auto& dtg = direct_targets[slot];
        const Vector& img = images[dtg.source][dtg.channel];
        int k = find_bucket(out.buckets, img);
        if (k < 0) {
            out.buckets.push_back({0, normalize(img).first});
            k = static_cast<int>(out.buckets.size()) - 1;
        }
        direct_bucket[slot] = k;
        return k;
    };

    // Aggregate moves per (kind, source, target, channel) for the event log.
    std::map<std::tuple<int, int, int, int>, std::size_t> tally;
    for (std::size_t m = 0; m < n; ++m) {
        if (chosen[m] < 0) continue;
        const int i = ens.member_bucket[m];
        const MemberMove& mv = moves[i][chosen[m]];
        const int target = mv.kind == EventKind::Jump ? resolve_direct(mv.target) : mv.target;
        out.member_bucket[m] = target;
        out.buckets[i].count -= 1;
        out.buckets[target].count += 1;
        ++tally[{mv.kind == EventKind::Jump ? 0 : 1, i, target, mv.channel}];
    }
    for (const auto& [key, count] : tally) {
        const auto [kind, src, dst, ch] = key;
        NmqjEvent ev;
        ev.kind = kind == 0 ? EventKind::Jump : EventKind::ReverseJump;
        ev.id = static_cast<int>(out.log.size());
        ev.time = g.t;
        ev.source_bucket = src;
        ev.target_bucket = dst;
        ev.channel = ch;
        ev.members = count;
        if (kind == 1) {
            ev.cancels = latest_direct_event(ens.log, src, ch, dst);
        }
        out.log.push_back(ev);
    }
    return out;
}

NmqjEnsemble nmqj_step(const MasterEquation& me, const NmqjEnsemble& ens, double t, double dt, Rng& rng) {
    return nmqj_step(me.at(t), ens, dt, rng);
}

// ---- Rate-operator family ----------------------------------------------

RateOperatorSpectrum w_rate_operator(const GeneratorSnapshot& g, const PureState& psi) {
    require_dim(g, psi);
    const Matrix p = psi.projector();
    const Matrix q = Matrix::Identity(g.dim(), g.dim()) - p;
    Matrix w = q * jump_superop_apply(g, p) * q;
    w = 0.5 * (w + w.adjoint()).eval();
    // Push psi far below the rest of the spectrum so it separates cleanly and
    // degenerate eigenspaces on psi's complement get a basis orthogonal to psi.
    const double shift = 1.0 + 2.0 * w.cwiseAbs().sum();
    auto pairs = eigh(w - shift * p);
    pairs.pop_back();
    for (auto& ep : pairs) {
        if (std::abs(ep.value) < kEps) ep.value = 0.0;
    }
    return pairs;
}

RateOperatorSpectrum w_rate_operator(const MasterEquation& me, double t, const PureState& psi) {
    return w_rate_operator(me.at(t), psi);
}

Matrix w_effective_hamiltonian(const GeneratorSnapshot& g, const PureState& psi) {
    require_dim(g, psi);
    Matrix kw = g.k_eff;
    const int d = g.dim();
    for (std::size_t a = 0; a < g.ops.size(); ++a) {
        const cplx l = psi.vec().dot(g.ops[a] * psi.vec());
        kw += 0.5 * kI * g.rates[a] *
              (2.0 * std::conj(l) * g.ops[a] - std::norm(l) * Matrix::Identity(d, d));
    }
    return kw;
}

namespace {

Branches eigen_branches(const RateOperatorSpectrum& spec, const PureState& psi, double dt,
                        ErrorKind negative_kind, double t, bool fold_self) {
    Branches br;
    for (std::size_t nu = 0; nu < spec.size(); ++nu) {
        const auto& ep = spec[nu];
        if (fold_self && overlap2(ep.vector.vec(), psi.vec()) >= kSelfFidelity) continue;
        double lam = ep.value;
        if (lam < -kEps) {
            throw Error(negative_kind,
                        "rate operator has negative eigenvalue " + std::to_string(lam), t);
        }
        lam = std::max(lam, 0.0);
        if (lam == 0.0) continue;
        Branch b;
        b.probability = lam * dt;
        b.state = ep.vector.vec();
        b.event = {EventKind::Jump, static_cast<int>(nu)};
        b.eigenvalue = ep.value;
        br.push_back(std::move(b));
    }
    return br;
}

}  // namespace

Branches wroqj_branches(const GeneratorSnapshot& g, const PureState& psi, double dt) {
    const auto spec = w_rate_operator(g, psi);
    Branches br = eigen_branches(spec, psi, dt, ErrorKind::NegativeWEigenvalue, g.t, false);
    const Matrix kw = w_effective_hamiltonian(g, psi);
    check_step_size(br, g.t);
    br.push_back(deterministic_branch(psi.vec() - kI * dt * (kw * psi.vec()), jump_mass(br)));
    return br;
}

StepOutcome wroqj_step(const GeneratorSnapshot& g, const PureState& psi, double dt, double u) {
    return sample_branch(wroqj_branches(g, psi, dt), u);
}

StepOutcome wroqj_step(const MasterEquation& me, const PureState& psi, double t, double dt, double u) {
    return wroqj_step(me.at(t), psi, dt, u);
}

Matrix rate_operator_matrix(const GeneratorSnapshot& g, const PureState& psi, const GaugeTransform& gauge) {
    require_dim(g, psi);
    Matrix r = jump_superop_apply(g, psi.projector());
    if (gauge.kind != GaugeTransform::Kind::None) {
        const Vector phi = gauge.phi_of(g.t, psi);
        r += 0.5 * (phi * psi.vec().adjoint() + psi.vec() * phi.adjoint());
    }
    return 0.5 * (r + r.adjoint());
}

RateOperatorSpectrum rate_operator(const GeneratorSnapshot& g, const PureState& psi, const GaugeTransform& gauge) {
    return eigh(rate_operator_matrix(g, psi, gauge));
}

RateOperatorSpectrum rate_operator(const MasterEquation& me, double t, const PureState& psi,
                                   const GaugeTransform& gauge) {
    return rate_operator(me.at(t), psi, gauge);
}

Branches roqj_branches(const GeneratorSnapshot& g, const PureState& psi, double dt,
                       const GaugeTransform& gauge) {
    const auto spec = rate_operator(g, psi, gauge);
    Branches br = eigen_branches(spec, psi, dt, ErrorKind::NegativeROEigenvalue, g.t, true);
    // K' psi = K psi - (i/2) phi for both gauge kinds.
    const Vector phi = gauge.phi_of(g.t, psi);
    const Vector drift = psi.vec() - kI * dt * (g.k_eff * psi.vec()) - 0.5 * dt * phi;
    check_step_size(br, g.t);
    br.push_back(deterministic_branch(drift, jump_mass(br)));
    return br;
}

StepOutcome roqj_step(const GeneratorSnapshot& g, const PureState& psi, double dt,
                      const GaugeTransform& gauge, double u) {
    return sample_branch(roqj_branches(g, psi, dt, gauge), u);
}

StepOutcome roqj_step(const MasterEquation& me, const PureState& psi, double t, double dt,
                      const GaugeTransform& gauge, double u) {
    return roqj_step(me.at(t), psi, dt, gauge, u);
}

}  // namespace qjump
