#pragma once

// Piecewise-deterministic steppers on the system Hilbert space:
// MCWF, WTD, NMQJ and the rate-operator family (W, R, Psi-R).

#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "qjump/master_equation.hpp"
#include "qjump/rng.hpp"

namespace qjump {

enum class EventKind { Deterministic, Jump, ReverseJump, Clone, Destroy };

struct Event {
    EventKind kind = EventKind::Deterministic;
    int id = -1;      ///< channel index or eigenbranch index
    int source = -1;  ///< reverse jumps: source bucket
    int target = -1;  ///< reverse jumps: target bucket
};

/// One possible outcome of a single time step.
struct Branch {
    double probability = 0.0;
    Vector state;  ///< normalized
    Event event;
    double weight_factor = 1.0;
    double eigenvalue = std::numeric_limits<double>::quiet_NaN();
};

/// Jump branches come first; the deterministic branch (if any) is last and
/// carries probability 1 - sum(jumps).
using Branches = std::vector<Branch>;

struct StepOutcome {
    PureState state;
    Event event;
    double probability = 0.0;
    double eigenvalue = std::numeric_limits<double>::quiet_NaN();
    double weight_factor = 1.0;
    /// For jumps: u / (total jump probability), i.e. where inside [t, t+dt]
    /// the jump falls under a uniform-in-step refinement.
    double fraction = 0.0;
};

/// Picks a branch with a single uniform draw u in [0, 1).
StepOutcome sample_branch(const Branches& branches, double u);

/// Throws StepTooLarge if the jump probabilities exceed one.
void check_step_size(const Branches& branches, double t);

using RateOperatorSpectrum = std::vector<Eigenpair>;

/// Freedom in splitting the generator into jump and drift parts.
struct GaugeTransform {
    enum class Kind { None, TimeDependent, StateDependent };
    Kind kind = Kind::None;
    std::function<Matrix(double)> c_op;                       ///< C_t
    std::function<Vector(double, const PureState&)> phi;      ///< |phi_{psi,t}>

    static GaugeTransform none() { return {}; }
    static GaugeTransform time_dependent(std::function<Matrix(double)> c);
    static GaugeTransform state_dependent(std::function<Vector(double, const PureState&)> f);

    /// |phi> = C psi for the given gauge (zero for None).
    Vector phi_of(double t, const PureState& psi) const;
};

// ---- MCWF ---------------------------------------------------------------

Branches mcwf_branches(const GeneratorSnapshot& g, const PureState& psi, double dt);
StepOutcome mcwf_step(const GeneratorSnapshot& g, const PureState& psi, double dt, double u);
StepOutcome mcwf_step(const MasterEquation& me, const PureState& psi, double t, double dt, double u);

// ---- Waiting-time distribution -----------------------------------------

/// Optional cache of snapshots at times t0 + k h (k = 0..n).
class SnapshotCache {
public:
    SnapshotCache() = default;
    SnapshotCache(const MasterEquation& me, double t0, double h, int n);
    SnapshotCache(double t0, double h, std::vector<GeneratorSnapshot> snaps)
        : t0_(t0), h_(h), snaps_(std::move(snaps)) {}
    /// Cached snapshot at t, or nullptr if t is off the lattice.
    const GeneratorSnapshot* find(double t) const;
    const GeneratorSnapshot& operator[](std::size_t k) const { return snaps_[k]; }
    std::size_t size() const { return snaps_.size(); }

private:
    double t0_ = 0.0;
    double h_ = 0.0;
    std::vector<GeneratorSnapshot> snaps_;
};

struct WtdResult {
    double time = 0.0;
    Vector psi_tilde;  ///< unnormalized state at `time`
    bool jumped = false;
};

/// Integrates d psi/dt = -i K(t) psi from t0 with RK4 (step <= h) until
/// ||psi||^2 drops to x (bisection to 1e-10 in time) or t_cap is reached.
WtdResult wtd_advance(const MasterEquation& me, const Vector& psi_tilde, double t0, double x,
                      double t_cap, double h = 1e-2, const SnapshotCache* cache = nullptr);

WtdResult wtd_next_jump(const MasterEquation& me, const PureState& psi0, double t0, double x,
                        double t_cap, double h = 1e-2);

int wtd_select_channel(const GeneratorSnapshot& g, const PureState& psi, double u);
int wtd_select_channel(const MasterEquation& me, const PureState& psi, double t1, double u);

// ---- NMQJ ---------------------------------------------------------------

struct NmqjBucket {
    std::size_t count = 0;
    PureState state;
};

struct NmqjEvent {
    EventKind kind = EventKind::Jump;
    int id = -1;
    double time = 0.0;
    int source_bucket = -1;
    int target_bucket = -1;
    int channel = -1;
    std::size_t members = 0;
    int cancels = -1;  ///< reverse jumps: id of the direct jump being undone
};

/// Effective ensemble {(N_i, psi_i)}. Members keep persistent identities so
/// that batch statistics can be formed over them.
struct NmqjEnsemble {
    std::vector<NmqjBucket> buckets;
    std::vector<int> member_bucket;
    std::vector<NmqjEvent> log;

    static NmqjEnsemble uniform(const PureState& psi, std::size_t n);
    std::size_t total() const { return member_bucket.size(); }
    Matrix density() const;
};

/// Bucket states are identified up to global phase at fidelity >= 1 - 1e-9.
inline constexpr double kBucketFidelity = 1.0 - 1e-9;

NmqjEnsemble nmqj_step(const GeneratorSnapshot& g, const NmqjEnsemble& ens, double dt, Rng& rng);
NmqjEnsemble nmqj_step(const MasterEquation& me, const NmqjEnsemble& ens, double t, double dt,
                       Rng& rng);

/// p_{i->j} = -(N_j / N_i) p, with p the (negative) direct probability at the target.
double reverse_jump_probability(double method_p, long n_i, long n_j);

// ---- Rate-operator family ----------------------------------------------

RateOperatorSpectrum w_rate_operator(const GeneratorSnapshot& g, const PureState& psi);
RateOperatorSpectrum w_rate_operator(const MasterEquation& me, double t, const PureState& psi);

/// K^W = K + (i/2) sum_a g_a (2 L_a conj(l_a) - |l_a|^2), l_a = <psi|L_a|psi>.
Matrix w_effective_hamiltonian(const GeneratorSnapshot& g, const PureState& psi);

Branches wroqj_branches(const GeneratorSnapshot& g, const PureState& psi, double dt);
StepOutcome wroqj_step(const GeneratorSnapshot& g, const PureState& psi, double dt, double u);
StepOutcome wroqj_step(const MasterEquation& me, const PureState& psi, double t, double dt, double u);

/// J_t[|psi><psi|] + (|phi><psi| + |psi><phi|)/2.
Matrix rate_operator_matrix(const GeneratorSnapshot& g, const PureState& psi, const GaugeTransform& gauge);
RateOperatorSpectrum rate_operator(const GeneratorSnapshot& g, const PureState& psi, const GaugeTransform& gauge);
RateOperatorSpectrum rate_operator(const MasterEquation& me, double t, const PureState& psi,
                                   const GaugeTransform& gauge);

/// Eigenvectors parallel to psi are not jumps: their weight merges into the
/// deterministic branch (a state-dependent shift of phi along psi).
Branches roqj_branches(const GeneratorSnapshot& g, const PureState& psi, double dt,
                       const GaugeTransform& gauge);
StepOutcome roqj_step(const GeneratorSnapshot& g, const PureState& psi, double dt,
                      const GaugeTransform& gauge, double u);
StepOutcome roqj_step(const MasterEquation& me, const PureState& psi, double t, double dt,
                      const GaugeTransform& gauge, double u);

}  // namespace qjump
