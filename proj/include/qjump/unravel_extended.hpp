#pragma once

// Unravelings on an enlarged state: doubled and tripled Hilbert spaces,
// influence martingale, pseudo-Lindblad sign bit, cloning and the
// orthogonal positive decomposition of a hermitian operator.

#include <optional>
#include <vector>

#include "qjump/unravel_local.hpp"

namespace qjump {

// ---- Doubled space -----------------------------------------------------

struct DoubledState {
    Vector phi;
    Vector psi;

    static DoubledState from_pure(const PureState& s) { return {s.vec(), s.vec()}; }
    double norm2() const { return phi.squaredNorm() + psi.squaredNorm(); }
    /// |phi><psi|, the contribution of this member to the reconstructed state.
    Matrix coherence() const { return phi * psi.adjoint(); }
};

struct DoubledSnapshot {
    Matrix a;
    Matrix b;
    std::vector<Matrix> c;
    std::vector<Matrix> d;
};

/// d rho/dt = A rho + rho B^dag + sum_i C_i rho D_i^dag.
struct DoubledModel {
    int dim = 0;
    TimeMatrix a;
    TimeMatrix b;
    std::vector<TimeMatrix> c;
    std::vector<TimeMatrix> d;

    DoubledSnapshot at(double t) const;
};

DoubledModel gksl_to_doubled(const MasterEquation& me);

struct DoubledBranch {
    double probability = 0.0;
    DoubledState state;
    Event event;
};

struct DoubledOutcome {
    DoubledState state;
    Event event;
};

/// Jump branches first, drift last.
std::vector<DoubledBranch> doubled_branches(const DoubledSnapshot& s, const DoubledState& theta, double dt,
                                            double t = 0.0);
DoubledOutcome doubled_step(const DoubledSnapshot& s, const DoubledState& theta, double dt, double u,
                            double t = 0.0);
DoubledOutcome doubled_step(const DoubledModel& model, const DoubledState& theta, double t, double dt, double u);

// ---- Tripled space -----------------------------------------------------

/// One term C rho D^dag + D rho C^dag - {C^dag D + D^dag C, rho}/2 of a
/// master equation written in paired form.
struct ChannelPair {
    TimeMatrix c;
    TimeMatrix d;
};

/// Writes each GKSL channel g L rho L^dag as a pair: C = D = sqrt(g/2) L for
/// g >= 0, and C = -D = sqrt(|g|/2) L for g < 0.
std::vector<ChannelPair> gksl_to_pairs(const MasterEquation& me);

/// Per-pair choice of the auxiliary decay rate a(t). Empty means the
/// smallest admissible value ||C - D||_inf^2.
using TripledRateChoice = std::vector<TimeScalar>;

struct TripledEmbedding {
    int base_dim = 0;
    TimeMatrix hamiltonian3;
    /// J_1..J_4 for every pair, in order (pair 0: J_1..J_4, pair 1: ...).
    std::vector<TimeMatrix> jumps3;
    std::vector<TimeScalar> a;

    /// The embedded master equation (all rates one) on C^d (x) C^3.
    MasterEquation master_equation() const;
};

/// Auxiliary basis index for |1>, |2>, |3> on the factor C^3.
inline constexpr int kAux1 = 0;
inline constexpr int kAux2 = 1;
inline constexpr int kAux3 = 2;

/// Omega with Omega^dag Omega = a 1 - (C - D)^dag (C - D). Throws NotPSD when a is too small.
Matrix tripled_omega(const Matrix& c, const Matrix& d, double a);

TripledEmbedding tripled_embed(int dim, TimeMatrix hamiltonian, std::vector<ChannelPair> pairs,
                               TripledRateChoice a_choice = {});
TripledEmbedding tripled_embed(const MasterEquation& me, TripledRateChoice a_choice = {});

/// rho0 (x) |chi><chi|, chi = (|1> + |2>)/sqrt 2.
Matrix tripled_initial(const DensityMatrix& rho0);
PureState tripled_initial(const PureState& psi0);

/// <1|W|2> / tr <1|W|2>. Throws DegenerateBlock when the trace vanishes.
DensityMatrix tripled_extract(const Matrix& w, int base_dim, double tol = kEps);

/// Unnormalized <1|W|2>.
Matrix tripled_block12(const Matrix& w, int base_dim);

// ---- Weighted trajectories ---------------------------------------------

struct WeightedTrajectory {
    PureState state;
    double weight = 1.0;  ///< multiplies |psi><psi| in the reconstruction
    int sign = 1;         ///< PLQT sign bit; sign of weight for IM

    static WeightedTrajectory start(const PureState& s) { return {s, 1.0, 1}; }
};

/// Strictly positive jump rates r_a(t) used by the influence martingale.
struct RatePolicy {
    double r_min = 0.05;
    /// Optional override; receives (t, channel index, gamma_a(t)).
    std::function<double(double, int, double)> custom;

    double rate(double t, int channel, double gamma) const;
};

struct WeightedBranch {
    double probability = 0.0;
    Vector state;
    double weight_factor = 1.0;
    int sign_factor = 1;
    Event event;
};

std::vector<WeightedBranch> im_branches(const GeneratorSnapshot& g, const PureState& psi, double dt,
                                        const RatePolicy& policy);
std::pair<WeightedTrajectory, Event> im_step(const WeightedTrajectory& wt, const GeneratorSnapshot& g, double dt,
                                             const RatePolicy& policy, double u);
std::pair<WeightedTrajectory, Event> im_step(const WeightedTrajectory& wt, const MasterEquation& me, double t,
                                             double dt, const RatePolicy& policy, double u);

/// Sign-bit unraveling. Jumps fire with |g| ||L psi||^2 dt and flip the sign
/// on negative channels. The no-jump branch also rescales the weight by
/// (1 - sum g ||L psi||^2 dt) / (1 - sum |g| ||L psi||^2 dt), i.e.
/// 1 + 2 sum_{g<0} |g| ||L psi||^2 dt to first order, so that
/// E[weight |psi><psi|] follows the master equation with normalized states.
std::vector<WeightedBranch> plqt_branches(const GeneratorSnapshot& g, const PureState& psi, double dt);
std::pair<WeightedTrajectory, Event> plqt_step(const WeightedTrajectory& wt, const GeneratorSnapshot& g, double dt,
                                               double u);
std::pair<WeightedTrajectory, Event> plqt_step(const WeightedTrajectory& wt, const MasterEquation& me, double t,
                                               double dt, double u);

// ---- Cloning -----------------------------------------------------------

struct CloningProbabilities {
    double clone = 0.0;
    double destroy = 0.0;
    double jumps = 0.0;
    double deterministic = 0.0;
};

/// Outcome of one cloning step: Jump or Deterministic carry `state`;
/// Clone yields two copies of the current state; Destroy removes the member.
struct CloningOutcome {
    EventKind kind = EventKind::Deterministic;
    int channel = -1;
    PureState state;
};

CloningProbabilities cloning_probabilities(const GeneratorSnapshot& g, const PureState& psi, double dt);
Branches cloning_branches(const GeneratorSnapshot& g, const PureState& psi, double dt);
CloningOutcome cloning_step(const PureState& psi, const GeneratorSnapshot& g, double dt, double u);
CloningOutcome cloning_step(const PureState& psi, const MasterEquation& me, double t, double dt, double u);

struct Population {
    std::vector<PureState> members;
    std::size_t initial_count = 0;
    double scale = 1.0;  ///< accumulated resampling ratio

    static Population uniform(const PureState& psi, std::size_t n);
    /// N(t)/N(0) including resampling history.
    double trace_estimate() const;
    /// Sum_k |psi_k><psi_k| * scale / N(0).
    Matrix density() const;
};

/// Advances every member one step, then resamples to N(0) members if the
/// population leaves [N(0)/2, 2 N(0)].
void cloning_population_step(Population& pop, const GeneratorSnapshot& g, double dt, Rng& rng,
                             std::vector<std::size_t>* event_counts = nullptr);

// ---- Orthogonal positive decomposition ---------------------------------

struct OpdDecomposition {
    double mu_plus = 0.0;
    std::optional<DensityMatrix> sigma_plus;
    double mu_minus = 0.0;
    std::optional<DensityMatrix> sigma_minus;
};

OpdDecomposition opd_decompose(const Matrix& q);

}  // namespace qjump
