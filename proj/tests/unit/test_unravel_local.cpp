#include <algorithm>

#include "helpers.hpp"

using namespace qjump;
using namespace qjump::test;

namespace {

Matrix branch_expectation(const Branches& br) {
    const int d = static_cast<int>(br.front().state.size());
    Matrix rho = Matrix::Zero(d, d);
    for (const auto& b : br) rho += b.probability * b.weight_factor * b.state * b.state.adjoint();
    return rho;
}

double one_step_residual(const GeneratorSnapshot& g, const PureState& psi, double dt, const Branches& br) {
    const Matrix p = psi.projector();
    return max_abs(branch_expectation(br) - (p + dt * lindblad_apply(g, p)));
}

MasterEquation constant_channel(const Matrix& l, double rate) {
    return MasterEquation(2, [](double) { return Matrix::Zero(2, 2).eval(); },
                          {{[l](double) { return l; }, [rate](double) { return rate; }, "c"}});
}

// phi making psi an eigenvector of R with eigenvalue `lambda` and R = W on psi's complement.
GaugeTransform w_like_gauge(const MasterEquation& me, double lambda) {
    return GaugeTransform::state_dependent([&me, lambda](double t, const PureState& psi) -> Vector {
        const Vector v = jump_superop_apply(me, t, psi.projector()) * psi.vec();
        const double a = psi.vec().dot(v).real();
        return -2.0 * v + (a + lambda) * psi.vec();
    });
}

const double kDt = 0.01;

// States reachable by R-ROQJ from |+> on phase-covariant models: the equator and the poles.
PureState reachable_state(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> phase(0.0, 2 * M_PI);
    std::uniform_int_distribution<int> pick(0, 3);
    const int which = pick(gen);
    if (which == 0) return PureState::basis(2, 0);
    if (which == 1) return PureState::basis(2, 1);
    return PureState::from_amplitudes(ket({1.0, std::polar(1.0, phase(gen))}));
}

}  // namespace

TEST_CASE("MCWF examples") {
    const auto me = spontaneous_emission(0.0, 0.0, 1.0);
    const auto br = mcwf_branches(me.at(0.0), PureState::basis(2, 1), kDt);
    REQUIRE(br.size() == 2);
    CHECK(br[0].probability == doctest::Approx(0.01));
    CHECK(br[0].event.kind == EventKind::Jump);
    CHECK(overlap2(br[0].state, ket({1, 0})) == doctest::Approx(1.0));
    auto out = mcwf_step(me, PureState::basis(2, 1), 0.0, kDt, 0.005);
    CHECK(out.event.kind == EventKind::Jump);
    out = mcwf_step(me, PureState::basis(2, 1), 0.0, kDt, 0.5);
    CHECK(out.event.kind == EventKind::Deterministic);
    for (double u : {0.0, 0.3, 0.999}) {
        CHECK(mcwf_step(me, PureState::basis(2, 0), 0.0, kDt, u).event.kind == EventKind::Deterministic);
    }
    CHECK_ERROR_KIND(mcwf_step(eternally_nm(), plus_state(), 1.0, kDt, 0.5), ErrorKind::NegativeRate);
    CHECK_ERROR_KIND(mcwf_step(constant_channel(pauli::sm(), 200.0), PureState::basis(2, 1), 0.0, kDt, 0.5),
                     ErrorKind::StepTooLarge);
}

TEST_CASE("one-step unbiasedness") {
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> ut(0.0, 5.0);
    const auto se = spontaneous_emission(0.4, 0.7, 1.0);
    const auto cp = non_p_divisible(1.0, 0.3);
    const auto enm = eternally_nm(0.2);
    const auto enm_gauge = dephasing_gauge(eternally_nm_rates().gamma_z);
    const double tol = 10 * kDt * kDt;
    for (int rep = 0; rep < 50; ++rep) {
        const double t = ut(gen);
        const PureState psi = PureState::from_amplitudes(random_ket(2, gen));
        for (const auto* me : {&se, &cp}) {
            const auto g = me->at(t);
            CHECK(one_step_residual(g, psi, kDt, mcwf_branches(g, psi, kDt)) <= tol);
            CHECK(one_step_residual(g, psi, kDt, wroqj_branches(g, psi, kDt)) <= tol);
            CHECK(one_step_residual(g, psi, kDt, roqj_branches(g, psi, kDt, GaugeTransform::none())) <= tol);
        }
        const auto g = enm.at(t);
        const PureState reachable = reachable_state(gen);
        CHECK(one_step_residual(g, psi, kDt, wroqj_branches(g, psi, kDt)) <= tol);
        CHECK(one_step_residual(g, reachable, kDt, roqj_branches(g, reachable, kDt, enm_gauge)) <= tol);
        CHECK(one_step_residual(g, psi, kDt, roqj_branches(g, psi, kDt, w_like_gauge(enm, 1.0))) <= tol);
    }
}

TEST_CASE("gauge invariance of the one-step expectation") {
    std::mt19937_64 gen(77);
    std::uniform_real_distribution<double> ut(0.0, 5.0);
    const auto me = non_p_divisible(1.0);
    const auto shift = GaugeTransform::time_dependent([](double) { return Matrix(0.3 * pauli::identity()); });
    for (int rep = 0; rep < 50; ++rep) {
        const double t = ut(gen);
        const PureState psi = PureState::from_amplitudes(random_ket(2, gen));
        const auto g = me.at(t);
        const Matrix ref = branch_expectation(roqj_branches(g, psi, kDt, GaugeTransform::none()));
        CHECK(max_abs(branch_expectation(roqj_branches(g, psi, kDt, shift)) - ref) <= 10 * kDt * kDt);
        CHECK(max_abs(branch_expectation(roqj_branches(g, psi, kDt, w_like_gauge(me, 0.5))) - ref) <=
              10 * kDt * kDt);
    }
}

TEST_CASE("waiting-time distribution") {
    const double g = 1.3;
    const auto me = spontaneous_emission(0.0, 0.0, g);
    auto near_one = wtd_next_jump(me, PureState::basis(2, 1), 0.5, 1.0 - 1e-12, 10.0);
    CHECK(near_one.jumped);
    CHECK(near_one.time == doctest::Approx(0.5).epsilon(1e-9));
    for (double x : {0.9, 0.5, 0.1, 0.01}) {
        const auto r = wtd_next_jump(me, PureState::basis(2, 1), 0.5, x, 100.0);
        CHECK(r.jumped);
        CHECK(std::abs(r.time - (0.5 - std::log(x) / g)) < 1e-6);
        CHECK(r.psi_tilde.squaredNorm() == doctest::Approx(x).epsilon(1e-7));
    }
    MasterEquation h_only(2, [](double) { return pauli::sx().eval(); });
    const auto none = wtd_next_jump(h_only, plus_state(), 0.0, 0.5, 3.0);
    CHECK_FALSE(none.jumped);
    CHECK(none.time == doctest::Approx(3.0));
    CHECK(none.psi_tilde.squaredNorm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_ERROR_KIND(wtd_next_jump(eternally_nm(), plus_state(), 0.0, 0.5, 3.0), ErrorKind::NegativeRate);
}

TEST_CASE("WTD channel selection") {
    const auto se = spontaneous_emission(0.0, 0.0, 1.0);
    for (double u : {0.0, 0.5, 0.99}) CHECK(wtd_select_channel(se, plus_state(), 0.0, u) == 0);
    MasterEquation two(2, [](double) { return Matrix::Zero(2, 2).eval(); },
                       {{[](double) { return pauli::sz(); }, [](double) { return 1.0; }, "a"},
                        {[](double) { return pauli::sx(); }, [](double) { return 1.0; }, "b"}});
    CHECK(wtd_select_channel(two, plus_state(), 0.0, 0.49) == 0);
    CHECK(wtd_select_channel(two, plus_state(), 0.0, 0.51) == 1);
    // Delayed model at t = 0.1: g+ = g- = 1, gz = cos(0.2)/2 > 0. From |1>: weights (0, 1, gz).
    const auto dn = delayed_negative_phase_covariant();
    const double gz = 0.5 * std::cos(0.2);
    const double p1 = 1.0 / (1.0 + gz);
    CHECK(wtd_select_channel(dn, PureState::basis(2, 1), 0.1, p1 - 1e-9) == 1);
    CHECK(wtd_select_channel(dn, PureState::basis(2, 1), 0.1, p1 + 1e-9) == 2);
    CHECK(wtd_select_channel(dn, PureState::basis(2, 1), 0.1, 0.0) != 0);
    CHECK_ERROR_KIND(wtd_select_channel(se, PureState::basis(2, 0), 0.0, 0.5), ErrorKind::NoJumpPossible);
}

TEST_CASE("first-jump times of MCWF and WTD are exponential") {
    const double g = 1.0;
    const auto me = spontaneous_emission(0.0, 0.0, g);
    const auto snap = me.at(0.0);
    const int n = 10000;
    std::vector<double> mcwf_times, wtd_times;
    for (int m = 0; m < n; ++m) {
        Rng rng(5, m);
        PureState psi = PureState::basis(2, 1);
        double t = 0.0;
        for (int k = 0;; ++k) {
            const auto out = mcwf_step(snap, psi, kDt, rng.uniform());
            if (out.event.kind == EventKind::Jump) {
                t = k * kDt + out.fraction * kDt;
                break;
            }
            psi = out.state;
        }
        mcwf_times.push_back(t);
        Rng rng2(6, m);
        wtd_times.push_back(wtd_next_jump(me, PureState::basis(2, 1), 0.0, rng2.uniform_open0(), 100.0).time);
    }
    auto ks = [g](std::vector<double> xs) {
        std::sort(xs.begin(), xs.end());
        double d = 0.0;
        const double n_ = static_cast<double>(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double f = 1.0 - std::exp(-g * xs[i]);
            d = std::max({d, std::abs(f - i / n_), std::abs(f - (i + 1) / n_)});
        }
        return d;
    };
    CHECK(ks(mcwf_times) <= 0.02);
    CHECK(ks(wtd_times) <= 0.02);
}

TEST_CASE("reverse jump probability") {
    CHECK(reverse_jump_probability(-0.01, 5, 5) == doctest::Approx(0.01));
    CHECK(reverse_jump_probability(-0.005, 600, 300) == doctest::Approx(0.0025));
    CHECK(reverse_jump_probability(0.0, 10, 20) == 0.0);
    CHECK(reverse_jump_probability(-0.005, 100, 900) == doctest::Approx(0.045));
    CHECK_ERROR_KIND(reverse_jump_probability(-0.01, 0, 5), ErrorKind::DivisionByZero);
}

TEST_CASE("NMQJ with positive rates reduces to MCWF") {
    const auto me = spontaneous_emission(0.0, 0.3, 1.0);
    const auto g = me.at(0.0);
    const std::size_t n = 20000;
    Rng rng(1, 0);
    const auto ens = nmqj_step(g, NmqjEnsemble::uniform(PureState::basis(2, 1), n), kDt, rng);
    CHECK(ens.total() == n);
    std::size_t sum = 0;
    for (const auto& b : ens.buckets) sum += b.count;
    CHECK(sum == n);
    const auto det = mcwf_branches(g, PureState::basis(2, 1), kDt);
    // Jumped fraction ~ Binomial(n, 0.01): mean 200, sd 14.
    std::size_t jumped = 0;
    for (const auto& b : ens.buckets) {
        if (overlap2(b.state.vec(), det.back().state) > 1 - 1e-12) {
            CHECK(b.count + jumped <= n);
        } else {
            CHECK(overlap2(b.state.vec(), det.front().state) > 1 - 1e-12);
            jumped += b.count;
        }
    }
    CHECK(std::abs(static_cast<double>(jumped) - 200.0) < 70.0);
}

TEST_CASE("NMQJ reverse jumps") {
    const auto me = constant_channel(pauli::sz(), -0.5);
    const auto g = me.at(0.0);
    const double r = 1.0 / std::sqrt(2.0);
    NmqjEnsemble ens;
    ens.buckets.push_back({900, PureState::from_amplitudes(ket({r, r}))});
    ens.buckets.push_back({100, PureState::from_amplitudes(ket({r, -r}))});
    for (int m = 0; m < 1000; ++m) ens.member_bucket.push_back(m < 900 ? 0 : 1);
    const int reps = 4000;
    double back = 0.0, forward = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
        Rng rng(17, rep);
        const auto out = nmqj_step(g, ens, kDt, rng);
        std::size_t sum = 0;
        for (const auto& b : out.buckets) sum += b.count;
        REQUIRE(sum == 1000);
        for (const auto& ev : out.log) {
            CHECK(ev.kind == EventKind::ReverseJump);
            if (ev.source_bucket == 1) back += ev.members;
            if (ev.source_bucket == 0) forward += ev.members;
        }
    }
    // Per-member probabilities 0.045 (|-> back to |+>) and 0.005/9 (|+> to |->).
    CHECK(back / (reps * 100.0) == doctest::Approx(0.045).epsilon(0.02));
    CHECK(forward / (reps * 900.0) == doctest::Approx(0.005 / 9.0).epsilon(0.1));

    // Self-images need no partner bucket; nothing moves.
    Rng rng(3, 0);
    const auto same = nmqj_step(g, NmqjEnsemble::uniform(PureState::basis(2, 0), 50), kDt, rng);
    CHECK(same.log.empty());
    CHECK(same.buckets[0].count == 50);

    // A populated bucket whose jump image is absent makes NMQJ inapplicable.
    Rng rng2(3, 1);
    CHECK_ERROR_KIND(nmqj_step(eternally_nm(), NmqjEnsemble::uniform(plus_state(), 50), 1.0, kDt, rng2),
                     ErrorKind::MissingTargetState);
}

TEST_CASE("W rate operator") {
    const double gamma = 0.7;
    const auto deph = constant_channel(pauli::sz(), gamma);
    const auto spec = w_rate_operator(deph, 0.0, plus_state());
    REQUIRE(spec.size() == 1);
    CHECK(spec[0].value == doctest::Approx(gamma));
    CHECK(overlap2(spec[0].vector.vec(), ket({1, -1}).normalized()) == doctest::Approx(1.0));

    MasterEquation diag(2, [](double) { return Matrix::Zero(2, 2).eval(); },
                        {{[](double) { return pauli::sz(); }, [](double) { return 0.4; }, "z"},
                         {[](double) { return pauli::sm(); }, [](double) { return 0.9; }, "m"}});
    for (const auto& ep : w_rate_operator(diag, 0.0, PureState::basis(2, 0))) CHECK(std::abs(ep.value) < 1e-14);

    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> ut(0.0, 5.0);
    const auto enm = eternally_nm(0.4);
    for (int rep = 0; rep < 200; ++rep) {
        const PureState psi = PureState::from_amplitudes(random_ket(2, gen));
        const auto s = w_rate_operator(enm, ut(gen), psi);
        CHECK(s.back().value >= -kEps);
        for (const auto& ep : s) CHECK(std::abs(psi.vec().dot(ep.vector.vec())) < 1e-9);
    }
    // d = 4: targets stay orthogonal to psi.
    const Matrix l = random_matrix(4, gen);
    MasterEquation big(4, [](double) { return Matrix::Zero(4, 4).eval(); },
                       {{[l](double) { return l; }, [](double) { return 1.0; }, "l"}});
    const PureState psi4 = PureState::from_amplitudes(random_ket(4, gen));
    const auto s4 = w_rate_operator(big, 0.0, psi4);
    CHECK(s4.size() == 3);
    for (const auto& ep : s4) CHECK(std::abs(psi4.vec().dot(ep.vector.vec())) < 1e-9);

    CHECK_ERROR_KIND(wroqj_branches(non_p_divisible(0.25).at(M_PI / 2), PureState::basis(2, 0), kDt),
                     ErrorKind::NegativeWEigenvalue);
}

TEST_CASE("W-ROQJ steps") {
    const auto se = spontaneous_emission(0.0, 0.0, 1.0);
    const auto g = se.at(0.0);
    const PureState one = PureState::basis(2, 1);
    CHECK(max_abs(w_effective_hamiltonian(g, one) - g.k_eff) < 1e-15);
    const auto w = wroqj_branches(g, one, kDt);
    const auto m = mcwf_branches(g, one, kDt);
    CHECK((w.back().state - m.back().state).norm() < 1e-14);
    CHECK(w.front().probability == doctest::Approx(m.front().probability));

    const double gamma = 0.7;
    const auto deph = constant_channel(pauli::sz(), gamma);
    const auto br = wroqj_branches(deph.at(0.0), plus_state(), kDt);
    REQUIRE(br.size() == 2);
    CHECK(br[0].probability == doctest::Approx(gamma * kDt));
    CHECK(overlap2(br[0].state, ket({1, -1}).normalized()) == doctest::Approx(1.0));
}

TEST_CASE("rate operator and gauges") {
    std::mt19937_64 gen(12);
    const auto me = non_p_divisible(1.0, 0.2);
    const PureState psi = PureState::from_amplitudes(random_ket(2, gen));
    const auto none = rate_operator(me, 0.7, psi, GaugeTransform::none());
    const auto ref = eigh(jump_superop_apply(me, 0.7, psi.projector()));
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(none[i].value == doctest::Approx(ref[i].value));

    const auto enm = eternally_nm();
    const auto gauge = dephasing_gauge(eternally_nm_rates().gamma_z);
    std::uniform_real_distribution<double> ut(0.0, 5.0);
    for (int rep = 0; rep < 200; ++rep) {
        const PureState p = reachable_state(gen);
        const double t = ut(gen);
        for (const auto& ep : rate_operator(enm, t, p, gauge)) {
            if (overlap2(ep.vector.vec(), p.vec()) < 1 - 1e-9) CHECK(ep.value >= -kEps);
        }
        CHECK_NOTHROW(roqj_branches(enm.at(t), p, kDt, gauge));
    }
    // Off the reachable set the same gauge leaves a negative eigenvalue.
    const PureState tilted = PureState::from_amplitudes(ket({1.0, 0.5}));
    CHECK_ERROR_KIND(roqj_branches(enm.at(2.0), tilted, kDt, gauge), ErrorKind::NegativeROEigenvalue);

    // W spectrum recovered on psi's complement by a state-dependent gauge.
    const auto wg = w_like_gauge(enm, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        const PureState p = PureState::from_amplitudes(random_ket(2, gen));
        const double t = ut(gen);
        const auto r = rate_operator(enm, t, p, wg);
        const auto w = w_rate_operator(enm, t, p);
        CHECK(r[0].value == doctest::Approx(1.0));
        CHECK(overlap2(r[0].vector.vec(), p.vec()) == doctest::Approx(1.0));
        CHECK(r[1].value == doctest::Approx(w[0].value));
        CHECK(overlap2(r[1].vector.vec(), w[0].vector.vec()) == doctest::Approx(1.0));
    }

    // phi = C psi is the time-dependent gauge C.
    const Matrix c = 0.3 * pauli::sz() + 0.2 * pauli::identity();
    const auto td = GaugeTransform::time_dependent([c](double) { return c; });
    const auto sd = GaugeTransform::state_dependent([c](double, const PureState& p) -> Vector { return c * p.vec(); });
    const auto g = me.at(1.1);
    const auto a = roqj_branches(g, psi, kDt, td);
    const auto b = roqj_branches(g, psi, kDt, sd);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].probability == doctest::Approx(b[i].probability));
        CHECK((a[i].state - b[i].state).norm() < 1e-12);
    }
    for (double u : {0.001, 0.2, 0.9}) CHECK(roqj_step(g, psi, kDt, td, u).event.kind == roqj_step(g, psi, kDt, sd, u).event.kind);

}

TEST_CASE("R-ROQJ effective ensemble on the eternally non-Markovian model") {
    const auto me = eternally_nm();
    const auto gauge = dephasing_gauge(eternally_nm_rates().gamma_z);
    int jumps = 0;
    for (int m = 0; m < 300; ++m) {
        Rng rng(44, m);
        PureState psi = plus_state();
        bool jumped = false;
        for (int k = 0; k < 300; ++k) {
            const auto out = roqj_step(me, psi, k * kDt, kDt, gauge, rng.uniform());
            psi = out.state;
            if (out.event.kind == EventKind::Jump) {
                jumped = true;
                ++jumps;
                const double p0 = std::norm(psi[0]);
                CHECK((p0 > 1 - 1e-9 || p0 < 1e-9));
            } else if (!jumped) {
                // Deterministic state stays on the equator of the Bloch sphere.
                CHECK(std::norm(psi[0]) == doctest::Approx(0.5).epsilon(1e-9));
            } else {
                const double p0 = std::norm(psi[0]);
                CHECK((p0 > 1 - 1e-9 || p0 < 1e-9));
            }
        }
    }
    CHECK(jumps > 0);
}
