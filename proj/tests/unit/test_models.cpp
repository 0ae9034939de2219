#include "helpers.hpp"

using namespace qjump;
using namespace qjump::test;

TEST_CASE("phase-covariant constructor") {
    const auto relax = make_model("phase_covariant", {{"gamma_plus", 1.0}, {"gamma_minus", 1.0}}).me;
    // Start at |1>: <sz>(0) = 1 and <sz>(t) = exp(-2t).
    const TimeGrid grid(0.0, 3.0, 0.01);
    const auto sol = propagate(relax, ketbra(2, 1, 1), grid, 10);
    for (int k = 0; k < grid.points(); k += 30) {
        const double sz = (pauli::sz() * sol.states[k]).trace().real();
        CHECK(std::abs(sz - std::exp(-2.0 * grid.time(k))) < 1e-9);
    }
    CHECK(max_abs(sol.states.back() - 0.5 * pauli::identity()) < 0.01);

    const auto frozen = make_model("phase_covariant", {{"gamma_plus", 0.0}, {"gamma_minus", 0.0}, {"omega0", 1.0}}).me;
    const auto rot = propagate(frozen, plus_state().projector(), grid);
    for (const auto& rho : rot.states) {
        CHECK((rho * rho).trace().real() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(rho(1, 1).real() == doctest::Approx(0.5).epsilon(1e-9));
    }

    const double w0 = 0.3;
    PhaseCovariantRates r{[](double t) { return 0.2 + t; }, [](double) { return 0.7; },
                          [](double t) { return -0.1 * t; }, w0};
    const auto me = phase_covariant(r);
    MasterEquation hand(2, [w0](double) { return Matrix(w0 * pauli::sz()); },
                        {{[](double) { return pauli::sp(); }, r.gamma_plus, "p"},
                         {[](double) { return pauli::sm(); }, r.gamma_minus, "m"},
                         {[](double) { return pauli::sz(); }, r.gamma_z, "z"}});
    const auto a = me.at(1.3), b = hand.at(1.3);
    CHECK(max_abs(a.hamiltonian - b.hamiltonian) == 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(max_abs(a.ops[i] - b.ops[i]) == 0.0);
        CHECK(a.rates[i] == b.rates[i]);
    }
}

TEST_CASE("eternally non-Markovian rates") {
    const auto r = eternally_nm_rates();
    CHECK(r.gamma_z(0.0) == 0.0);
    CHECK(r.gamma_z(50.0) == doctest::Approx(-0.5));
    for (double t : {0.5, 1.0, 2.0, 5.0}) {
        CHECK(phase_covariant_p_divisible_at(r.gamma_plus(t), r.gamma_minus(t), r.gamma_z(t)));
        CHECK_FALSE(is_cp_divisible_at(eternally_nm(), t));
    }
}

TEST_CASE("non-P-divisible rates") {
    const auto one = non_p_divisible_rates(1.0);
    const auto quarter = non_p_divisible_rates(0.25);
    bool negative = false;
    for (int k = 0; k <= 5000; ++k) {
        const double t = 1e-3 * k;
        CHECK(one.gamma_plus(t) >= 0.0);
        CHECK(one.gamma_plus(t) == doctest::Approx(0.5 * std::exp(-t / 10)));
        CHECK(quarter.gamma_z(t) == 0.5);
        negative = negative || quarter.gamma_plus(t) < 0.0;
    }
    CHECK(negative);
    CHECK_ERROR_KIND(non_p_divisible(1.5), ErrorKind::ParseError);
}

TEST_CASE("spontaneous emission") {
    const double g = 0.7;
    const auto sol = propagate(spontaneous_emission(0.0, 0.0, g), ketbra(2, 1, 1), TimeGrid(0.0, 4.0, 0.01));
    CHECK(std::abs(sol.states.back()(1, 1).real() - std::exp(-g * 4.0)) < 1e-6);

    const auto rabi = propagate(spontaneous_emission(0.4, 1.0, 0.0), ketbra(2, 1, 1), TimeGrid(0.0, 4.0, 0.01));
    for (const auto& rho : rabi.states) CHECK((rho * rho).trace().real() == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(rabi.states[100](1, 1).real() < 0.9);

    // Every jump lands in the ground state.
    const auto me = spontaneous_emission(0.0, 1.0, 1.0);
    int jumps = 0;
    for (int m = 0; m < 50; ++m) {
        Rng rng(2, m);
        PureState psi = PureState::basis(2, 1);
        for (int k = 0; k < 500; ++k) {
            const auto out = mcwf_step(me, psi, 0.01 * k, 0.01, rng.uniform());
            psi = out.state;
            if (out.event.kind == EventKind::Jump) {
                ++jumps;
                CHECK(std::norm(psi[0]) == doctest::Approx(1.0));
            }
        }
    }
    CHECK(jumps > 0);
    CHECK_ERROR_KIND(spontaneous_emission(0.0, 0.0, -1.0), ErrorKind::NegativeRate);
}

TEST_CASE("delayed negative model") {
    const auto me = delayed_negative_phase_covariant();
    const auto r = delayed_negative_rates();
    CHECK(is_cp_divisible_at(me, 0.5));
    CHECK(is_cp_divisible_at(me, M_PI / 4 - 1e-6));
    CHECK_FALSE(is_cp_divisible_at(me, 1.0));
    for (int k = 0; k < 100; ++k) {
        const double t = 0.05 * k;
        CHECK(phase_covariant_p_divisible_at(r.gamma_plus(t), r.gamma_minus(t), r.gamma_z(t)));
    }
}

TEST_CASE("all models are trace preserving") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> ut(0.0, 5.0);
    for (const char* name : {"eternally_nm", "non_p_divisible", "spontaneous_emission", "phase_covariant",
                             "delayed_negative"}) {
        const auto m = make_model(name);
        CHECK(m.name == name);
        for (int rep = 0; rep < 20; ++rep) {
            CHECK(std::abs(lindblad_apply(m.me, ut(gen), random_density(2, gen)).trace()) < 1e-10);
        }
    }
}

TEST_CASE("benchmark divisibility classification") {
    const auto enm = eternally_nm();
    const auto nonp = non_p_divisible(0.25);
    const auto nr = non_p_divisible_rates(0.25);
    for (int k = 0; k <= 500; k += 5) {
        const double t = 0.01 * k;
        CHECK(is_cp_divisible_at(enm, t) == (k == 0));
        CHECK(is_p_divisible_at(enm, t, 50));
        const bool closed = phase_covariant_p_divisible_at(nr.gamma_plus(t), nr.gamma_minus(t), nr.gamma_z(t));
        if (!closed && std::min(nr.gamma_plus(t), nr.gamma_minus(t)) < -1e-3) {
            CHECK_FALSE(is_p_divisible_at(nonp, t, 200));
        }
        if (closed) CHECK(is_p_divisible_at(nonp, t, 50));
    }
}

TEST_CASE("model lookup") {
    CHECK_ERROR_KIND(make_model("lorentzian"), ErrorKind::UnknownModel);
    CHECK_ERROR_KIND(make_model("eternally_nm", {{"kappa", 0.5}}), ErrorKind::ParseError);
    const auto m = make_model("non_p_divisible", {{"kappa", 1.0}});
    CHECK(m.me.at(2.0).rates[0] == doctest::Approx(0.5 * std::exp(-0.2)));
    CHECK(make_model("eternally_nm").gauge.kind == GaugeTransform::Kind::TimeDependent);
    CHECK(make_model("spontaneous_emission").gauge.kind == GaugeTransform::Kind::None);
}
