#include <cstring>

#include "helpers.hpp"

using namespace qjump;
using namespace qjump::test;

namespace {

MethodSpec spec_for(MethodKind kind, const NamedModel& model) {
    MethodSpec s(kind);
    if (kind == MethodKind::RROQJ || kind == MethodKind::PSIROQJ) s.gauge = model.gauge;
    return s;
}

bool same_bytes(const EnsembleResult& a, const EnsembleResult& b) {
    if (a.rho_hat.size() != b.rho_hat.size()) return false;
    for (std::size_t k = 0; k < a.rho_hat.size(); ++k) {
        const auto& x = a.rho_hat[k];
        const auto& y = b.rho_hat[k];
        if (x.size() != y.size() ||
            std::memcmp(x.data(), y.data(), sizeof(cplx) * static_cast<std::size_t>(x.size())) != 0) {
            return false;
        }
        if (std::memcmp(&a.std_error[k], &b.std_error[k], sizeof(double)) != 0) return false;
    }
    return a.event_counts == b.event_counts;
}

double sup_distance(const EnsembleResult& r, const OracleSolution& o) {
    double m = 0.0;
    for (const auto& p : error_vs_oracle(r, o)) m = std::max(m, p.value);
    return m;
}

}  // namespace

TEST_CASE("method names") {
    for (auto m : all_methods()) CHECK(parse_method(method_name(m)) == m);
    CHECK(parse_method("Psi_ROQJ") == MethodKind::PSIROQJ);
    CHECK(parse_method("w-roqj") == MethodKind::WROQJ);
    CHECK(all_methods().size() == 11);
    CHECK_ERROR_KIND(parse_method("mcfw"), ErrorKind::UnknownMethod);
}

TEST_CASE("single trajectory without dynamics") {
    MasterEquation frozen(2, [](double) { return Matrix::Zero(2, 2).eval(); });
    std::mt19937_64 gen(1);
    const PureState psi = PureState::from_amplitudes(random_ket(2, gen));
    const TimeGrid grid(0.0, 0.5, 0.01);
    for (auto kind : all_methods()) {
        CAPTURE(method_name(kind));
        const auto r = run_ensemble(MethodSpec(kind), frozen, psi, grid, 1, 3);
        REQUIRE(r.completed_points() == static_cast<std::size_t>(grid.points()));
        for (const auto& rho : r.rho_hat) CHECK(max_abs(rho - psi.projector()) < 1e-9);
    }
}

TEST_CASE("results do not depend on the thread count") {
    const auto model = make_model("non_p_divisible");
    const auto cp = make_model("spontaneous_emission", {{"omega", 0.5}});
    const TimeGrid grid(0.0, 1.0, 0.01);
    for (auto kind : all_methods()) {
        CAPTURE(method_name(kind));
        const bool positive_only = kind == MethodKind::MCWF || kind == MethodKind::WTD || kind == MethodKind::CLONING;
        const auto& m = positive_only ? cp : model;
        const auto a = run_ensemble(spec_for(kind, m), m.me, plus_state(), grid, 300, 7, {1, 20});
        const auto b = run_ensemble(spec_for(kind, m), m.me, plus_state(), grid, 300, 7, {4, 20});
        CHECK(same_bytes(a, b));
        const auto c = run_ensemble(spec_for(kind, m), m.me, plus_state(), grid, 300, 8, {1, 20});
        CHECK_FALSE(same_bytes(a, c));
    }
}

TEST_CASE("oracle distance") {
    const auto me = spontaneous_emission(0.0, 0.5, 1.0);
    const TimeGrid grid(0.0, 5.0, 0.01);
    const auto oracle = propagate(me, plus_state().projector(), grid);
    EnsembleResult fake;
    fake.grid = grid;
    fake.rho_hat = oracle.states;
    for (const auto& p : error_vs_oracle(fake, oracle)) CHECK(p.value == 0.0);
    const auto other = propagate(me, plus_state().projector(), TimeGrid(0.0, 5.0, 0.02));
    CHECK_ERROR_KIND(error_vs_oracle(fake, other), ErrorKind::GridMismatch);

    const auto r = run_ensemble(MethodSpec(MethodKind::MCWF), me, plus_state(), grid, 10000, 42);
    CHECK(sup_distance(r, oracle) <= 0.03);
    for (const auto& rho : r.rho_hat) CHECK(std::abs(rho.trace() - 1.0) < 1e-9);
    CHECK(r.n_traj == 10000);
    CHECK(r.wall_clock_ms > 0.0);
}

TEST_CASE("statistical error scales as N^-1/2") {
    const auto me = spontaneous_emission(0.0, 0.5, 1.0);
    const TimeGrid grid(0.0, 2.0, 0.01);
    const auto oracle = propagate(me, PureState::basis(2, 1).projector(), grid);
    auto mean_err = [&](std::size_t n, std::uint64_t seed) {
        const auto r = run_ensemble(MethodSpec(MethodKind::MCWF), me, PureState::basis(2, 1), grid, n, seed);
        double s = 0.0;
        const auto e = error_vs_oracle(r, oracle);
        for (std::size_t k = 1; k < e.size(); ++k) s += e[k].value;
        return s / static_cast<double>(e.size() - 1);
    };
    double small = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) small += mean_err(100, 100 + s) / 5;
    const double ratio = small / mean_err(10000, 1);
    CHECK(ratio >= 10.0 / 3.0);
    CHECK(ratio <= 30.0);
}

TEST_CASE("observable series") {
    const double g = 1.0;
    const auto me = spontaneous_emission(0.0, 0.0, g);
    const TimeGrid grid(0.0, 3.0, 0.01);
    const auto r = run_ensemble(MethodSpec(MethodKind::MCWF), me, PureState::basis(2, 1), grid, 10000, 5);
    for (const auto& p : observable_series(r, pauli::identity())) {
        CHECK(p.mean == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(p.std_error < 1e-9);
    }
    const auto excited = observable_series(r, ketbra(2, 1, 1));
    for (int k : {50, 100, 200, 300}) {
        CHECK(std::abs(excited[k].mean - std::exp(-g * grid.time(k))) <= 3 * excited[k].std_error);
    }
    CHECK_ERROR_KIND(observable_series(r, pauli::sp()), ErrorKind::NotHermitian);
    CHECK_ERROR_KIND(observable_series(r, pauli::identity(3)), ErrorKind::DimMismatch);

    const auto enm = make_model("eternally_nm");
    const TimeGrid g2(0.0, 2.0, 0.01);
    const auto oracle = propagate(enm.me, plus_state().projector(), g2);
    const auto psi = run_ensemble(spec_for(MethodKind::PSIROQJ, enm), enm.me, plus_state(), g2, 10000, 9);
    const auto sx = observable_series(psi, pauli::sx());
    for (int k : {50, 100, 150, 200}) {
        const double exact = (pauli::sx() * oracle.states[k]).trace().real();
        CHECK(std::abs(sx[k].mean - exact) <= 3 * sx[k].std_error);
    }
}

TEST_CASE("method errors carry the failure time") {
    const auto enm = make_model("eternally_nm");
    const TimeGrid grid(0.0, 1.0, 0.01);
    CHECK_ERROR_KIND(run_ensemble(MethodSpec(MethodKind::NMQJ), enm.me, plus_state(), grid, 100, 1),
                     ErrorKind::MissingTargetState);
    const auto partial = run_ensemble_partial(MethodSpec(MethodKind::NMQJ), enm.me, plus_state(), grid, 100, 1);
    REQUIRE(partial.abort.has_value());
    CHECK(partial.abort->kind == ErrorKind::MissingTargetState);
    CHECK(partial.abort->time == doctest::Approx(0.01));
    CHECK(partial.completed_points() >= 1);
    CHECK(partial.completed_points() < static_cast<std::size_t>(grid.points()));

    const auto mc = run_ensemble_partial(MethodSpec(MethodKind::MCWF), enm.me, plus_state(), grid, 100, 1);
    REQUIRE(mc.abort.has_value());
    CHECK(mc.abort->kind == ErrorKind::NegativeRate);
}

TEST_CASE("weighted methods keep unit trace on average") {
    const auto m = make_model("non_p_divisible");
    const TimeGrid grid(0.0, 3.0, 0.01);
    for (auto kind : {MethodKind::IM, MethodKind::PLQT, MethodKind::DOUBLED}) {
        CAPTURE(method_name(kind));
        const auto r = run_ensemble(MethodSpec(kind), m.me, plus_state(), grid, 2000, 3);
        const auto tr = observable_series(r, pauli::identity());
        // 4 sigma: 18 correlated checks share one family-wise budget.
        for (std::size_t k = 0; k < tr.size(); k += 50) {
            CHECK(std::abs(tr[k].mean - 1.0) <= 4 * tr[k].std_error + 1e-9);
        }
        for (const auto& rho : r.rho_hat) CHECK(hermiticity_defect(rho) < 1e-12);
    }
}

TEST_CASE("NMQJ reverse jumps cancel earlier direct jumps") {
    const auto me = delayed_negative_phase_covariant();
    const double dt = 0.01;
    Rng rng(4, 0);
    NmqjEnsemble ens = NmqjEnsemble::uniform(plus_state(), 2000);
    for (int k = 0; k < 140; ++k) ens = nmqj_step(me, ens, k * dt, dt, rng);
    std::size_t reverse = 0, total = 0;
    for (const auto& b : ens.buckets) total += b.count;
    CHECK(total == 2000);
    for (const auto& ev : ens.log) {
        if (ev.kind != EventKind::ReverseJump) continue;
        ++reverse;
        REQUIRE(ev.cancels >= 0);
        REQUIRE(ev.cancels < ev.id);
        const auto& direct = ens.log[static_cast<std::size_t>(ev.cancels)];
        CHECK(direct.kind == EventKind::Jump);
        CHECK(direct.channel == ev.channel);
        CHECK(direct.time < ev.time);
        CHECK(direct.target_bucket == ev.source_bucket);
        CHECK(direct.source_bucket == ev.target_bucket);
        CHECK(me.at(ev.time).rates[static_cast<std::size_t>(ev.channel)] < 0.0);
    }
    CHECK(reverse > 0);
}
