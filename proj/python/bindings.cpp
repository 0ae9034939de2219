#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <complex>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qjump/qjump.hpp"

namespace py = pybind11;
using namespace qjump;

namespace {

using Params = std::map<std::string, double>;

PureState initial(const std::optional<std::vector<cplx>>& amps, int dim) {
    if (!amps) return dim == 2 ? plus_state() : PureState::basis(dim, 0);
    if (static_cast<int>(amps->size()) != dim) {
        throw Error(ErrorKind::BadAmplitudes, "initial state needs " + std::to_string(dim) + " amplitudes");
    }
    Vector v(dim);
    for (int i = 0; i < dim; ++i) v[i] = (*amps)[static_cast<std::size_t>(i)];
    return PureState::from_amplitudes(v);
}

// (points, d, d) complex array.
py::array_t<cplx> stack(const std::vector<DensityMatrix>& states, int dim) {
    py::array_t<cplx> out({static_cast<py::ssize_t>(states.size()), static_cast<py::ssize_t>(dim),
                           static_cast<py::ssize_t>(dim)});
    auto view = out.mutable_unchecked<3>();
    for (std::size_t k = 0; k < states.size(); ++k) {
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < dim; ++j) view(static_cast<py::ssize_t>(k), i, j) = states[k](i, j);
        }
    }
    return out;
}

std::vector<double> times_of(const TimeGrid& grid, std::size_t n) {
    std::vector<double> t(n);
    for (std::size_t k = 0; k < n; ++k) t[k] = grid.time(static_cast<int>(k));
    return t;
}

py::dict propagate_model(const std::string& model, const Params& params, double t_max, double dt,
                         const std::optional<std::vector<cplx>>& psi0) {
    const auto m = make_model(model, params);
    const TimeGrid grid(0.0, t_max, dt);
    const auto sol = propagate(m.me, initial(psi0, m.me.dim()).projector(), grid);
    py::dict out;
    out["t"] = times_of(grid, sol.states.size());
    out["rho"] = stack(sol.states, m.me.dim());
    return out;
}

py::dict run_method(const std::string& method, const std::string& model, const Params& params, std::size_t n_traj,
                    double t_max, double dt, std::uint64_t seed, int threads,
                    const std::optional<std::vector<cplx>>& psi0) {
    const auto m = make_model(model, params);
    MethodSpec spec(parse_method(method));
    if (spec.kind == MethodKind::RROQJ || spec.kind == MethodKind::PSIROQJ) spec.gauge = m.gauge;
    const TimeGrid grid(0.0, t_max, dt);
    const PureState start = initial(psi0, m.me.dim());
    RunOptions opts;
    opts.threads = threads;
    EnsembleResult r;
    {
        py::gil_scoped_release release;
        r = run_ensemble_partial(spec, m.me, start, grid, n_traj, seed, opts);
    }
    const auto oracle = propagate(m.me, start.projector(), grid);
    std::vector<double> distance;
    for (const auto& p : error_vs_oracle(r, oracle)) distance.push_back(p.value);

    py::dict out;
    out["method"] = std::string(method_name(r.method));
    out["t"] = times_of(grid, r.completed_points());
    out["rho"] = stack(r.rho_hat, m.me.dim());
    out["std_error"] = r.std_error;
    out["distance"] = distance;
    out["diagnostics"] = r.diagnostics;
    out["event_counts"] = r.event_counts;
    out["wall_clock_ms"] = r.wall_clock_ms;
    if (r.abort) {
        py::dict a;
        a["kind"] = std::string(to_string(r.abort->kind));
        a["time"] = r.abort->time;
        a["message"] = r.abort->message;
        out["abort"] = a;
    } else {
        out["abort"] = py::none();
    }
    return out;
}

py::dict divisibility(const std::string& model, const Params& params, double t, int samples) {
    const auto m = make_model(model, params);
    const auto rep = divisibility_report(m.me, t, samples);
    py::dict out;
    out["t"] = rep.time;
    out["cp"] = rep.cp;
    out["p"] = rep.p;
    out["min_rate"] = rep.min_rate;
    out["min_w_eigenvalue"] = rep.min_w_eigenvalue;
    return out;
}

}  // namespace

PYBIND11_MODULE(_qjump, mod) {
    mod.doc() = "Quantum-jump unravelings of time-local master equations";

    static py::exception<Error> error_type(mod, "QJumpError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type.ptr())(e.what());
            exc.attr("kind") = std::string(to_string(e.kind()));
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    mod.def("methods", [] {
        std::vector<std::string> names;
        for (auto k : all_methods()) names.emplace_back(method_name(k));
        return names;
    });
    mod.def("propagate", &propagate_model, py::arg("model"), py::arg("params") = Params{}, py::arg("t_max") = 5.0,
            py::arg("dt") = 0.01, py::arg("psi0") = py::none(),
            "Deterministic RK4 solution; returns {'t', 'rho'}.");
    mod.def("run", &run_method, py::arg("method"), py::arg("model"), py::arg("params") = Params{},
            py::arg("n_traj") = 10000, py::arg("t_max") = 5.0, py::arg("dt") = 0.01, py::arg("seed") = 42,
            py::arg("threads") = 0, py::arg("psi0") = py::none(),
            "Runs one unraveling and compares it with the deterministic solution.");
    mod.def("divisibility", &divisibility, py::arg("model"), py::arg("params") = Params{}, py::arg("t") = 0.0,
            py::arg("samples") = 200);
}
