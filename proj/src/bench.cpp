#include "qjump/bench.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace qjump {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

[[noreturn]] void parse_fail(int line, const std::string& msg) {
    throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": " + msg);
}

double parse_real(std::string_view text, int line, const std::string& key) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty() || !std::isfinite(v)) {
        parse_fail(line, "'" + key + "' expects a real number, got '" + t + "'");
    }
    return v;
}

long long parse_integer(std::string_view text, int line, const std::string& key) {
    const std::string t = trim(text);
    // Accept 1e4-style integers as well.
    const double v = parse_real(t, line, key);
    if (v != std::floor(v) || v < 0.0 || v > 9.0e18) {
        parse_fail(line, "'" + key + "' expects a non-negative integer, got '" + t + "'");
    }
    return static_cast<long long>(v);
}

std::string valid_method_list() {
    std::string s;
    for (auto m : all_methods()) {
        if (!s.empty()) s += ", ";
        s += method_name(m);
    }
    return s;
}

MethodKind parse_method_listed(const std::string& name) {
    try {
        return parse_method(name);
    } catch (const Error&) {
        throw Error(ErrorKind::UnknownMethod,
                    "unknown method '" + name + "'; valid methods: " + valid_method_list());
    }
}

const std::set<std::string> kModelNames{"eternally_nm", "non_p_divisible", "spontaneous_emission",
                                        "phase_covariant", "delayed_negative"};

const std::map<std::string, std::set<std::string>> kMethodKeys{
    {"rroqj", {"gauge"}}, {"psiroqj", {"gauge"}}, {"im", {"r_min"}}, {"tripled", {"a"}},
};

}  // namespace

cplx parse_complex(std::string_view text) {
    std::string t;
    for (char c : text) {
        if (!std::isspace(static_cast<unsigned char>(c))) t.push_back(c);
    }
    if (t.empty()) throw Error(ErrorKind::ParseError, "empty complex literal");
    auto real_of = [&](const std::string& s) {
        if (s.empty() || s == "+") return 1.0;
        if (s == "-") return -1.0;
        double v = 0.0;
        const char* b = s.data();
        if (*b == '+') ++b;
        const auto [ptr, ec] = std::from_chars(b, s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size()) {
            throw Error(ErrorKind::ParseError, "bad complex literal '" + std::string(text) + "'");
        }
        return v;
    };
    if (t.back() != 'i' && t.back() != 'j') return {real_of(t), 0.0};
    const std::string body = t.substr(0, t.size() - 1);
    // Split at the last sign that is not part of an exponent.
    std::size_t cut = std::string::npos;
    for (std::size_t i = body.size(); i-- > 1;) {
        if ((body[i] == '+' || body[i] == '-') && body[i - 1] != 'e' && body[i - 1] != 'E') {
            cut = i;
            break;
        }
    }
    if (cut == std::string::npos) return {0.0, real_of(body)};
    return {real_of(body.substr(0, cut)), real_of(body.substr(cut))};
}

RunConfig parse_config(std::string_view text) {
    RunConfig cfg;
    std::string section;
    bool saw_model_name = false;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    std::string current_observable;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string l = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (l.empty()) continue;
        if (l.front() == '[') {
            if (l.back() != ']') parse_fail(line, "unterminated section header");
            section = trim(std::string_view(l).substr(1, l.size() - 2));
            if (section.rfind("method.", 0) == 0) {
                const auto kind = parse_method_listed(section.substr(7));
                section = "method." + std::string(method_name(kind));
                cfg.method_params[std::string(method_name(kind))];
            } else if (section.rfind("observable.", 0) == 0) {
                current_observable = section.substr(11);
                if (current_observable.empty()) parse_fail(line, "observable needs a name");
                for (const auto& o : cfg.observables) {
                    if (o.name == current_observable) parse_fail(line, "duplicate observable '" + current_observable + "'");
                }
                cfg.observables.push_back({current_observable, Matrix()});
            } else if (section != "model" && section != "run" && section != "divisibility") {
                parse_fail(line, "unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = l.find('=');
        if (eq == std::string::npos) parse_fail(line, "expected 'key = value'");
        const std::string key = trim(std::string_view(l).substr(0, eq));
        const std::string value = trim(std::string_view(l).substr(eq + 1));
        if (key.empty()) parse_fail(line, "empty key");
        if (section.empty()) parse_fail(line, "key '" + key + "' outside any section");

        if (section == "model") {
            if (key == "name") {
                if (!kModelNames.count(value)) {
                    throw Error(ErrorKind::UnknownModel, "line " + std::to_string(line) + ": unknown model '" + value + "'");
                }
                cfg.model = value;
                saw_model_name = true;
            } else {
                cfg.model_params[key] = parse_real(value, line, key);
            }
        } else if (section == "run") {
            if (key == "methods" || key == "method") {
                for (const auto& m : split(value, ',')) {
                    if (m.empty()) continue;
                    const auto kind = parse_method_listed(m);
                    if (std::find(cfg.methods.begin(), cfg.methods.end(), kind) == cfg.methods.end()) {
                        cfg.methods.push_back(kind);
                    }
                }
            } else if (key == "trajectories" || key == "n_traj") {
                cfg.n_traj = static_cast<std::size_t>(parse_integer(value, line, key));
                if (cfg.n_traj < 1) parse_fail(line, "need at least one trajectory");
            } else if (key == "dt") {
                cfg.grid.dt = parse_real(value, line, key);
                if (!(cfg.grid.dt > 0.0)) parse_fail(line, "dt must be positive");
            } else if (key == "t_max") {
                cfg.grid.t_max = parse_real(value, line, key);
                if (!(cfg.grid.t_max > cfg.grid.t0)) parse_fail(line, "t_max must be positive");
            } else if (key == "seed") {
                cfg.seed = static_cast<std::uint64_t>(parse_integer(value, line, key));
            } else if (key == "threads") {
                cfg.threads = static_cast<int>(parse_integer(value, line, key));
            } else if (key == "initial_state") {
                cfg.initial_state.clear();
                for (const auto& a : split(value, ',')) {
                    try {
                        cfg.initial_state.push_back(parse_complex(a));
                    } catch (const Error&) {
                        throw Error(ErrorKind::BadAmplitudes,
                                    "line " + std::to_string(line) + ": bad amplitude '" + a + "'");
                    }
                }
            } else if (key == "output") {
                if (value.empty()) parse_fail(line, "output prefix is empty");
                cfg.output = value;
            } else {
                parse_fail(line, "unknown key '" + key + "' in [run]");
            }
        } else if (section == "divisibility") {
            if (key != "samples") parse_fail(line, "unknown key '" + key + "' in [divisibility]");
            cfg.divisibility_samples = static_cast<int>(parse_integer(value, line, key));
            if (cfg.divisibility_samples < 1) parse_fail(line, "samples must be at least 1");
        } else if (section.rfind("method.", 0) == 0) {
            const std::string m = section.substr(7);
            const auto it = kMethodKeys.find(m);
            if (it == kMethodKeys.end() || !it->second.count(key)) {
                parse_fail(line, "method '" + m + "' has no parameter '" + key + "'");
            }
            if (key == "gauge" && value != "auto" && value != "none" && value != "dephasing") {
                parse_fail(line, "gauge must be auto, none or dephasing");
            }
            if (key == "r_min" && !(parse_real(value, line, key) > 0.0)) parse_fail(line, "r_min must be positive");
            if (key == "a" && !(parse_real(value, line, key) >= 0.0)) parse_fail(line, "a must be non-negative");
            cfg.method_params[m][key] = value;
        } else {  // observable.<name>
            if (key != "matrix") parse_fail(line, "observables take a single 'matrix' key");
            const auto rows = split(value, ';');
            const auto n = static_cast<int>(rows.size());
            Matrix op(n, n);
            for (int r = 0; r < n; ++r) {
                const auto cols = split(rows[r], ',');
                if (static_cast<int>(cols.size()) != n) parse_fail(line, "observable matrix must be square");
                for (int c = 0; c < n; ++c) {
                    try {
                        op(r, c) = parse_complex(cols[c]);
                    } catch (const Error&) {
                        parse_fail(line, "bad matrix entry '" + cols[c] + "'");
                    }
                }
            }
            if (!is_hermitian(op)) parse_fail(line, "observable '" + current_observable + "' is not hermitian");
            cfg.observables.back().op = op;
        }
    }
    (void)saw_model_name;
    for (const auto& o : cfg.observables) {
        if (o.op.size() == 0) throw Error(ErrorKind::ParseError, "observable '" + o.name + "' has no matrix");
    }
    finalize_config(cfg);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::ParseError, "cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

void finalize_config(RunConfig& cfg) {
    if (!kModelNames.count(cfg.model)) throw Error(ErrorKind::UnknownModel, "unknown model '" + cfg.model + "'");
    cfg.grid = TimeGrid(cfg.grid.t0, cfg.grid.t_max, cfg.grid.dt);
    if (cfg.grid.steps() < 1) throw Error(ErrorKind::ParseError, "time grid has no steps");
    // Builds the model once to validate parameters.
    const NamedModel model = make_model(cfg.model, cfg.model_params);
    const int d = model.me.dim();
    (void)initial_state(cfg, d);
    if (cfg.observables.empty() && d == 2) {
        cfg.observables = {{"sx", pauli::sx()}, {"sy", pauli::sy()}, {"sz", pauli::sz()}};
    }
    for (const auto& o : cfg.observables) {
        if (o.op.rows() != d) {
            throw Error(ErrorKind::DimMismatch, "observable '" + o.name + "' does not match the model dimension");
        }
    }
    if (cfg.n_traj < 1) throw Error(ErrorKind::ParseError, "need at least one trajectory");
}

PureState initial_state(const RunConfig& cfg, int dim) {
    if (cfg.initial_state.empty()) {
        if (dim != 2) throw Error(ErrorKind::BadAmplitudes, "initial_state is required for non-qubit models");
        return plus_state();
    }
    if (static_cast<int>(cfg.initial_state.size()) != dim) {
        throw Error(ErrorKind::BadAmplitudes, "initial_state has " + std::to_string(cfg.initial_state.size()) +
                                                  " amplitudes, model dimension is " + std::to_string(dim));
    }
    Vector v(dim);
    for (int i = 0; i < dim; ++i) v[i] = cfg.initial_state[i];
    try {
        return PureState::from_amplitudes(v);
    } catch (const Error&) {
        throw Error(ErrorKind::BadAmplitudes, "initial_state has zero norm");
    }
}

MethodSpec build_method(MethodKind kind, const RunConfig& cfg, const NamedModel& model) {
    MethodSpec spec(kind);
    const auto it = cfg.method_params.find(std::string(method_name(kind)));
    const std::map<std::string, std::string> empty;
    const auto& params = it == cfg.method_params.end() ? empty : it->second;
    auto param = [&](const std::string& k, const std::string& fallback) {
        const auto p = params.find(k);
        return p == params.end() ? fallback : p->second;
    };
    switch (kind) {
        case MethodKind::RROQJ:
        case MethodKind::PSIROQJ: {
            const std::string g = param("gauge", "auto");
            if (g == "auto") {
                spec.gauge = model.gauge;
            } else if (g == "dephasing") {
                if (!model.rates) throw Error(ErrorKind::ParseError, "dephasing gauge needs a phase-covariant model");
                spec.gauge = dephasing_gauge(model.rates->gamma_z);
            }
            break;
        }
        case MethodKind::IM:
            spec.rate_policy.r_min = std::stod(param("r_min", "0.05"));
            break;
        case MethodKind::TRIPLED:
            if (params.count("a")) {
                const double a = std::stod(params.at("a"));
                spec.tripled_a.assign(model.me.channels().size(), [a](double) { return a; });
            }
            break;
        default:
            break;
    }
    return spec;
}

std::string format_number(double x) {
    if (x == 0.0) x = 0.0;  // drop negative zero
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

namespace {

void ensure_parent(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

void write_header(std::ostream& out) { out << "t,method,observable,mean,stderr,n_traj\n"; }

void write_row(std::ostream& out, double t, const std::string& method, const std::string& obs, double mean,
               double se, std::size_t n) {
    out << format_number(t) << ',' << method << ',' << obs << ',' << format_number(mean) << ','
        << format_number(se) << ',' << n << '\n';
}

std::string to_kind_string(ErrorKind k) { return std::string(to_string(k)); }

}  // namespace

int run_command(const RunConfig& cfg, bool oracle_only, std::ostream& log) {
    const NamedModel model = make_model(cfg.model, cfg.model_params);
    const MasterEquation& me = model.me;
    const PureState psi0 = initial_state(cfg, me.dim());
    const TimeGrid& grid = cfg.grid;
    ensure_parent(cfg.output);

    const auto t_oracle = std::chrono::steady_clock::now();
    const OracleSolution oracle = propagate(me, psi0.projector(), grid);
    const double oracle_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_oracle).count();
    {
        const std::string path = cfg.output + "_oracle.csv";
        std::ofstream out(path);
        if (!out) throw Error(ErrorKind::ParseError, "cannot write '" + path + "'");
        write_header(out);
        for (int k = 0; k < grid.points(); ++k) {
            for (const auto& o : cfg.observables) {
                write_row(out, grid.time(k), "oracle", o.name, (o.op * oracle.states[k]).trace().real(), 0.0, 0);
            }
        }
        log << "wrote " << path << '\n';
    }
    if (oracle_only) return 0;

    nlohmann::ordered_json summary;
    summary["model"] = cfg.model;
    summary["model_params"] = cfg.model_params;
    summary["grid"] = {{"t0", grid.t0}, {"t_max", grid.t_max}, {"dt", grid.dt}, {"steps", grid.steps()}};
    summary["n_traj"] = cfg.n_traj;
    summary["seed"] = cfg.seed;
    summary["oracle_wall_clock_ms"] = oracle_ms;
    summary["methods"] = nlohmann::ordered_json::array();

    bool any_abort = false;
    for (const MethodKind kind : cfg.methods) {
        const std::string name(method_name(kind));
        EnsembleResult res;
        try {
            const MethodSpec spec = build_method(kind, cfg, model);
            res = run_ensemble_partial(spec, me, psi0, grid, cfg.n_traj, cfg.seed, RunOptions{cfg.threads, 20});
        } catch (const Error& e) {
            res = EnsembleResult{};
            res.method = kind;
            res.grid = grid;
            res.n_traj = cfg.n_traj;
            res.abort = AbortInfo{e.kind(), e.has_time() ? e.time() : grid.t0, e.what()};
        }
        const std::string path = cfg.output + "_" + name + ".csv";
        std::ofstream out(path);
        if (!out) throw Error(ErrorKind::ParseError, "cannot write '" + path + "'");
        write_header(out);
        const auto dist = error_vs_oracle(res, oracle);
        std::vector<std::vector<ObservablePoint>> series;
        for (const auto& o : cfg.observables) series.push_back(observable_series(res, o.op));
        double max_dist = 0.0;
        double max_se = 0.0;
        for (std::size_t k = 0; k < res.rho_hat.size(); ++k) {
            const double t = res.time(k);
            for (std::size_t i = 0; i < cfg.observables.size(); ++i) {
                write_row(out, t, name, cfg.observables[i].name, series[i][k].mean, series[i][k].std_error, cfg.n_traj);
            }
            write_row(out, t, name, "oracle_distance", dist[k].value, res.std_error[k], cfg.n_traj);
            max_dist = std::max(max_dist, dist[k].value);
            max_se = std::max(max_se, res.std_error[k]);
        }
        nlohmann::ordered_json entry;
        entry["method"] = name;
        entry["status"] = res.abort ? "aborted" : "ok";
        entry["wall_clock_ms"] = res.wall_clock_ms;
        entry["completed_points"] = res.rho_hat.size();
        entry["max_oracle_distance"] = max_dist;
        entry["max_std_error"] = max_se;
        entry["event_counts"] = res.event_counts;
        if (res.abort) {
            any_abort = true;
            const std::string marker = "!abort:" + to_kind_string(res.abort->kind);
            write_row(out, res.abort->time, name, marker, 0.0, 0.0, cfg.n_traj);
            entry["abort"] = {{"kind", to_kind_string(res.abort->kind)},
                              {"time", res.abort->time},
                              {"message", res.abort->message}};
            log << name << ": aborted with " << to_kind_string(res.abort->kind) << " at t=" << res.abort->time
                << " (" << res.abort->message << ")\n";
        } else {
            entry["abort"] = nullptr;
            log << name << ": max oracle distance " << format_number(max_dist) << ", " << res.wall_clock_ms
                << " ms\n";
        }
        summary["methods"].push_back(entry);
        log << "wrote " << path << '\n';
    }
    const std::string path = cfg.output + "_summary.json";
    std::ofstream js(path);
    js << summary.dump(2) << '\n';
    log << "wrote " << path << '\n';
    return any_abort ? 2 : 0;
}

int divisibility_command(const RunConfig& cfg, std::ostream& log) {
    const NamedModel model = make_model(cfg.model, cfg.model_params);
    ensure_parent(cfg.output);
    const std::string path = cfg.output + "_divisibility.csv";
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::ParseError, "cannot write '" + path + "'");
    out << "t,cp,p,min_rate,min_w_eigenvalue\n";
    for (int k = 0; k < cfg.grid.points(); ++k) {
        const auto r = divisibility_report(model.me, cfg.grid.time(k), cfg.divisibility_samples);
        out << format_number(r.time) << ',' << (r.cp ? "true" : "false") << ',' << (r.p ? "true" : "false") << ','
            << format_number(r.min_rate) << ',' << format_number(r.min_w_eigenvalue) << '\n';
    }
    log << "wrote " << path << '\n';
    return 0;
}

}  // namespace qjump
