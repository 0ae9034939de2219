// qjump: run unraveling benchmarks and divisibility reports from a config file.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qjump/bench.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Quantum-jump unravelings of time-local master equations"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> methods;
    long long trajectories = -1;
    double dt = -1.0;
    double t_max = -1.0;
    long long seed = -1;
    int threads = -1;
    std::string out_prefix;
    bool oracle_only = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
        sub->add_option("--trajectories", trajectories, "Number of trajectories")->check(CLI::PositiveNumber);
        sub->add_option("--dt", dt, "Time step")->check(CLI::PositiveNumber);
        sub->add_option("--t-max", t_max, "Final time")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "Master seed")->check(CLI::NonNegativeNumber);
        sub->add_option("--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
        sub->add_option("--out", out_prefix, "Output path prefix");
    };
    CLI::App* run = app.add_subcommand("run", "Run ensembles and write CSV/JSON results");
    add_common(run);
    run->add_option("--method", methods, "Methods to run (overrides the config)");
    run->add_flag("--oracle-only", oracle_only, "Only write the oracle CSV");
    CLI::App* div = app.add_subcommand("divisibility", "Write the CP/P divisibility report");
    add_common(div);

    CLI11_PARSE(app, argc, argv);

    qjump::RunConfig cfg;
    try {
        cfg = config_path.empty() ? qjump::parse_config("[model]\nname = eternally_nm\n")
                                  : qjump::load_config(config_path);
        if (!methods.empty()) {
            cfg.methods.clear();
            for (const auto& m : methods) {
                for (const auto& piece : CLI::detail::split(m, ',')) {
                    if (!piece.empty()) cfg.methods.push_back(qjump::parse_method(piece));
                }
            }
        }
        if (trajectories > 0) cfg.n_traj = static_cast<std::size_t>(trajectories);
        if (dt > 0.0) cfg.grid.dt = dt;
        if (t_max > 0.0) cfg.grid.t_max = t_max;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        if (threads >= 0) cfg.threads = threads;
        if (!out_prefix.empty()) cfg.output = out_prefix;
        qjump::finalize_config(cfg);
        if (run->parsed() && cfg.methods.empty() && !oracle_only) {
            throw qjump::Error(qjump::ErrorKind::UnknownMethod, "no methods selected (use --method or [run] methods)");
        }
    } catch (const qjump::Error& e) {
        std::cerr << "config error (" << qjump::to_string(e.kind()) << "): " << e.what() << '\n';
        return 1;
    }

    try {
        if (run->parsed()) return qjump::run_command(cfg, oracle_only, std::cerr);
        return qjump::divisibility_command(cfg, std::cerr);
    } catch (const qjump::Error& e) {
        std::cerr << "error (" << qjump::to_string(e.kind()) << "): " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
