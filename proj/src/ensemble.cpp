#include "qjump/ensemble.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <chrono>
#include <climits>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace qjump {

namespace {

constexpr std::array<std::pair<MethodKind, std::string_view>, 11> kMethodNames{{
    {MethodKind::MCWF, "mcwf"},
    {MethodKind::WTD, "wtd"},
    {MethodKind::NMQJ, "nmqj"},
    {MethodKind::WROQJ, "wroqj"},
    {MethodKind::RROQJ, "rroqj"},
    {MethodKind::PSIROQJ, "psiroqj"},
    {MethodKind::DOUBLED, "doubled"},
    {MethodKind::TRIPLED, "tripled"},
    {MethodKind::IM, "im"},
    {MethodKind::PLQT, "plqt"},
    {MethodKind::CLONING, "cloning"},
}};

}  // namespace

std::string_view method_name(MethodKind m) {
    for (const auto& [k, n] : kMethodNames) {
        if (k == m) return n;
    }
    return "unknown";
}

MethodKind parse_method(std::string_view name) {
    std::string lower;
    for (char c : name) {
        if (c == '-' || c == '_') continue;
        lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    for (const auto& [k, n] : kMethodNames) {
        if (lower == n) return k;
    }
    throw Error(ErrorKind::UnknownMethod, "unknown method '" + std::string(name) + "'");
}

std::vector<MethodKind> all_methods() {
    std::vector<MethodKind> out;
    for (const auto& [k, n] : kMethodNames) out.push_back(k);
    return out;
}

namespace {

constexpr int kNoFailure = INT_MAX;

struct Failure {
    int step = kNoFailure;  ///< first step that could not be performed
    ErrorKind kind = ErrorKind::ParseError;
    std::string message;
    double time = 0.0;
};

struct BatchAccum {
    std::size_t begin = 0;
    std::size_t count = 0;
    std::vector<Matrix> sum;
    std::vector<double> weight2;
    std::array<std::size_t, 5> kinds{};
    std::size_t sign_flips = 0;
    Failure failure;

    void init(int points, int dim) {
        sum.assign(points, Matrix::Zero(dim, dim));
        weight2.assign(points, 0.0);
    }
    void record(int k, const Matrix& contribution, double weight = 1.0) {
        sum[k] += contribution;
        weight2[k] += weight * weight;
    }
    void count_event(EventKind e) { ++kinds[static_cast<std::size_t>(e)]; }
};

class FailureBoard {
public:
    explicit FailureBoard(int initial) : min_step_(initial) {}
    int current() const { return min_step_.load(std::memory_order_relaxed); }
    void lower(int step) {
        int cur = min_step_.load();
        while (step < cur && !min_step_.compare_exchange_weak(cur, step)) {
        }
    }

private:
    std::atomic<int> min_step_;
};

void note_failure(BatchAccum& acc, FailureBoard& board, int step, const Error& e, double t) {
    if (step < acc.failure.step) {
        acc.failure = {step, e.kind(), e.what(), e.has_time() ? e.time() : t};
    }
    board.lower(step);
}

int step_of_time(const TimeGrid& grid, double t) {
    const int k = static_cast<int>(std::floor((t - grid.t0) / grid.dt + 1e-9));
    return std::clamp(k, 0, grid.steps());
}

template <class F>
void for_each_batch(std::vector<BatchAccum>& batches, int threads, F&& work) {
    const int nb = static_cast<int>(batches.size());
    if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, nb);
    std::atomic<int> next{0};
    std::exception_ptr first_exc;
    std::mutex exc_mutex;
    auto runner = [&]() {
        for (;;) {
            const int b = next.fetch_add(1);
            if (b >= nb) return;
            try {
                work(batches[b]);
            } catch (...) {
                std::lock_guard lock(exc_mutex);
                if (!first_exc) first_exc = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        runner();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int i = 0; i < threads; ++i) pool.emplace_back(runner);
        for (auto& th : pool) th.join();
    }
    if (first_exc) std::rethrow_exception(first_exc);
}

Matrix pairwise_sum(const std::vector<const Matrix*>& terms, std::size_t lo, std::size_t hi) {
    if (hi - lo == 1) return *terms[lo];
    const std::size_t mid = lo + (hi - lo) / 2;
    return pairwise_sum(terms, lo, mid) + pairwise_sum(terms, mid, hi);
}

double pairwise_sum(const std::vector<double>& terms, std::size_t lo, std::size_t hi) {
    if (hi - lo == 1) return terms[lo];
    const std::size_t mid = lo + (hi - lo) / 2;
    return pairwise_sum(terms, lo, mid) + pairwise_sum(terms, mid, hi);
}

Matrix hermitize(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

std::vector<GeneratorSnapshot> snapshots(const MasterEquation& me, double t0, double h, int n, Failure& f) {
    std::vector<GeneratorSnapshot> out;
    out.reserve(n);
    for (int k = 0; k < n; ++k) {
        try {
            out.push_back(me.at(t0 + k * h));
        } catch (const Error& e) {
            f = {k, e.kind(), e.what(), t0 + k * h};
            break;
        }
    }
    return out;
}

DoubledSnapshot doubled_from(const GeneratorSnapshot& g) {
    DoubledSnapshot s;
    s.a = -kI * g.hamiltonian - 0.5 * g.gamma;
    s.b = s.a;
    for (std::size_t i = 0; i < g.ops.size(); ++i) {
        const double r = g.rates[i];
        const double amp = std::sqrt(std::abs(r));
        s.c.push_back(amp * g.ops[i]);
        s.d.push_back((r < 0.0 ? -amp : amp) * g.ops[i]);
    }
    return s;
}

void check_gauge(const MethodSpec& m) {
    if (m.kind == MethodKind::RROQJ && m.gauge.kind == GaugeTransform::Kind::StateDependent) {
        throw Error(ErrorKind::UnknownMethod, "R-ROQJ takes a time-dependent gauge; use psiroqj for state-dependent ones");
    }
}

struct Context {
    const MethodSpec& method;
    const MasterEquation& me;
    const PureState& psi0;
    const TimeGrid& grid;
    std::uint64_t seed;
};

// Per-trajectory methods: every trajectory owns the substream (seed, index).
void run_trajectories(const Context& ctx, std::vector<BatchAccum>& batches, int threads, int state_dim,
                      const std::vector<GeneratorSnapshot>& snaps, const Failure& snap_failure) {
    const TimeGrid& grid = ctx.grid;
    const int steps = grid.steps();
    const double dt = grid.dt;
    const int usable = static_cast<int>(snaps.size());
    FailureBoard board(snap_failure.step);

    std::optional<SnapshotCache> wtd_cache;
    std::vector<DoubledSnapshot> doubled;
    if (ctx.method.kind == MethodKind::WTD) {
        Failure ignored;
        wtd_cache.emplace(grid.t0, 0.5 * dt, snapshots(ctx.me, grid.t0, 0.5 * dt, 2 * steps + 1, ignored));
    }
    if (ctx.method.kind == MethodKind::DOUBLED) {
        for (const auto& g : snaps) doubled.push_back(doubled_from(g));
    }
    const PureState start = ctx.method.kind == MethodKind::TRIPLED ? tripled_initial(ctx.psi0) : ctx.psi0;

    auto trajectory = [&](BatchAccum& acc, std::size_t index) {
        Rng rng(ctx.seed, index);
        int k = 0;
        auto stop = [&]() { return k > board.current() || k >= usable; };
        try {
            switch (ctx.method.kind) {
                case MethodKind::MCWF:
                case MethodKind::TRIPLED:
                case MethodKind::WROQJ:
                case MethodKind::RROQJ:
                case MethodKind::PSIROQJ: {
                    PureState psi = start;
                    acc.record(0, psi.projector());
                    for (; k < steps && !stop(); ++k) {
                        const double u = rng.uniform();
                        StepOutcome out;
                        switch (ctx.method.kind) {
                            case MethodKind::WROQJ:
                                out = wroqj_step(snaps[k], psi, dt, u);
                                break;
                            case MethodKind::RROQJ:
                            case MethodKind::PSIROQJ:
                                out = roqj_step(snaps[k], psi, dt, ctx.method.gauge, u);
                                break;
                            default:
                                out = mcwf_step(snaps[k], psi, dt, u);
                                break;
                        }
                        acc.count_event(out.event.kind);
                        psi = std::move(out.state);
                        acc.record(k + 1, psi.projector());
                    }
                    break;
                }
                case MethodKind::WTD: {
                    Vector pt = start.vec();
                    double x = rng.uniform();
                    acc.record(0, start.projector());
                    for (; k < steps && !stop(); ++k) {
                        double t = grid.time(k);
                        const double target = grid.time(k + 1);
                        for (;;) {
                            const auto res = wtd_advance(ctx.me, pt, t, x, target, target - t, &*wtd_cache);
                            if (!res.jumped) {
                                pt = res.psi_tilde;
                                break;
                            }
                            const PureState det = normalize(res.psi_tilde).first;
                            const GeneratorSnapshot* cached = wtd_cache->find(res.time);
                            const GeneratorSnapshot g = cached != nullptr ? *cached : ctx.me.at(res.time);
                            const int a = wtd_select_channel(g, det, rng.uniform());
                            pt = normalize(g.ops[a] * det.vec()).first.vec();
                            x = rng.uniform();
                            t = res.time;
                            acc.count_event(EventKind::Jump);
                        }
                        acc.record(k + 1, normalize(pt).first.projector());
                    }
                    break;
                }
                case MethodKind::DOUBLED: {
                    DoubledState theta = DoubledState::from_pure(start);
                    const double n0 = theta.norm2();
                    acc.record(0, theta.coherence(), 1.0);
                    for (; k < steps && !stop(); ++k) {
                        auto out = doubled_step(doubled[k], theta, dt, rng.uniform(), grid.time(k));
                        acc.count_event(out.event.kind);
                        theta = std::move(out.state);
                        acc.record(k + 1, theta.coherence(), theta.norm2() / n0);
                    }
                    break;
                }
                case MethodKind::IM:
                case MethodKind::PLQT: {
                    WeightedTrajectory wt = WeightedTrajectory::start(start);
                    acc.record(0, wt.state.projector(), wt.weight);
                    for (; k < steps && !stop(); ++k) {
                        const double u = rng.uniform();
                        auto [next, ev] = ctx.method.kind == MethodKind::IM
                                              ? im_step(wt, snaps[k], dt, ctx.method.rate_policy, u)
                                              : plqt_step(wt, snaps[k], dt, u);
                        acc.count_event(ev.kind);
                        if (next.sign != wt.sign) ++acc.sign_flips;
                        wt = std::move(next);
                        acc.record(k + 1, wt.weight * wt.state.projector(), wt.weight);
                    }
                    break;
                }
                default:
                    throw Error(ErrorKind::UnknownMethod, "method is not trajectory-local");
            }
        } catch (const Error& e) {
            int step = k;
            if (ctx.method.kind == MethodKind::WTD && e.has_time()) step = std::min(k, step_of_time(grid, e.time()));
            note_failure(acc, board, step, e, grid.time(std::min(k, steps)));
        }
    };

    for (auto& acc : batches) acc.init(grid.points(), state_dim);
    for_each_batch(batches, threads, [&](BatchAccum& acc) {
        for (std::size_t i = 0; i < acc.count; ++i) trajectory(acc, acc.begin + i);
    });
}

void run_nmqj(const Context& ctx, std::vector<BatchAccum>& batches, std::size_t n,
              const std::vector<GeneratorSnapshot>& snaps, std::vector<NmqjEvent>& log_out) {
    const TimeGrid& grid = ctx.grid;
    const int nb = static_cast<int>(batches.size());
    const int d = ctx.psi0.dim();
    for (auto& acc : batches) acc.init(grid.points(), d);
    NmqjEnsemble ens = NmqjEnsemble::uniform(ctx.psi0, n);
    Rng rng(ctx.seed, 0);
    auto record = [&](int k) {
        std::vector<std::vector<std::size_t>> counts(nb, std::vector<std::size_t>(ens.buckets.size(), 0));
        for (std::size_t m = 0; m < n; ++m) ++counts[m % nb][ens.member_bucket[m]];
        for (int b = 0; b < nb; ++b) {
            for (std::size_t i = 0; i < ens.buckets.size(); ++i) {
                if (counts[b][i] == 0) continue;
                batches[b].record(k, static_cast<double>(counts[b][i]) * ens.buckets[i].state.projector());
            }
        }
    };
    record(0);
    const int usable = static_cast<int>(snaps.size());
    for (int k = 0; k < grid.steps() && k < usable; ++k) {
        try {
            ens = nmqj_step(snaps[k], ens, grid.dt, rng);
        } catch (const Error& e) {
            batches[0].failure = {k, e.kind(), e.what(), e.has_time() ? e.time() : grid.time(k)};
            break;
        }
        record(k + 1);
    }
    for (const auto& ev : ens.log) {
        batches[0].kinds[static_cast<std::size_t>(ev.kind)] += ev.members;
    }
    log_out = ens.log;
}

void run_cloning(const Context& ctx, std::vector<BatchAccum>& batches, int threads,
                 const std::vector<GeneratorSnapshot>& snaps) {
    const TimeGrid& grid = ctx.grid;
    const int d = ctx.psi0.dim();
    const int usable = static_cast<int>(snaps.size());
    for (std::size_t b = 0; b < batches.size(); ++b) batches[b].init(grid.points(), d);
    for_each_batch(batches, threads, [&](BatchAccum& acc) {
        const std::size_t b = static_cast<std::size_t>(&acc - &batches[0]);
        Rng rng(ctx.seed, b);
        Population pop = Population::uniform(ctx.psi0, acc.count);
        const double nb = static_cast<double>(acc.count);
        acc.record(0, pop.density() * nb, pop.trace_estimate());
        std::vector<std::size_t> ev;
        for (int k = 0; k < grid.steps() && k < usable; ++k) {
            try {
                cloning_population_step(pop, snaps[k], grid.dt, rng, &ev);
            } catch (const Error& e) {
                acc.failure = {k, e.kind(), e.what(), e.has_time() ? e.time() : grid.time(k)};
                break;
            }
            const Matrix rho = pop.members.empty() ? Matrix::Zero(d, d).eval() : pop.density();
            acc.record(k + 1, rho * nb, pop.trace_estimate());
        }
        for (std::size_t i = 0; i < ev.size() && i < acc.kinds.size(); ++i) acc.kinds[i] += ev[i];
    });
}

}  // namespace

double batch_std_error(const std::vector<DensityMatrix>& batches, const DensityMatrix& center) {
    const std::size_t b = batches.size();
    if (b < 2) return 0.0;
    double s = 0.0;
    for (const auto& m : batches) {
        const double dist = trace_distance(hermitize(m), hermitize(center));
        s += dist * dist;
    }
    return std::sqrt(s / static_cast<double>(b * (b - 1)));
}

EnsembleResult run_ensemble_partial(const MethodSpec& method, const MasterEquation& me, const PureState& psi0,
                                    const TimeGrid& grid, std::size_t n_traj, std::uint64_t seed,
                                    const RunOptions& opts) {
    if (n_traj < 1) throw Error(ErrorKind::IndexOutOfRange, "need at least one trajectory");
    if (psi0.dim() != me.dim()) throw Error(ErrorKind::DimMismatch, "initial state dimension does not match the model");
    check_gauge(method);
    const auto started = std::chrono::steady_clock::now();

    const int nb = static_cast<int>(std::min<std::size_t>(std::max(opts.batches, 1), n_traj));
    std::vector<BatchAccum> batches(nb);
    std::size_t offset = 0;
    for (int b = 0; b < nb; ++b) {
        batches[b].begin = offset;
        batches[b].count = n_traj / nb + (static_cast<std::size_t>(b) < n_traj % nb ? 1 : 0);
        offset += batches[b].count;
    }

    const Context ctx{method, me, psi0, grid, seed};
    const int d = me.dim();
    const bool tripled = method.kind == MethodKind::TRIPLED;
    std::optional<MasterEquation> embedded;
    if (tripled) embedded = tripled_embed(me, method.tripled_a).master_equation();
    const MasterEquation& model = tripled ? *embedded : me;

    Failure snap_failure;
    const auto snaps = snapshots(model, grid.t0, grid.dt, grid.steps(), snap_failure);

    EnsembleResult res;
    res.method = method.kind;
    res.grid = grid;
    res.n_traj = n_traj;

    std::vector<NmqjEvent> nmqj_log;
    switch (method.kind) {
        case MethodKind::NMQJ:
            run_nmqj(ctx, batches, n_traj, snaps, nmqj_log);
            break;
        case MethodKind::CLONING:
            run_cloning(ctx, batches, opts.threads, snaps);
            break;
        default:
            run_trajectories(Context{method, model, psi0, grid, seed}, batches, opts.threads, model.dim(), snaps,
                             snap_failure);
            break;
    }

    // Earliest failure wins; ties go to the lowest batch (deterministic).
    Failure failure = snap_failure;
    for (const auto& acc : batches) {
        if (acc.failure.step < failure.step) failure = acc.failure;
    }
    int points = failure.step == kNoFailure ? grid.points() : failure.step + 1;
    points = std::min(points, grid.points());

    std::vector<const Matrix*> terms(nb);
    std::vector<double> w2_terms(nb);
    const double n = static_cast<double>(n_traj);
    res.batch_rho.assign(nb, {});
    std::vector<double> rms;
    std::vector<double> block_trace;
    for (int k = 0; k < points; ++k) {
        for (int b = 0; b < nb; ++b) {
            terms[b] = &batches[b].sum[k];
            w2_terms[b] = batches[b].weight2[k];
        }
        Matrix total = pairwise_sum(terms, 0, nb) / n;
        rms.push_back(std::sqrt(pairwise_sum(w2_terms, 0, nb) / n));
        std::vector<Matrix> per_batch(nb);
        for (int b = 0; b < nb; ++b) per_batch[b] = batches[b].sum[k] / static_cast<double>(batches[b].count);
        if (tripled) {
            const Matrix block = tripled_block12(total, d);
            block_trace.push_back(std::abs(block.trace()));
            try {
                total = tripled_extract(total, d);
            } catch (const Error& e) {
                failure = {k - 1, e.kind(), e.what(), grid.time(k)};
                points = k;
                block_trace.pop_back();
                rms.pop_back();
                break;
            }
            const cplx tr_total = block.trace();
            for (auto& m : per_batch) {
                const Matrix bb = tripled_block12(m, d);
                const cplx tr = bb.trace();
                m = std::abs(tr) > kEps ? Matrix(bb / tr) : Matrix(bb / tr_total);
            }
        }
        total = hermitize(total);
        for (auto& m : per_batch) m = hermitize(m);
        res.std_error.push_back(batch_std_error(per_batch, total));
        for (int b = 0; b < nb; ++b) res.batch_rho[b].push_back(std::move(per_batch[b]));
        res.rho_hat.push_back(std::move(total));
    }

    switch (method.kind) {
        case MethodKind::DOUBLED:
            res.diagnostics["rms_norm"] = rms;
            break;
        case MethodKind::IM:
        case MethodKind::PLQT:
            res.diagnostics["rms_weight"] = rms;
            break;
        case MethodKind::CLONING: {
            std::vector<double> pop;
            for (int k = 0; k < points; ++k) {
                double s = 0.0;
                for (const auto& acc : batches) s += std::sqrt(acc.weight2[k]) * static_cast<double>(acc.count);
                pop.push_back(s / n);
            }
            res.diagnostics["population"] = pop;
            break;
        }
        case MethodKind::TRIPLED:
            res.diagnostics["block_trace"] = block_trace;
            break;
        default:
            break;
    }

    std::array<std::size_t, 5> kinds{};
    std::size_t flips = 0;
    for (const auto& acc : batches) {
        for (std::size_t i = 0; i < kinds.size(); ++i) kinds[i] += acc.kinds[i];
        flips += acc.sign_flips;
    }
    static constexpr std::array<const char*, 5> kKindNames{"deterministic", "jump", "reverse_jump", "clone", "destroy"};
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        if (kinds[i] > 0) res.event_counts[kKindNames[i]] = kinds[i];
    }
    if (method.kind == MethodKind::IM || method.kind == MethodKind::PLQT) res.event_counts["sign_flip"] = flips;

    if (failure.step != kNoFailure) {
        res.abort = AbortInfo{failure.kind, failure.time, failure.message};
    }
    res.wall_clock_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return res;
}

EnsembleResult run_ensemble(const MethodSpec& method, const MasterEquation& me, const PureState& psi0,
                            const TimeGrid& grid, std::size_t n_traj, std::uint64_t seed, const RunOptions& opts) {
    EnsembleResult res = run_ensemble_partial(method, me, psi0, grid, n_traj, seed, opts);
    if (res.abort) throw Error(res.abort->kind, res.abort->message, res.abort->time);
    return res;
}

std::vector<SeriesPoint> error_vs_oracle(const EnsembleResult& result, const OracleSolution& oracle) {
    if (!(result.grid == oracle.grid)) {
        throw Error(ErrorKind::GridMismatch, "ensemble and oracle use different time grids");
    }
    std::vector<SeriesPoint> out;
    const std::size_t n = std::min(result.rho_hat.size(), oracle.states.size());
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        out.push_back({result.time(k), trace_distance(result.rho_hat[k], oracle.states[k])});
    }
    return out;
}

std::vector<ObservablePoint> observable_series(const EnsembleResult& result, const Matrix& observable) {
    if (!result.rho_hat.empty() &&
        (observable.rows() != result.rho_hat.front().rows() || observable.cols() != result.rho_hat.front().cols())) {
        throw Error(ErrorKind::DimMismatch, "observable dimension does not match the state");
    }
    require_hermitian(observable);
    const std::size_t nb = result.batch_rho.size();
    std::vector<ObservablePoint> out;
    out.reserve(result.rho_hat.size());
    for (std::size_t k = 0; k < result.rho_hat.size(); ++k) {
        ObservablePoint p;
        p.t = result.time(k);
        p.mean = (observable * result.rho_hat[k]).trace().real();
        if (nb >= 2) {
            double mean_b = 0.0;
            std::vector<double> vals(nb);
            for (std::size_t b = 0; b < nb; ++b) {
                vals[b] = (observable * result.batch_rho[b][k]).trace().real();
                mean_b += vals[b];
            }
            mean_b /= static_cast<double>(nb);
            double var = 0.0;
            for (double v : vals) var += (v - mean_b) * (v - mean_b);
            var /= static_cast<double>(nb - 1);
            p.std_error = std::sqrt(var / static_cast<double>(nb));
        }
        out.push_back(p);
    }
    return out;
}

}  // namespace qjump
