#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ksnudge/assimilation.hpp"
#include "ksnudge/kse.hpp"
#include "ksnudge/spectral.hpp"

namespace ksnudge {

enum class InitKind { fresh, chaotic_restart };
enum class VInit { zero };

inline std::string init_kind_name(InitKind k) {
    return k == InitKind::fresh ? "fresh" : "chaotic_restart";
}

inline InitKind init_kind_from_name(const std::string& name) {
    if (name == "fresh") return InitKind::fresh;
    if (name == "chaotic_restart") return InitKind::chaotic_restart;
    throw std::invalid_argument("unknown init '" + name +
                                "' (expected fresh or chaotic_restart)");
}

/// One assimilated trajectory to run: a labeled feedback law.
struct MethodSpec {
    std::string label;
    LawKind kind = LawKind::linear;
    double gamma = 0.0;
};

inline std::vector<MethodSpec> default_methods() {
    return {{"linear", LawKind::linear, 0.0},
            {"power", LawKind::power, 0.1},
            {"hybrid", LawKind::hybrid, 0.1},
            {"cc", LawKind::concave_convex, 0.1}};
}

/// Full description of one experiment. Defaults reproduce the headline
/// comparison: 8192 modes on 32*pi, dt = 2^-13, mu = 1, 32 observed modes,
/// all four laws at gamma = 0.1, errors sampled every 32 steps.
struct ScenarioConfig {
    int n_points = 8192;
    double length = 32.0 * kPi;
    double lambda = 2.0;
    /// Viscosity of the assimilated system; defaults to lambda.
    std::optional<double> lambda_assimilated;
    double dt = 0.0001220703125;  // 2^-13
    double t_end = 60.0;
    double mu = 1.0;
    int mode_cutoff = 32;
    InitKind init = InitKind::fresh;
    VInit v_init = VInit::zero;
    std::vector<MethodSpec> methods = default_methods();
    int sample_stride = 32;
    double convergence_threshold = 1e-13;
    bool parallel = false;
    /// Averaging window for spectra is [spectrum_window_start, t_end]; falls
    /// back to the whole run when the start does not precede t_end.
    double spectrum_window_start = 20.0;
    std::array<double, 2> rate_window1{5.0, 15.0};
    std::array<double, 2> rate_window2{20.0, 26.0};
    std::vector<double> mode_error_times{4.0, 14.0, 24.0, 34.0};
};

/// Sampled synchronization-error history of one method.
struct ErrorSeries {
    std::string label;
    std::vector<double> times;
    std::vector<double> err_l2;
    std::vector<double> err_h1;
};

struct MethodResult {
    MethodSpec spec;
    ErrorSeries series;
    std::optional<double> convergence_time;
    std::optional<double> blowup_time;
    std::optional<double> rate_window1;
    std::optional<double> rate_window2;
    std::optional<double> speedup_vs_linear;
    double final_err_l2 = 0.0;
    /// Time-averaged |v_m| over the spectrum window; empty if the method died
    /// before the window opened.
    std::vector<double> spectrum_avg;
    SpectralField final_state;
};

/// Per-mode |u_m - v_m| for every method at one snapshot time.
struct ModeErrorSnapshot {
    double requested_time = 0.0;
    double actual_time = 0.0;
    long step = 0;
    /// One row per method, indexed like config.methods; empty row if the
    /// method had blown up by then.
    std::vector<std::vector<double>> per_method;
};

struct RunArtifacts {
    ScenarioConfig config;  // with lambda_assimilated resolved
    long step_count = 0;
    double wall_seconds = 0.0;
    std::vector<double> sample_times;
    std::vector<double> reference_spectrum_avg;
    long spectrum_sample_count = 0;
    double spectrum_window_begin = 0.0;
    double spectrum_window_end = 0.0;
    std::vector<MethodResult> methods;
    std::vector<ModeErrorSnapshot> mode_errors;
    std::uint64_t reference_digest = 0;
};

inline void validate_config(const ScenarioConfig& cfg) {
    const SpectralGrid grid = make_grid(cfg.n_points, cfg.length);  // validates n, length
    if (!(cfg.lambda > 0.0)) {
        throw std::invalid_argument("lambda must be positive");
    }
    if (cfg.lambda_assimilated && !(*cfg.lambda_assimilated > 0.0)) {
        throw std::invalid_argument("assimilated lambda must be positive");
    }
    if (!(cfg.dt > 0.0)) {
        throw std::invalid_argument("dt must be positive");
    }
    if (!(cfg.t_end >= cfg.dt)) {
        throw std::invalid_argument("t_end must cover at least one step");
    }
    const StabilityCheck sc = stability_check(cfg.mu, cfg.dt);
    if (!sc.ok) {
        throw std::invalid_argument(sc.message);
    }
    make_observer(cfg.mode_cutoff, grid);  // validates cutoff
    if (cfg.sample_stride < 1) {
        throw std::invalid_argument("sample stride must be >= 1");
    }
    if (!(cfg.convergence_threshold > 0.0)) {
        throw std::invalid_argument("convergence threshold must be positive");
    }
    for (const MethodSpec& m : cfg.methods) {
        if (m.label.empty()) {
            throw std::invalid_argument("method label must be nonempty");
        }
        for (const MethodSpec& other : cfg.methods) {
            if (&m != &other && m.label == other.label) {
                throw std::invalid_argument("duplicate method label '" + m.label + "'");
            }
        }
        make_feedback_law(m.kind, m.gamma, cfg.mu);  // validates gamma range
    }
}

/// Earliest recorded time from which err_l2 stays below the threshold through
/// the end of the series; nullopt if it never does.
inline std::optional<double> convergence_time(const ErrorSeries& e, double threshold) {
    if (!(threshold > 0.0)) {
        throw std::invalid_argument("threshold must be positive");
    }
    if (e.times.empty()) {
        return std::nullopt;
    }
    size_t last_above = e.times.size();  // sentinel: none above
    for (size_t i = 0; i < e.err_l2.size(); ++i) {
        if (!(e.err_l2[i] < threshold)) {
            last_above = i;
        }
    }
    if (last_above == e.times.size()) {
        return e.times.front();
    }
    if (last_above + 1 >= e.times.size()) {
        return std::nullopt;
    }
    return e.times[last_above + 1];
}

/// Least-squares slope of ln(err_l2) over samples with t0 <= t <= t1.
/// Rejects windows holding fewer than two samples or any error at or below
/// floor_value, where the fit would be meaningless.
inline double decay_rate(const ErrorSeries& e, double t0, double t1, double floor_value) {
    if (!(t0 < t1)) {
        throw std::invalid_argument("rate window must satisfy t0 < t1");
    }
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    long count = 0;
    for (size_t i = 0; i < e.times.size(); ++i) {
        const double t = e.times[i];
        if (t < t0 || t > t1) {
            continue;
        }
        const double err = e.err_l2[i];
        if (!(err > floor_value) || !(err > 0.0)) {
            throw std::invalid_argument("rate window contains zero or sub-threshold errors");
        }
        const double y = std::log(err);
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
        ++count;
    }
    if (count < 2) {
        throw std::invalid_argument("rate window contains fewer than two samples");
    }
    const double denom = count * sxx - sx * sx;
    if (denom == 0.0) {
        throw std::invalid_argument("rate window is degenerate");
    }
    return (count * sxy - sx * sy) / denom;
}

/// Decay rates over the early and late windows, for the decay-shape
/// comparison between feedback laws.
inline std::pair<double, double> decay_rate_windows(const ErrorSeries& e,
                                                    const std::array<double, 2>& w1,
                                                    const std::array<double, 2>& w2,
                                                    double floor_value) {
    return {decay_rate(e, w1[0], w1[1], floor_value),
            decay_rate(e, w2[0], w2[1], floor_value)};
}

/// Mean of |c_m| over the snapshots with t0 <= t <= t1.
inline std::vector<double> time_averaged_spectrum(const std::vector<double>& times,
                                                  const std::vector<SpectralField>& fields,
                                                  double t0, double t1) {
    if (times.size() != fields.size()) {
        throw std::invalid_argument("times and fields must have equal length");
    }
    if (!(t0 < t1)) {
        throw std::invalid_argument("spectrum window must satisfy t0 < t1");
    }
    std::vector<double> accum;
    long count = 0;
    for (size_t i = 0; i < times.size(); ++i) {
        if (times[i] < t0 || times[i] > t1) {
            continue;
        }
        const SpectralField& f = fields[i];
        if (accum.empty()) {
            accum.assign(f.coeff.size(), 0.0);
        }
        if (f.coeff.size() != accum.size()) {
            throw std::invalid_argument("field sizes differ across snapshots");
        }
        for (size_t m = 0; m < accum.size(); ++m) {
            accum[m] += std::abs(f.coeff[m]);
        }
        ++count;
    }
    if (count == 0) {
        throw std::invalid_argument("spectrum window contains no samples");
    }
    for (double& a : accum) {
        a /= count;
    }
    return accum;
}

/// Per-mode coefficient error |u_m - v_m|.
inline std::vector<double> mode_error_snapshot(const SpectralField& u, const SpectralField& v) {
    if (u.size() != v.size()) {
        throw std::invalid_argument("field size mismatch");
    }
    std::vector<double> out(u.coeff.size());
    for (size_t m = 0; m < out.size(); ++m) {
        out[m] = std::abs(u.coeff[m] - v.coeff[m]);
    }
    return out;
}

namespace detail {

inline void fnv1a_update(std::uint64_t& h, const void* data, size_t bytes) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
}

inline std::uint64_t fnv1a_init() { return 14695981039346656037ULL; }

}  // namespace detail

/// Reference state at t = 30 of a fresh-init run with the scenario's grid and
/// stepping; used to start experiments deep inside the attractor.
inline SpectralField chaotic_restart_state(const ScenarioConfig& cfg) {
    const SpectralGrid grid = make_grid(cfg.n_points, cfg.length);
    const EtdCoefficients c = precompute_etd(grid, {cfg.lambda, cfg.dt});
    SpectralField u = initial_condition(grid);
    const long steps = std::lround(30.0 / cfg.dt);
    for (long s = 0; s < steps; ++s) {
        try {
            u = etd1_step(u, c, nullptr, grid);
        } catch (BlowupError& e) {
            e.time = (s + 1) * cfg.dt;
            e.trajectory = "reference (restart pre-run)";
            throw;
        }
    }
    return u;
}

namespace detail {

struct MethodState {
    MethodSpec spec;
    FeedbackLaw law;
    SpectralField v;
    ErrorSeries series;
    std::optional<double> blowup_time;
    std::vector<double> spectrum_accum;
    long spectrum_count = 0;
    std::map<long, std::vector<double>> mode_rows;
    bool active = true;
};

}  // namespace detail

/// Run the reference trajectory and every configured method over [0, t_end].
///
/// The run is chunked: each chunk first advances the reference alone,
/// recording the observed modes at every step plus full snapshots at sample
/// steps, then replays each method against those records. Methods never read
/// each other, so the replay phase can run one thread per method; results are
/// identical to the serial order because each method's arithmetic is
/// self-contained. A blowup in one method marks that method and releases the
/// rest; a reference blowup aborts the run.
inline RunArtifacts run_scenario(const ScenarioConfig& cfg_in) {
    ScenarioConfig cfg = cfg_in;
    if (!cfg.lambda_assimilated) {
        cfg.lambda_assimilated = cfg.lambda;
    }
    validate_config(cfg);

    const auto wall_begin = std::chrono::steady_clock::now();
    const SpectralGrid grid = make_grid(cfg.n_points, cfg.length);
    const EtdCoefficients c_ref = precompute_etd(grid, {cfg.lambda, cfg.dt});
    const EtdCoefficients c_da = (*cfg.lambda_assimilated == cfg.lambda)
                                     ? c_ref
                                     : precompute_etd(grid, {*cfg.lambda_assimilated, cfg.dt});
    const Observer observer = make_observer(cfg.mode_cutoff, grid);
    const int cutoff = observer.mode_cutoff;
    const long steps_total = std::lround(cfg.t_end / cfg.dt);
    const long stride = cfg.sample_stride;

    RunArtifacts art;
    art.config = cfg;
    art.step_count = steps_total;
    art.spectrum_window_begin =
        (cfg.spectrum_window_start > 0.0 && cfg.spectrum_window_start < cfg.t_end)
            ? cfg.spectrum_window_start
            : 0.0;
    art.spectrum_window_end = cfg.t_end;

    SpectralField u = (cfg.init == InitKind::fresh) ? initial_condition(grid)
                                                    : chaotic_restart_state(cfg);

    std::vector<detail::MethodState> ms;
    ms.reserve(cfg.methods.size());
    for (const MethodSpec& spec : cfg.methods) {
        detail::MethodState m;
        m.spec = spec;
        m.law = make_feedback_law(spec.kind, spec.gamma, cfg.mu);
        m.v = make_spectral(grid);
        m.series.label = spec.label;
        ms.push_back(std::move(m));
    }

    const auto is_sample = [&](long s) { return s % stride == 0 || s == steps_total; };
    const auto in_window = [&](double t) { return t >= art.spectrum_window_begin; };

    // Steps whose sampled state feeds a mode-error snapshot: each requested
    // time is rounded to the nearest sample step inside the run.
    std::map<long, std::vector<double>> target_steps;  // step -> requested times
    for (double t_req : cfg.mode_error_times) {
        if (!(t_req > 0.0) || t_req > cfg.t_end) {
            continue;
        }
        long raw = std::lround(t_req / cfg.dt);
        long snapped = std::lround(static_cast<double>(raw) / stride) * stride;
        if (snapped < 1) {
            snapped = std::min(stride, steps_total);
        }
        if (snapped > steps_total) {
            snapped = steps_total;
        }
        target_steps[snapped].push_back(t_req);
    }

    std::vector<double> ref_accum(grid.half_size(), 0.0);
    long ref_count = 0;
    std::uint64_t digest = detail::fnv1a_init();

    const auto record_reference_sample = [&](const SpectralField& state, double t) {
        detail::fnv1a_update(digest, state.coeff.data(), state.coeff.size() * sizeof(state.coeff[0]));
        art.sample_times.push_back(t);
        if (in_window(t)) {
            for (int m = 0; m < grid.half_size(); ++m) {
                ref_accum[m] += std::abs(state.coeff[m]);
            }
            ++ref_count;
        }
    };

    const auto record_method_sample = [&](detail::MethodState& m, const SpectralField& uref,
                                          long step, double t) {
        const SpectralField diff = subtract(uref, m.v);
        m.series.times.push_back(t);
        m.series.err_l2.push_back(l2_norm(diff));
        m.series.err_h1.push_back(h1_norm(diff, grid));
        if (in_window(t)) {
            if (m.spectrum_accum.empty()) {
                m.spectrum_accum.assign(grid.half_size(), 0.0);
            }
            for (int k = 0; k < grid.half_size(); ++k) {
                m.spectrum_accum[k] += std::abs(m.v.coeff[k]);
            }
            ++m.spectrum_count;
        }
        if (target_steps.count(step) != 0) {
            m.mode_rows[step] = mode_error_snapshot(uref, m.v);
        }
    };

    record_reference_sample(u, 0.0);
    for (detail::MethodState& m : ms) {
        record_method_sample(m, u, 0, 0.0);
    }

    const long chunk_cap = ((4096 + stride - 1) / stride) * stride;
    std::vector<std::complex<double>> observed(static_cast<size_t>(chunk_cap) * cutoff);
    std::vector<std::pair<long, SpectralField>> snaps;

    long s = 0;
    while (s < steps_total) {
        const long chunk = std::min(chunk_cap, steps_total - s);

        snaps.clear();
        for (long i = 0; i < chunk; ++i) {
            detail::extract_observed(u, cutoff, observed.data() + i * cutoff);
            try {
                u = etd1_step(u, c_ref, nullptr, grid);
            } catch (BlowupError& e) {
                e.time = (s + i + 1) * cfg.dt;
                e.trajectory = "reference";
                throw;
            }
            const long g = s + i + 1;
            if (is_sample(g)) {
                record_reference_sample(u, g * cfg.dt);
                snaps.emplace_back(g, u);
            }
        }

        const auto advance_method = [&](detail::MethodState& m) {
            if (!m.active) {
                return;
            }
            size_t snap_idx = 0;
            for (long i = 0; i < chunk; ++i) {
                const long g = s + i + 1;
                const SpectralField f = detail::feedback_from_observed(
                    observed.data() + i * cutoff, m.v, observer, m.law, grid);
                try {
                    m.v = etd1_step(m.v, c_da, &f, grid);
                } catch (const BlowupError&) {
                    m.blowup_time = g * cfg.dt;
                    m.active = false;
                    return;
                }
                if (is_sample(g)) {
                    while (snap_idx < snaps.size() && snaps[snap_idx].first < g) {
                        ++snap_idx;
                    }
                    record_method_sample(m, snaps[snap_idx].second, g, g * cfg.dt);
                }
            }
        };

        if (cfg.parallel && ms.size() > 1) {
            std::vector<std::exception_ptr> errors(ms.size());
            std::vector<std::thread> threads;
            threads.reserve(ms.size());
            for (size_t mi = 0; mi < ms.size(); ++mi) {
                threads.emplace_back([&, mi] {
                    try {
                        advance_method(ms[mi]);
                    } catch (...) {
                        errors[mi] = std::current_exception();
                    }
                });
            }
            for (std::thread& t : threads) {
                t.join();
            }
            for (const std::exception_ptr& e : errors) {
                if (e) {
                    std::rethrow_exception(e);
                }
            }
        } else {
            for (detail::MethodState& m : ms) {
                advance_method(m);
            }
        }

        s += chunk;
    }

    art.reference_digest = digest;
    art.spectrum_sample_count = ref_count;
    if (ref_count > 0) {
        art.reference_spectrum_avg = ref_accum;
        for (double& a : art.reference_spectrum_avg) {
            a /= ref_count;
        }
    }

    // Snapshot table rows follow the method order of the config.
    for (const auto& [step, requested] : target_steps) {
        for (double t_req : requested) {
            ModeErrorSnapshot snap;
            snap.requested_time = t_req;
            snap.actual_time = step * cfg.dt;
            snap.step = step;
            for (detail::MethodState& m : ms) {
                auto it = m.mode_rows.find(step);
                snap.per_method.push_back(it != m.mode_rows.end() ? it->second
                                                                  : std::vector<double>{});
            }
            art.mode_errors.push_back(std::move(snap));
        }
    }

    std::optional<double> linear_tstar;
    for (detail::MethodState& m : ms) {
        MethodResult r;
        r.spec = m.spec;
        r.blowup_time = m.blowup_time;
        if (!m.blowup_time) {
            r.convergence_time = convergence_time(m.series, cfg.convergence_threshold);
        }
        try {
            r.rate_window1 = decay_rate(m.series, cfg.rate_window1[0], cfg.rate_window1[1],
                                        cfg.convergence_threshold);
        } catch (const std::invalid_argument&) {
        }
        try {
            r.rate_window2 = decay_rate(m.series, cfg.rate_window2[0], cfg.rate_window2[1],
                                        cfg.convergence_threshold);
        } catch (const std::invalid_argument&) {
        }
        r.final_err_l2 = m.series.err_l2.empty() ? 0.0 : m.series.err_l2.back();
        if (m.spectrum_count > 0) {
            r.spectrum_avg = m.spectrum_accum;
            for (double& a : r.spectrum_avg) {
                a /= m.spectrum_count;
            }
        }
        if (m.spec.kind == LawKind::linear && !linear_tstar && r.convergence_time) {
            linear_tstar = r.convergence_time;
        }
        r.series = std::move(m.series);
        r.final_state = std::move(m.v);
        art.methods.push_back(std::move(r));
    }
    for (MethodResult& r : art.methods) {
        if (linear_tstar && r.convergence_time && *r.convergence_time > 0.0) {
            r.speedup_vs_linear = *linear_tstar / *r.convergence_time;
        }
    }

    art.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_begin).count();
    return art;
}

}  // namespace ksnudge
