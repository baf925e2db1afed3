#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "ksnudge/artifacts_io.hpp"
#include "ksnudge/harness.hpp"

using namespace ksnudge;

namespace {

void report(int index, const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %2d (%s)%s%s\n", ok ? "PASS" : "FAIL", index, name.c_str(),
                detail.empty() ? "" : ": ", detail.c_str());
    std::fflush(stdout);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v) {
    return v ? fmt(*v) : std::string("none");
}

const MethodResult& find_method(const RunArtifacts& art, const std::string& label) {
    for (const MethodResult& m : art.methods) {
        if (m.spec.label == label) {
            return m;
        }
    }
    throw std::runtime_error("method " + label + " missing from artifacts");
}

ScenarioConfig desk_config() {
    ScenarioConfig cfg;
    cfg.n_points = 1024;
    cfg.dt = 0.0009765625;  // 2^-10
    return cfg;
}

const RunArtifacts& full_scale() {
    static const RunArtifacts art = [] {
        std::printf("... running full-scale comparison (N=8192, dt=2^-13, t_end=60)\n");
        std::fflush(stdout);
        ScenarioConfig cfg;
        const RunArtifacts a = run_scenario(cfg);
        std::printf("... full-scale run finished in %.1fs\n", a.wall_seconds);
        std::fflush(stdout);
        return a;
    }();
    return art;
}

const RunArtifacts& desk_fresh() {
    static const RunArtifacts art = run_scenario(desk_config());
    return art;
}

const RunArtifacts& desk_chaotic() {
    static const RunArtifacts art = [] {
        ScenarioConfig cfg = desk_config();
        cfg.init = InitKind::chaotic_restart;
        return run_scenario(cfg);
    }();
    return art;
}

bool ordered_strictly(const RunArtifacts& art, std::string* detail) {
    const auto tc = find_method(art, "cc").convergence_time;
    const auto th = find_method(art, "hybrid").convergence_time;
    const auto tp = find_method(art, "power").convergence_time;
    const auto tl = find_method(art, "linear").convergence_time;
    *detail = "t* cc=" + fmt_opt(tc) + " hybrid=" + fmt_opt(th) + " power=" + fmt_opt(tp) +
              " linear=" + fmt_opt(tl);
    if (!tc || !th || !tp || !tl) {
        return false;
    }
    return *tc < *th && *th < *tp && *tp < *tl;
}

}  // namespace

TEST_CASE("criterion 1: full-scale convergence times", "[acceptance]") {
    const RunArtifacts& art = full_scale();
    const std::pair<std::string, double> expected[] = {
        {"linear", 49.8}, {"power", 27.3}, {"hybrid", 20.0}, {"cc", 17.4}};
    bool ok = true;
    std::string detail;
    for (const auto& [label, target] : expected) {
        const auto t = find_method(art, label).convergence_time;
        const bool in_band = t && std::abs(*t - target) <= 0.2 * target;
        ok = ok && in_band;
        detail += label + "=" + fmt_opt(t) + " (target " + fmt(target) + "+-20%) ";
    }
    std::string order_detail;
    const bool ordered = ordered_strictly(art, &order_detail);
    ok = ok && ordered;
    detail += ordered ? "ordering holds" : "ordering violated";
    report(1, "full-scale reproduction", ok, detail);
    CHECK(ok);
}

TEST_CASE("criterion 2: speedup factor", "[acceptance]") {
    const RunArtifacts& art = full_scale();
    const auto tl = find_method(art, "linear").convergence_time;
    const auto tc = find_method(art, "cc").convergence_time;
    bool ok = false;
    std::string detail = "t* linear=" + fmt_opt(tl) + " cc=" + fmt_opt(tc);
    if (tl && tc && *tc > 0.0) {
        const double ratio = *tl / *tc;
        ok = ratio >= 2.2;
        detail += " ratio=" + fmt(ratio) + " (need >= 2.2)";
    }
    report(2, "speedup vs linear", ok, detail);
    CHECK(ok);
}

TEST_CASE("criterion 3: decay shapes", "[acceptance]") {
    const RunArtifacts& art = full_scale();
    const MethodResult& power = find_method(art, "power");
    const MethodResult& linear = find_method(art, "linear");
    bool ok = true;
    std::string detail;
    if (power.rate_window1 && power.rate_window2) {
        const double r1 = std::abs(*power.rate_window1);
        const double r2 = std::abs(*power.rate_window2);
        ok = ok && r2 >= 1.5 * r1;
        detail += "power rates " + fmt(-r1) + " -> " + fmt(-r2) + " (need x1.5) ";
    } else {
        ok = false;
        detail += "power rates unavailable ";
    }
    if (linear.rate_window1 && linear.rate_window2) {
        const double r1 = std::abs(*linear.rate_window1);
        const double r2 = std::abs(*linear.rate_window2);
        const double spread = std::abs(r1 - r2) / std::max(r1, r2);
        ok = ok && spread <= 0.3;
        detail += "linear rates " + fmt(-r1) + " vs " + fmt(-r2) + " spread " + fmt(spread) +
                  " (need <= 0.3)";
    } else {
        ok = false;
        detail += "linear rates unavailable";
    }
    report(3, "super-exponential signature", ok, detail);
    CHECK(ok);
}

TEST_CASE("criterion 4: desk-scale convergence and ordering", "[acceptance]") {
    const RunArtifacts& art = desk_fresh();
    std::string detail;
    bool ok = ordered_strictly(art, &detail);
    for (const MethodResult& m : art.methods) {
        ok = ok && m.convergence_time.has_value();
    }
    report(4, "desk-scale smoke suite", ok, detail);
    CHECK(ok);
}

TEST_CASE("criterion 5: linear exactness", "[acceptance]") {
    const SpectralGrid g = make_grid(256, 32.0 * kPi);
    const double dt = 0.0001220703125;
    const EtdCoefficients c = precompute_etd(g, {2.0, dt});
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    SpectralField s0 = make_spectral(g);
    for (int m = 1; m <= g.dealias_cutoff(); ++m) {
        s0.coeff[m] = {dist(rng), dist(rng)};
    }
    SpectralField s = s0;
    const int steps = 1000;
    for (int i = 0; i < steps; ++i) {
        s = etd1_apply(s, c, nullptr);
    }
    const std::vector<double> sym = linear_symbol(g, 2.0);
    double worst = 0.0;
    for (int m = 1; m < g.half_size(); ++m) {
        const std::complex<double> exact = s0.coeff[m] * std::exp(sym[m] * dt * steps);
        if (std::abs(exact) > 0.0) {
            worst = std::max(worst, std::abs(s.coeff[m] - exact) / std::abs(exact));
        }
    }
    const bool ok = worst <= 1e-10;
    report(5, "linear exactness", ok,
           "max relative deviation " + fmt(worst) + " over 1000 steps (need <= 1e-10)");
    CHECK(ok);
}

TEST_CASE("criterion 6: transform identities", "[acceptance]") {
    const SpectralGrid g = make_grid(1024, 32.0 * kPi);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    double worst_rt = 0.0;
    double worst_parseval = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        SpectralField s = make_spectral(g);
        s.coeff[0] = {dist(rng), 0.0};
        for (int m = 1; m < g.half_size() - 1; ++m) {
            s.coeff[m] = {dist(rng), dist(rng)};
        }
        const PhysicalField f = to_physical(s, g);
        const SpectralField back = to_spectral(f, g);
        for (int m = 0; m < g.half_size(); ++m) {
            worst_rt = std::max(worst_rt, std::abs(back.coeff[m] - s.coeff[m]));
        }
        double quad = 0.0;
        for (double v : f.samples) {
            quad += v * v;
        }
        quad = std::sqrt(quad / g.n_points);
        worst_parseval = std::max(worst_parseval, std::abs(quad - l2_norm(s)));
    }
    bool ok = worst_rt <= 1e-12 && worst_parseval <= 1e-12;

    // Idempotence, exactly.
    const Observer o = make_observer(32, g);
    SpectralField s = make_spectral(g);
    for (int m = 1; m < g.half_size() - 1; ++m) {
        s.coeff[m] = {dist(rng), dist(rng)};
    }
    const SpectralField d1 = dealias(s, g);
    const SpectralField d2 = dealias(d1, g);
    const SpectralField o1 = observe(s, o);
    const SpectralField o2 = observe(o1, o);
    for (int m = 0; m < g.half_size(); ++m) {
        ok = ok && d1.coeff[m] == d2.coeff[m] && o1.coeff[m] == o2.coeff[m];
    }
    report(6, "Parseval and round-trip invariants", ok,
           "max round-trip " + fmt(worst_rt) + ", max Parseval gap " + fmt(worst_parseval) +
               " (need <= 1e-12), idempotence exact");
    CHECK(ok);
}

TEST_CASE("criterion 7: gamma-zero equivalence", "[acceptance]") {
    ScenarioConfig cfg = desk_config();
    cfg.methods = {{"linear", LawKind::linear, 0.0}, {"power0", LawKind::power, 0.0}};
    const RunArtifacts art = run_scenario(cfg);
    double max_diff = 0.0;
    const SpectralField& a = art.methods[0].final_state;
    const SpectralField& b = art.methods[1].final_state;
    for (int m = 0; m < a.size(); ++m) {
        max_diff = std::max(max_diff, std::abs(a.coeff[m] - b.coeff[m]));
    }
    const bool series_equal = art.methods[0].series.err_l2 == art.methods[1].series.err_l2;
    const bool ok = max_diff <= 1e-14 && series_equal;
    report(7, "gamma-zero equivalence", ok,
           "max final coefficient difference " + fmt(max_diff) +
               " (need <= 1e-14), error histories " + (series_equal ? "identical" : "differ"));
    CHECK(ok);
}

TEST_CASE("criterion 8: feedback-law properties", "[acceptance]") {
    bool ok = true;
    std::string failure;
    for (LawKind kind : {LawKind::power, LawKind::hybrid, LawKind::concave_convex}) {
        for (double gamma : {0.05, 0.1, 0.25, 0.5, 0.9}) {
            const FeedbackLaw law{kind, gamma, 1.0};
            double prev = apply_law(law, -10.0);
            for (int i = 0; i < 1000; ++i) {
                const double x = -10.0 + 20.0 * i / 999.0;
                const double f = apply_law(law, x);
                if (apply_law(law, -x) != -f) {
                    ok = false;
                    failure = "oddness";
                }
                if (f < prev) {
                    ok = false;
                    failure = "monotonicity";
                }
                prev = f;
            }
            if (apply_law(law, 0.0) != 0.0 || apply_law(law, 1.0) != 1.0 ||
                apply_law(law, -1.0) != -1.0) {
                ok = false;
                failure = "fixed points";
            }
            if (std::abs(apply_law(law, 1.0 - 1e-12) - 1.0) > 1e-11 ||
                std::abs(apply_law(law, 1.0 + 1e-12) - 1.0) > 1e-11) {
                ok = false;
                failure = "continuity at 1";
            }
            if (gamma > 0.0) {
                for (double x : {1e-8, 1e-3, 0.1, 0.9}) {
                    if (!(apply_law(law, x) > x)) {
                        ok = false;
                        failure = "small-error amplification";
                    }
                }
            }
        }
    }
    report(8, "feedback-law unit properties", ok,
           ok ? "oddness, monotonicity, continuity, fixed points, amplification on 1000-point grids"
              : ("violated: " + failure));
    CHECK(ok);
}

TEST_CASE("criterion 9: non-convergence handling at gamma 0.25", "[acceptance]") {
    const auto dir = std::filesystem::temp_directory_path() / "ksnudge_acceptance_gamma025";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const std::string cmd = std::string(KSNUDGE_CLI_PATH) +
                            " run --n 1024 --dt 0.0009765625 --t-end 60 --methods power"
                            " --gamma 0.25 --out " +
                            dir.string() + " > " + (dir / "cli.log").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    const bool exited_zero = WIFEXITED(status) && WEXITSTATUS(status) == 0;

    bool reports_none = false;
    std::string tstar = "unreadable";
    std::string final_err = "unreadable";
    const std::filesystem::path summary_path = dir / "summary.json";
    if (std::ifstream in(summary_path); in.good()) {
        nlohmann::json j;
        in >> j;
        const nlohmann::json& m = j["methods"][0];
        reports_none = m["convergence_time"].is_null();
        tstar = m["convergence_time"].is_null() ? "none" : m["convergence_time"].dump();
        final_err = m["final_err_l2"].dump();
    }
    const bool ok = exited_zero && reports_none;
    report(9, "non-convergence handling", ok,
           std::string("exit ") + (exited_zero ? "0" : "nonzero") + ", reported t* = " + tstar +
               ", final err_l2 = " + final_err + " (expected t* = none)");
    CHECK(ok);
}

TEST_CASE("criterion 10: resolution adequacy", "[acceptance]") {
    const RunArtifacts& art = full_scale();
    const std::vector<double>& spec = art.reference_spectrum_avg;
    const SpectralGrid g = make_grid(art.config.n_points, art.config.length);
    const int cutoff = g.dealias_cutoff();
    double peak = 0.0;
    for (int m = 1; m <= cutoff; ++m) {
        peak = std::max(peak, spec[m]);
    }
    double tail = 0.0;
    for (int m = cutoff - 16; m <= cutoff; ++m) {
        tail = std::max(tail, spec[m]);
    }
    const bool ok = peak > 0.0 && tail < 1e-14 * peak;
    report(10, "resolution adequacy", ok,
           "peak " + fmt(peak) + ", max over modes " + std::to_string(cutoff - 16) + ".." +
               std::to_string(cutoff) + " is " + fmt(tail) + " (need < 1e-14 x peak = " +
               fmt(1e-14 * peak) + ")");
    CHECK(ok);
}

TEST_CASE("criterion 11: chaotic restart", "[acceptance]") {
    const RunArtifacts& fresh = desk_fresh();
    const RunArtifacts& restart = desk_chaotic();
    std::string detail;
    bool ok = ordered_strictly(restart, &detail);
    for (const char* label : {"linear", "power", "hybrid", "cc"}) {
        const auto tf = find_method(fresh, label).convergence_time;
        const auto tr = find_method(restart, label).convergence_time;
        if (!tf || !tr || *tr < *tf) {
            ok = false;
        }
        detail += std::string(" ") + label + " fresh=" + fmt_opt(tf) + " restart=" + fmt_opt(tr);
    }
    report(11, "chaotic restart", ok, detail);
    CHECK(ok);
}
