#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "ksnudge/harness.hpp"

namespace ksnudge {

/// Render a double with 17 significant digits, enough to reparse the exact
/// bit pattern. Locale-independent by construction.
inline std::string format_sig17(double value) {
    char buf[64];
    const std::to_chars_result r =
        std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
    if (r.ec != std::errc{}) {
        throw std::runtime_error("failed to format double");
    }
    return std::string(buf, r.ptr);
}

/// Compact rendering for values used inside file names.
inline std::string format_compact(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", value);
    return std::string(buf);
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    return out;
}

inline nlohmann::json method_summary_json(const MethodResult& r) {
    nlohmann::json j;
    j["label"] = r.spec.label;
    j["kind"] = law_kind_name(r.spec.kind);
    j["gamma"] = r.spec.gamma;
    j["convergence_time"] =
        r.convergence_time ? nlohmann::json(*r.convergence_time) : nlohmann::json(nullptr);
    j["speedup_vs_linear"] =
        r.speedup_vs_linear ? nlohmann::json(*r.speedup_vs_linear) : nlohmann::json(nullptr);
    j["decay_rate_window1"] =
        r.rate_window1 ? nlohmann::json(*r.rate_window1) : nlohmann::json(nullptr);
    j["decay_rate_window2"] =
        r.rate_window2 ? nlohmann::json(*r.rate_window2) : nlohmann::json(nullptr);
    j["final_err_l2"] = r.final_err_l2;
    j["blowup_time"] = r.blowup_time ? nlohmann::json(*r.blowup_time) : nlohmann::json(nullptr);
    return j;
}

}  // namespace detail

inline void write_errors_csv(const RunArtifacts& art, const std::filesystem::path& path) {
    std::ofstream out = detail::open_output(path);
    out << "t,method,err_l2,err_h1\n";
    for (const MethodResult& r : art.methods) {
        for (size_t i = 0; i < r.series.times.size(); ++i) {
            out << format_sig17(r.series.times[i]) << ',' << r.spec.label << ','
                << format_sig17(r.series.err_l2[i]) << ',' << format_sig17(r.series.err_h1[i])
                << '\n';
        }
    }
}

inline void write_spectrum_csv(const std::vector<double>& amplitudes, const SpectralGrid& grid,
                               const std::filesystem::path& path) {
    std::ofstream out = detail::open_output(path);
    out << "mode,k,amplitude\n";
    for (size_t m = 0; m < amplitudes.size(); ++m) {
        out << m << ',' << format_sig17(grid.wavenumber(static_cast<int>(m))) << ','
            << format_sig17(amplitudes[m]) << '\n';
    }
}

inline void write_spectra(const RunArtifacts& art, const std::filesystem::path& dir) {
    const SpectralGrid grid = make_grid(art.config.n_points, art.config.length);
    if (!art.reference_spectrum_avg.empty()) {
        write_spectrum_csv(art.reference_spectrum_avg, grid, dir / "spectrum_reference.csv");
    }
    for (const MethodResult& r : art.methods) {
        if (!r.spectrum_avg.empty()) {
            write_spectrum_csv(r.spectrum_avg, grid,
                               dir / ("spectrum_" + r.spec.label + ".csv"));
        }
    }
}

inline void write_mode_errors(const RunArtifacts& art, const std::filesystem::path& dir) {
    const SpectralGrid grid = make_grid(art.config.n_points, art.config.length);
    for (const ModeErrorSnapshot& snap : art.mode_errors) {
        const std::filesystem::path path =
            dir / ("mode_error_t" + format_compact(snap.requested_time) + ".csv");
        std::ofstream out = detail::open_output(path);
        out << "mode,k";
        for (const MethodResult& r : art.methods) {
            out << ',' << r.spec.label;
        }
        out << '\n';
        const int half = grid.half_size();
        for (int m = 0; m < half; ++m) {
            out << m << ',' << format_sig17(grid.wavenumber(m));
            for (const std::vector<double>& row : snap.per_method) {
                out << ',';
                if (m < static_cast<int>(row.size())) {
                    out << format_sig17(row[m]);
                } else {
                    out << "nan";
                }
            }
            out << '\n';
        }
    }
}

inline nlohmann::json summary_json(const RunArtifacts& art) {
    const ScenarioConfig& cfg = art.config;
    nlohmann::json scenario;
    scenario["n_points"] = cfg.n_points;
    scenario["length"] = cfg.length;
    scenario["lambda"] = cfg.lambda;
    scenario["lambda_assimilated"] = cfg.lambda_assimilated ? *cfg.lambda_assimilated : cfg.lambda;
    scenario["dt"] = cfg.dt;
    scenario["t_end"] = cfg.t_end;
    scenario["mu"] = cfg.mu;
    scenario["mode_cutoff"] = cfg.mode_cutoff;
    scenario["init"] = init_kind_name(cfg.init);
    scenario["v_init"] = "zero";
    scenario["sample_stride"] = cfg.sample_stride;
    scenario["convergence_threshold"] = cfg.convergence_threshold;
    scenario["parallel"] = cfg.parallel;
    scenario["spectrum_window"] = {art.spectrum_window_begin, art.spectrum_window_end};
    scenario["rate_windows"] = {{cfg.rate_window1[0], cfg.rate_window1[1]},
                                {cfg.rate_window2[0], cfg.rate_window2[1]}};
    scenario["mode_error_times"] = cfg.mode_error_times;
    nlohmann::json methods = nlohmann::json::array();
    for (const MethodSpec& m : cfg.methods) {
        methods.push_back({{"label", m.label}, {"kind", law_kind_name(m.kind)}, {"gamma", m.gamma}});
    }
    scenario["methods"] = methods;

    nlohmann::json j;
    j["scenario"] = scenario;
    j["step_count"] = art.step_count;
    j["wall_clock_seconds"] = art.wall_seconds;
    char digest[32];
    std::snprintf(digest, sizeof(digest), "%016llx",
                  static_cast<unsigned long long>(art.reference_digest));
    j["reference"] = {{"digest", std::string(digest)},
                      {"spectrum_samples", art.spectrum_sample_count}};
    nlohmann::json results = nlohmann::json::array();
    for (const MethodResult& r : art.methods) {
        results.push_back(detail::method_summary_json(r));
    }
    j["methods"] = results;
    return j;
}

inline void write_summary_json(const RunArtifacts& art, const std::filesystem::path& path) {
    std::ofstream out = detail::open_output(path);
    out << summary_json(art).dump(2) << '\n';
}

/// Write the full artifact set into dir (created if absent): errors.csv,
/// spectrum_<label>.csv, mode_error_t<time>.csv, summary.json.
inline void write_artifacts(const RunArtifacts& art, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_errors_csv(art, dir / "errors.csv");
    write_spectra(art, dir);
    write_mode_errors(art, dir);
    write_summary_json(art, dir / "summary.json");
}

}  // namespace ksnudge
