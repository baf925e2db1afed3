#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ksnudge/artifacts_io.hpp"
#include "ksnudge/harness.hpp"

namespace {

using ksnudge::LawKind;
using ksnudge::MethodSpec;
using ksnudge::ScenarioConfig;

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    int n_points = 0;
    double length = 0.0;
    double lambda = 0.0;
    double lambda_assimilated = 0.0;
    double dt = 0.0;
    double t_end = 0.0;
    double mu = 0.0;
    int mode_cutoff = 0;
    std::string init;
    int stride = 0;
    double threshold = 0.0;
    bool parallel = false;
    std::string methods_csv;
    double gamma = 0.0;
    std::string gammas_csv;

    CLI::Option* o_n = nullptr;
    CLI::Option* o_length = nullptr;
    CLI::Option* o_lambda = nullptr;
    CLI::Option* o_lambda_v = nullptr;
    CLI::Option* o_dt = nullptr;
    CLI::Option* o_t_end = nullptr;
    CLI::Option* o_mu = nullptr;
    CLI::Option* o_modes = nullptr;
    CLI::Option* o_init = nullptr;
    CLI::Option* o_stride = nullptr;
    CLI::Option* o_threshold = nullptr;
    CLI::Option* o_parallel = nullptr;
    CLI::Option* o_methods = nullptr;
    CLI::Option* o_gamma = nullptr;
    CLI::Option* o_gammas = nullptr;
};

void add_common_options(CLI::App* sub, CommonOpts& o, bool with_methods, bool with_gammas) {
    sub->add_option("--config", o.config_path, "JSON config file; flags override its values");
    sub->add_option("--out", o.out_dir, "output directory (default: $KSNUDGE_OUT or ./out)");
    o.o_n = sub->add_option("--n", o.n_points, "grid points (even, >= 8)");
    o.o_length = sub->add_option("--length", o.length, "domain length");
    o.o_lambda = sub->add_option("--lambda", o.lambda, "instability parameter of the reference");
    o.o_lambda_v = sub->add_option("--lambda-v", o.lambda_assimilated,
                                   "instability parameter of the assimilated system");
    o.o_dt = sub->add_option("--dt", o.dt, "time step");
    o.o_t_end = sub->add_option("--t-end", o.t_end, "final time");
    o.o_mu = sub->add_option("--mu", o.mu, "feedback gain");
    o.o_modes = sub->add_option("--modes", o.mode_cutoff, "observed mode cutoff");
    o.o_init = sub->add_option("--init", o.init, "initial state: fresh or chaotic_restart");
    o.o_stride = sub->add_option("--stride", o.stride, "record errors every this many steps");
    o.o_threshold = sub->add_option("--threshold", o.threshold, "convergence threshold");
    o.o_parallel = sub->add_flag("--parallel", o.parallel, "advance methods on separate threads");
    if (with_methods) {
        o.o_methods = sub->add_option("--methods", o.methods_csv,
                                      "comma-separated laws from linear,power,hybrid,cc");
        o.o_gamma = sub->add_option("--gamma", o.gamma, "exponent for the nonlinear laws");
    }
    if (with_gammas) {
        o.o_gammas = sub->add_option("--gammas", o.gammas_csv,
                                     "comma-separated exponents for the power-law sweep");
    }
}

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    std::string item;
    for (char c : csv) {
        if (c == ',') {
            if (!item.empty()) {
                out.push_back(item);
            }
            item.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            item.push_back(c);
        }
    }
    if (!item.empty()) {
        out.push_back(item);
    }
    return out;
}

std::vector<MethodSpec> methods_from_names(const std::vector<std::string>& names, double gamma) {
    std::vector<MethodSpec> methods;
    for (const std::string& name : names) {
        const LawKind kind = ksnudge::law_kind_from_name(name);
        methods.push_back({name, kind, kind == LawKind::linear ? 0.0 : gamma});
    }
    return methods;
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("cannot parse " + what + " '" + s + "' as a number");
    }
}

void apply_config_file(ScenarioConfig& cfg, double& shared_gamma, const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read config file " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config file " + path + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) {
        throw std::invalid_argument("config file must hold a JSON object");
    }
    static const std::vector<std::string> known = {
        "n_points", "length", "lambda", "lambda_assimilated", "dt", "t_end", "mu",
        "mode_cutoff", "init", "v_init", "methods", "gamma", "sample_stride",
        "convergence_threshold", "parallel", "spectrum_window_start", "rate_window1",
        "rate_window2", "mode_error_times"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw std::invalid_argument("unknown config key '" + key + "'");
        }
    }
    if (j.contains("gamma")) {
        shared_gamma = j["gamma"].get<double>();
    }
    if (j.contains("n_points")) cfg.n_points = j["n_points"].get<int>();
    if (j.contains("length")) cfg.length = j["length"].get<double>();
    if (j.contains("lambda")) cfg.lambda = j["lambda"].get<double>();
    if (j.contains("lambda_assimilated")) {
        cfg.lambda_assimilated = j["lambda_assimilated"].get<double>();
    }
    if (j.contains("dt")) cfg.dt = j["dt"].get<double>();
    if (j.contains("t_end")) cfg.t_end = j["t_end"].get<double>();
    if (j.contains("mu")) cfg.mu = j["mu"].get<double>();
    if (j.contains("mode_cutoff")) cfg.mode_cutoff = j["mode_cutoff"].get<int>();
    if (j.contains("init")) cfg.init = ksnudge::init_kind_from_name(j["init"].get<std::string>());
    if (j.contains("v_init")) {
        if (j["v_init"].get<std::string>() != "zero") {
            throw std::invalid_argument("v_init supports only 'zero'");
        }
    }
    if (j.contains("sample_stride")) cfg.sample_stride = j["sample_stride"].get<int>();
    if (j.contains("convergence_threshold")) {
        cfg.convergence_threshold = j["convergence_threshold"].get<double>();
    }
    if (j.contains("parallel")) cfg.parallel = j["parallel"].get<bool>();
    if (j.contains("spectrum_window_start")) {
        cfg.spectrum_window_start = j["spectrum_window_start"].get<double>();
    }
    if (j.contains("rate_window1")) {
        cfg.rate_window1 = {j["rate_window1"][0].get<double>(), j["rate_window1"][1].get<double>()};
    }
    if (j.contains("rate_window2")) {
        cfg.rate_window2 = {j["rate_window2"][0].get<double>(), j["rate_window2"][1].get<double>()};
    }
    if (j.contains("mode_error_times")) {
        cfg.mode_error_times = j["mode_error_times"].get<std::vector<double>>();
    }
    if (j.contains("methods")) {
        std::vector<MethodSpec> methods;
        for (const nlohmann::json& entry : j["methods"]) {
            if (entry.is_string()) {
                const std::string name = entry.get<std::string>();
                const LawKind kind = ksnudge::law_kind_from_name(name);
                methods.push_back({name, kind, kind == LawKind::linear ? 0.0 : shared_gamma});
            } else if (entry.is_object()) {
                MethodSpec m;
                m.kind = ksnudge::law_kind_from_name(entry.at("kind").get<std::string>());
                m.gamma = entry.value("gamma", m.kind == LawKind::linear ? 0.0 : shared_gamma);
                m.label = entry.value("label", ksnudge::law_kind_name(m.kind));
                methods.push_back(m);
            } else {
                throw std::invalid_argument("config methods entries must be strings or objects");
            }
        }
        cfg.methods = methods;
    }
}

ScenarioConfig resolve_config(const CommonOpts& o) {
    ScenarioConfig cfg;
    double shared_gamma = 0.1;
    if (!o.config_path.empty()) {
        apply_config_file(cfg, shared_gamma, o.config_path);
    }
    if (o.o_gamma != nullptr && o.o_gamma->count() > 0) {
        shared_gamma = o.gamma;
    }
    if (o.o_n->count() > 0) cfg.n_points = o.n_points;
    if (o.o_length->count() > 0) cfg.length = o.length;
    if (o.o_lambda->count() > 0) cfg.lambda = o.lambda;
    if (o.o_lambda_v->count() > 0) cfg.lambda_assimilated = o.lambda_assimilated;
    if (o.o_dt->count() > 0) cfg.dt = o.dt;
    if (o.o_t_end->count() > 0) cfg.t_end = o.t_end;
    if (o.o_mu->count() > 0) cfg.mu = o.mu;
    if (o.o_modes->count() > 0) cfg.mode_cutoff = o.mode_cutoff;
    if (o.o_init->count() > 0) cfg.init = ksnudge::init_kind_from_name(o.init);
    if (o.o_stride->count() > 0) cfg.sample_stride = o.stride;
    if (o.o_threshold->count() > 0) cfg.convergence_threshold = o.threshold;
    if (o.o_parallel->count() > 0) cfg.parallel = o.parallel;
    if (o.o_methods != nullptr && o.o_methods->count() > 0) {
        cfg.methods = methods_from_names(split_csv(o.methods_csv), shared_gamma);
    } else if (o.o_gamma != nullptr && o.o_gamma->count() > 0) {
        for (MethodSpec& m : cfg.methods) {
            if (m.kind != LawKind::linear) {
                m.gamma = shared_gamma;
            }
        }
    }
    return cfg;
}

std::filesystem::path resolve_out_dir(const CommonOpts& o) {
    if (!o.out_dir.empty()) {
        return o.out_dir;
    }
    if (const char* env = std::getenv("KSNUDGE_OUT"); env != nullptr && *env != '\0') {
        return env;
    }
    return "out";
}

std::string json_number_or(const nlohmann::json& j, const std::string& fallback) {
    return j.is_null() ? fallback : j.dump();
}

/// The table is rebuilt from the file on disk so that printed numbers and
/// stored numbers cannot drift apart.
void print_summary(const std::filesystem::path& dir) {
    std::ifstream in(dir / "summary.json");
    if (!in) {
        throw std::runtime_error("cannot reopen " + (dir / "summary.json").string());
    }
    nlohmann::json j;
    in >> j;
    const nlohmann::json& sc = j["scenario"];
    std::printf("scenario: n=%s length=%s lambda=%s dt=%s t_end=%s mu=%s modes=%s init=%s\n",
                sc["n_points"].dump().c_str(), sc["length"].dump().c_str(),
                sc["lambda"].dump().c_str(), sc["dt"].dump().c_str(),
                sc["t_end"].dump().c_str(), sc["mu"].dump().c_str(),
                sc["mode_cutoff"].dump().c_str(),
                sc["init"].get<std::string>().c_str());
    std::printf("steps: %s   wall: %ss\n", j["step_count"].dump().c_str(),
                j["wall_clock_seconds"].dump().c_str());
    std::printf("%-14s %-8s %-22s %-12s %s\n", "method", "gamma", "t*", "speedup", "final_err_l2");
    for (const nlohmann::json& m : j["methods"]) {
        std::string note;
        if (!m["blowup_time"].is_null()) {
            note = "  [blew up at t=" + m["blowup_time"].dump() + "]";
        }
        std::printf("%-14s %-8s %-22s %-12s %s%s\n", m["label"].get<std::string>().c_str(),
                    m["gamma"].dump().c_str(),
                    json_number_or(m["convergence_time"], "none").c_str(),
                    json_number_or(m["speedup_vs_linear"], "-").c_str(),
                    m["final_err_l2"].dump().c_str(), note.c_str());
    }
}

int run_and_write(const ScenarioConfig& cfg, const std::filesystem::path& out_dir,
                  bool spectra_only) {
    const ksnudge::RunArtifacts art = ksnudge::run_scenario(cfg);
    std::filesystem::create_directories(out_dir);
    if (spectra_only) {
        ksnudge::write_spectra(art, out_dir);
        ksnudge::write_summary_json(art, out_dir / "summary.json");
    } else {
        ksnudge::write_artifacts(art, out_dir);
    }
    print_summary(out_dir);
    std::printf("artifacts written to %s\n", out_dir.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kuramoto-Sivashinsky continuous data assimilation experiments"};
    app.require_subcommand(1);

    CommonOpts run_opts;
    CLI::App* run_cmd = app.add_subcommand("run", "run one scenario and write artifacts");
    add_common_options(run_cmd, run_opts, /*with_methods=*/true, /*with_gammas=*/false);

    CommonOpts compare_opts;
    CLI::App* compare_cmd =
        app.add_subcommand("compare", "run the four-law comparison at a shared gamma");
    add_common_options(compare_cmd, compare_opts, /*with_methods=*/true, /*with_gammas=*/false);

    CommonOpts sweep_opts;
    CLI::App* sweep_cmd =
        app.add_subcommand("gamma-sweep", "run the power law across a list of exponents");
    add_common_options(sweep_cmd, sweep_opts, /*with_methods=*/false, /*with_gammas=*/true);

    CommonOpts spectrum_opts;
    CLI::App* spectrum_cmd =
        app.add_subcommand("spectrum", "run one scenario and write only spectra");
    add_common_options(spectrum_cmd, spectrum_opts, /*with_methods=*/true, /*with_gammas=*/false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            return run_and_write(resolve_config(run_opts), resolve_out_dir(run_opts), false);
        }
        if (compare_cmd->parsed()) {
            return run_and_write(resolve_config(compare_opts), resolve_out_dir(compare_opts),
                                 false);
        }
        if (sweep_cmd->parsed()) {
            ScenarioConfig cfg = resolve_config(sweep_opts);
            std::vector<double> gammas = {0.0, 0.05, 0.075, 0.1, 0.125};
            if (sweep_opts.o_gammas->count() > 0) {
                gammas.clear();
                for (const std::string& g : split_csv(sweep_opts.gammas_csv)) {
                    gammas.push_back(parse_double(g, "gamma"));
                }
                if (gammas.empty()) {
                    throw std::invalid_argument("--gammas must list at least one exponent");
                }
            }
            cfg.methods.clear();
            for (double g : gammas) {
                cfg.methods.push_back(
                    {"power_g" + ksnudge::format_compact(g), LawKind::power, g});
            }
            return run_and_write(cfg, resolve_out_dir(sweep_opts), false);
        }
        if (spectrum_cmd->parsed()) {
            return run_and_write(resolve_config(spectrum_opts), resolve_out_dir(spectrum_opts),
                                 true);
        }
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ksnudge::BlowupError& e) {
        std::fprintf(stderr, "error: %s trajectory blew up at t = %.17g\n",
                     e.trajectory.c_str(), e.time);
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
