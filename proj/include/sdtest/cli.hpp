#pragma once

// Batch front-end: simulate / analyze / test / feasibility / sweep / rerun.
//
// Exit codes: 0 success, 1 usage error (unknown or missing flag, bad flag
// value, malformed config file), 2 runtime or data error (unreadable input,
// invalid file contents, analysis refusal).
//
// Config files (--config FILE) hold one `key = value` per line, where key is
// a long flag name without the leading dashes; `#` starts a comment. Values
// given on the command line override values from the file. Boolean flags take
// `true` or `false`.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdtest/analysis.hpp"
#include "sdtest/feasibility.hpp"
#include "sdtest/io.hpp"
#include "sdtest/simulate.hpp"

namespace sdtest::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutDirEnv = "SDTEST_OUT_DIR";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Published order-of-magnitude estimate for the worked detector example,
/// quoted in feasibility output next to the formula value.
inline constexpr double kQuotedTauTildeEstimate = 1e-6;

namespace detail {

using nlohmann::json;
namespace fs = std::filesystem;

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Parsed `key = value` lines in file order.
inline std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
    std::string text;
    try {
        text = io::read_file(path);
    } catch (const io::FormatError&) {
        throw UsageError("--config: cannot read config file '" + path + "'");
    }
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError("--config: malformed line " + std::to_string(lineno) + " in '" + path +
                             "' (expected key = value)");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.rfind("--", 0) == 0) key.erase(0, 2);
        if (key.empty()) {
            throw UsageError("--config: empty key on line " + std::to_string(lineno) + " in '" + path + "'");
        }
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

inline double parse_double(const std::string& flag, const std::string& s) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw UsageError(flag + ": expected a number, got '" + s + "'");
    }
}


inline std::string default_out_dir() {
    if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') return env;
    return ".";
}

struct Outputs {
    std::vector<std::string> paths;
    std::uint64_t master_seed = 0;
};

inline void write_manifest(const std::string& out_dir, const std::string& name, const std::string& subcommand,
                           const CLI::App& sub, Outputs outputs, double wall_time, std::ostream& out) {
    json config = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        const std::string lname = opt->get_single_name();
        if (lname == "help" || lname == "config" || lname.empty()) continue;
        if (opt->get_expected_min() == 0) {
            config[lname] = opt->count() > 0 ? "true" : "false";
        } else {
            std::string value = opt->count() > 0 ? opt->results().back() : opt->get_default_str();
            if (!value.empty()) config[lname] = std::move(value);
        }
    }
    // Inputs are recorded as absolute paths so a rerun works from any cwd.
    for (const char* key : {"input", "grid"}) {
        if (config.contains(key) && !config[key].get<std::string>().empty()) {
            config[key] = fs::absolute(config[key].get<std::string>()).string();
        }
    }
    config["out-dir"] = out_dir;
    const std::string path = (fs::path(out_dir) / (name + ".manifest.json")).string();
    json manifest = {{"tool_version", kToolVersion},
                     {"subcommand", subcommand},
                     {"resolved_config", config},
                     {"master_seed", outputs.master_seed},
                     {"output_paths", outputs.paths},
                     {"wall_time", wall_time}};
    io::write_json_file(path, manifest);
    out << "manifest: " << path << "\n";
}

inline std::string output_path(const std::string& dir, const std::string& file) {
    return (fs::path(dir) / file).string();
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
    std::string model;
    double theta_deg = 90.0;
    std::string mode = "recording";
    std::size_t runs = 1000;
    std::uint64_t seed = 1;
    std::size_t steps = 20;
    double dt = 1.0;
    std::string tau = "inf";
    std::string tau_over_dt;
    std::string kernel = "redraw";
    double diffusion_angle_deg = 5.0;
    int pass_outcome = 1;
    std::string initial_state = "mixed";
    std::string fixed_lambda;
    unsigned workers = 1;
    std::string name = "ensemble";
};

inline Vec3 parse_vec3(const std::string& flag, const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) v.push_back(parse_double(flag, trim(part)));
    if (v.size() != 3) throw UsageError(flag + ": expected three comma-separated numbers");
    return {v[0], v[1], v[2]};
}

inline std::pair<ModelSpec, Protocol> build_simulation(const SimulateArgs& a) {
    Protocol p;
    if (!std::isfinite(a.theta_deg) || a.theta_deg < 0.0 || a.theta_deg > 180.0) {
        throw UsageError("--theta-deg: must lie in [0, 180]");
    }
    const double theta = degrees_to_radians(a.theta_deg);
    if (!(a.dt > 0.0) || !std::isfinite(a.dt)) throw UsageError("--dt: must be finite and > 0");
    if (a.steps < 1) throw UsageError("--steps: must be >= 1");
    p = make_protocol(theta, a.dt, a.steps, a.mode == "transmissive" ? Mode::transmissive : Mode::recording);
    p.pass_outcome = a.pass_outcome > 0 ? Outcome::plus() : Outcome::minus();

    ModelSpec m;
    if (!a.tau_over_dt.empty() && a.tau != "inf") {
        throw UsageError("--tau-over-dt: give either --tau or --tau-over-dt, not both");
    }
    double tau = a.tau_over_dt.empty() ? parse_double("--tau", a.tau)
                                       : parse_double("--tau-over-dt", a.tau_over_dt) * a.dt;
    if (!(tau > 0.0)) throw UsageError(a.tau_over_dt.empty() ? "--tau: must be > 0" : "--tau-over-dt: must be > 0");
    m.tau = tau;
    if (a.kernel == "diffusion") {
        const double ang = degrees_to_radians(a.diffusion_angle_deg);
        if (!(ang > 0.0 && ang <= std::numbers::pi)) throw UsageError("--diffusion-angle-deg: must lie in (0, 180]");
        m.kernel = DisturbanceKernel::diffusion(ang);
    }
    if (a.model == "qm") {
        m.kind = ModelSpec::Kind::qm;
        if (a.initial_state == "mixed") {
            m.initial_state = QubitState::maximally_mixed();
        } else {
            const Observable& o = a.initial_state[0] == 'a' ? p.obs_a : p.obs_b;
            m.initial_state = QubitState::eigenstate(o, a.initial_state[1] == '+' ? Outcome::plus() : Outcome::minus());
        }
    } else {
        m.kind = ModelSpec::Kind::hidden_variable;
        if (!a.fixed_lambda.empty()) {
            const Vec3 l = parse_vec3("--fixed-lambda", a.fixed_lambda);
            if (std::abs(norm(l) - 1.0) > 1e-9) throw UsageError("--fixed-lambda: must be a unit vector");
            m.initial_lambda = ModelSpec::InitialLambda::fixed;
            m.fixed_lambda = l;
        }
    }
    return {m, p};
}

inline Outputs do_simulate(const SimulateArgs& a, const std::string& out_dir, std::ostream& out) {
    const auto [model, protocol] = build_simulation(a);
    const auto ens = run_ensemble(model, protocol, a.runs, a.seed, a.workers);
    Outputs o;
    o.master_seed = a.seed;
    const auto json_path = output_path(out_dir, a.name + ".json");
    const auto csv_path = output_path(out_dir, a.name + ".csv");
    io::write_json_file(json_path, io::to_json(ens));
    io::write_file(csv_path, io::ensemble_csv(ens));
    o.paths = {json_path, csv_path};
    out << "simulated " << a.runs << " runs (" << a.model << ", " << a.mode << ", theta = " << a.theta_deg
        << " deg)\nensemble: " << json_path << "\nsteps: " << csv_path << "\n";
    return o;
}

// --- analyze ----------------------------------------------------------------

struct AnalyzeArgs {
    std::string input;
    std::string label;
    int max_kappa = -1;
    std::string estimator = "first_reference";
    std::string method = "log_linear";
    std::size_t resamples = FitOptions{}.bootstrap_resamples;
    std::uint64_t seed = FitOptions{}.seed;
    double ci_level = 0.95;
    bool acknowledge_survivorship = false;
    std::string name = "analysis";
};

inline EnsembleResult load_ensemble(const std::string& path) { return io::ensemble_from(io::read_json_file(path)); }

inline Outputs do_analyze(const AnalyzeArgs& a, const std::string& out_dir, std::ostream& out) {
    const auto ens = load_ensemble(a.input);
    Outputs o;
    o.master_seed = ens.master_seed;

    if (ens.protocol.mode == Mode::transmissive) {
        const auto surv = survival_curve(ens);
        const auto sj = output_path(out_dir, a.name + "_survival.json");
        const auto sc = output_path(out_dir, a.name + "_survival.csv");
        io::write_json_file(sj, io::to_json(surv));
        io::write_file(sc, io::survival_csv(surv));
        o.paths.insert(o.paths.end(), {sj, sc});
        out << "survival: " << sc << "\n";
        if (!a.acknowledge_survivorship) {
            out << "transmissive ensemble: autocorrelation skipped (pass --acknowledge-survivorship to "
                   "estimate it conditioned on survival)\n";
            return o;
        }
    }

    const std::string label = a.label.empty() ? ens.protocol.obs_a.label() : a.label;
    try {
        (void)ens.protocol.index_of(label);
    } catch (const std::invalid_argument&) {
        throw UsageError("--label: '" + label + "' is not an observable of this ensemble");
    }
    unsigned max_kappa = 0;
    if (a.max_kappa < 0) {
        const std::size_t which = static_cast<std::size_t>(ens.protocol.index_of(label));
        const std::size_t reps = ens.protocol.max_steps > which ? (ens.protocol.max_steps - which + 1) / 2 : 0;
        max_kappa = reps > 0 ? static_cast<unsigned>(reps - 1) : 0;
    } else {
        max_kappa = static_cast<unsigned>(a.max_kappa);
    }
    CorrOptions copts;
    copts.estimator = a.estimator == "lagged" ? CorrEstimator::lagged : CorrEstimator::first_reference;
    copts.acknowledge_survivorship = a.acknowledge_survivorship;
    const CorrSeries series = estimate_autocorrelation(ens, label, max_kappa, copts);

    FitOptions fopts;
    fopts.method = a.method == "mle" ? FitMethod::mle : FitMethod::log_linear;
    fopts.bootstrap_resamples = a.resamples;
    fopts.seed = a.seed;
    fopts.ci_level = a.ci_level;

    std::optional<FitResult> fit;
    json fit_json;
    try {
        fit = fit_exponential_decay(series, fopts);
        fit_json = io::to_json(*fit);
        fit_json["status"] = "ok";
    } catch (const NoDecaySignal& ex) {
        fit_json = {{"status", "no_fit"}, {"reason", ex.what()}};
    } catch (const std::invalid_argument& ex) {
        fit_json = {{"status", "no_fit"}, {"reason", ex.what()}};
    }

    const auto cj = output_path(out_dir, a.name + "_corr.json");
    const auto cc = output_path(out_dir, a.name + "_corr.csv");
    const auto fj = output_path(out_dir, a.name + "_fit.json");
    io::write_json_file(cj, io::to_json(series));
    io::write_file(cc, io::corr_csv(series, fit ? &*fit : nullptr));
    io::write_json_file(fj, fit_json);
    o.paths.insert(o.paths.end(), {cj, cc, fj});
    if (fit) {
        const auto fc = output_path(out_dir, a.name + "_fit.csv");
        io::write_file(fc, io::fit_csv(*fit));
        o.paths.push_back(fc);
        out << "tau_hat = " << io::sci6(fit->tau_hat) << " s  [" << io::sci6(fit->ci_low) << ", "
            << io::sci6(fit->ci_high) << "]" << (fit->degenerate ? "  (no decay: degenerate fit)" : "") << "\n";
    } else {
        out << "no exponential fit: " << fit_json["reason"].get<std::string>() << "\n";
    }
    for (const auto& w : series.warnings) out << "warning: " << w << "\n";
    out << "autocorrelation: " << cc << "\n";
    return o;
}

// --- test -------------------------------------------------------------------

struct TestArgs {
    std::string input;
    double alpha = 0.05;
    std::size_t resamples = TestOptions{}.bootstrap_resamples;
    std::uint64_t seed = TestOptions{}.seed;
    std::string name = "test";
};

inline Outputs do_test(const TestArgs& a, const std::string& out_dir, std::ostream& out) {
    if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw UsageError("--alpha: must lie in (0, 1)");
    if (a.resamples < 1) throw UsageError("--resamples: must be >= 1");
    const auto ens = load_ensemble(a.input);
    TestOptions opts;
    opts.bootstrap_resamples = a.resamples;
    opts.seed = a.seed;
    const TestResult r = qm_vs_superdet_test(ens, a.alpha, opts);
    Outputs o;
    o.master_seed = ens.master_seed;
    const auto tj = output_path(out_dir, a.name + ".json");
    const auto tc = output_path(out_dir, a.name + ".csv");
    io::write_json_file(tj, io::to_json(r));
    io::write_file(tc, io::test_csv(r));
    o.paths = {tj, tc};
    out << "statistic = " << io::sci6(r.statistic) << ", p_value = " << io::sci6(r.p_value)
        << ", verdict = " << to_string(r.verdict) << "\n";
    return o;
}

// --- feasibility ------------------------------------------------------------

struct FeasibilityArgs {
    double n_atoms = 1e15;
    double band_gap_ev = 1.0;
    double temperature_k = 300.0;
    double recombination_ns = 1.0;
    double mirror_separation_um = 1.0;
    double threshold = kDefaultMeasurabilityThreshold;
    std::string name = "feasibility";
};

inline Outputs do_feasibility(const FeasibilityArgs& a, const std::string& out_dir, std::ostream& out) {
    const DetectorParams det{a.n_atoms, a.band_gap_ev, a.temperature_k, a.recombination_ns * 1e-9};
    const CavityParams cav{a.mirror_separation_um * 1e-6};
    try {
        det.validate();
        cav.validate();
    } catch (const std::invalid_argument& ex) {
        throw UsageError(ex.what());
    }
    if (!(a.threshold >= 1.0)) throw UsageError("--threshold: must be >= 1");
    const FeasibilityReport r = feasibility_report(det, cav, a.threshold);
    const double decades = std::log10(kQuotedTauTildeEstimate / r.tau_tilde);

    json j = io::to_json(r);
    j["inputs"] = {{"n_atoms", det.n_atoms},
                   {"band_gap_eV", det.band_gap_eV},
                   {"temperature_K", det.temperature_K},
                   {"recombination_time_s", det.recombination_time_s},
                   {"mirror_separation_m", cav.mirror_separation_m}};
    j["notes"] = json::array(
        {"tau_tilde = exp(band_gap / (k_B * T)) * recombination_time / n_atoms with k_B = 8.617333262e-5 eV/K",
         "bounce_time = 2 * mirror_separation / c (one round trip)",
         "the commonly quoted order-of-magnitude estimate for N = 1e15, 1 eV, 300 K, 1 ns is ~1e-6 s; "
         "the formula gives " + io::sci6(r.tau_tilde) + " s, " + io::sci6(decades) + " decades apart"});
    const auto path = output_path(out_dir, a.name + ".json");
    io::write_json_file(path, j);

    out << "tau_tilde = " << io::sci6(r.tau_tilde) << " s\n"
        << "bounce_time = " << io::sci6(r.bounce_time) << " s\n"
        << "margin = " << io::sci6(r.margin) << "\n"
        << "measurable = " << (r.measurable ? "true" : "false") << " (threshold " << io::sci6(r.threshold) << ")\n"
        << "note: formula value differs from the quoted ~1e-6 s estimate by " << io::sci6(decades) << " decades\n"
        << "report: " << path << "\n";
    Outputs o;
    o.paths = {path};
    return o;
}

// --- sweep ------------------------------------------------------------------

struct SweepArgs {
    std::string grid;
    double threshold = kDefaultMeasurabilityThreshold;
    std::size_t max_rows = kDefaultMaxSweepRows;
    unsigned workers = 1;
    std::string name = "sweep";
};

/// Axis spec: an explicit array, or {"start", "stop", "num", "scale": linear|log}.
inline std::vector<double> axis_values(const json& j, const std::string& axis) {
    if (j.is_number()) return {j.get<double>()};
    if (j.is_array()) return j.get<std::vector<double>>();
    if (j.is_object()) {
        const double start = j.at("start").get<double>();
        const double stop = j.at("stop").get<double>();
        const auto num = j.at("num").get<std::size_t>();
        const std::string scale = j.value("scale", std::string{"linear"});
        if (num == 0) throw io::FormatError("sweep grid: axis '" + axis + "' has num = 0");
        if (scale != "linear" && scale != "log") throw io::FormatError("sweep grid: unknown scale '" + scale + "'");
        std::vector<double> v(num);
        for (std::size_t i = 0; i < num; ++i) {
            const double t = num == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(num - 1);
            v[i] = scale == "linear" ? start + t * (stop - start)
                                     : std::exp(std::log(start) + t * (std::log(stop) - std::log(start)));
        }
        return v;
    }
    throw io::FormatError("sweep grid: axis '" + axis + "' must be a number, an array or a range object");
}

inline SweepGrid load_grid(const std::string& path) {
    const json j = io::read_json_file(path);
    try {
        SweepGrid g;
        g.n_atoms = axis_values(j.at("n_atoms"), "n_atoms");
        g.band_gap_eV = axis_values(j.at("band_gap_eV"), "band_gap_eV");
        g.temperature_K = axis_values(j.at("temperature_K"), "temperature_K");
        g.recombination_time_s = axis_values(j.at("recombination_time_s"), "recombination_time_s");
        g.mirror_separation_m = axis_values(j.at("mirror_separation_m"), "mirror_separation_m");
        return g;
    } catch (const json::exception& ex) {
        throw io::FormatError("sweep grid '" + path + "': " + ex.what());
    }
}

inline Outputs do_sweep(const SweepArgs& a, const std::string& out_dir, std::ostream& out) {
    if (!(a.threshold >= 1.0)) throw UsageError("--threshold: must be >= 1");
    const SweepGrid grid = load_grid(a.grid);
    const auto rows = parameter_sweep(grid, a.threshold, a.max_rows, a.workers);
    const auto csv = output_path(out_dir, a.name + ".csv");
    const auto js = output_path(out_dir, a.name + ".json");
    io::write_file(csv, io::sweep_csv(rows));
    io::write_json_file(js, io::sweep_json(rows));
    std::size_t ok = 0;
    for (const auto& r : rows) ok += r.report.measurable ? 1 : 0;
    out << rows.size() << " rows, " << ok << " measurable\ntable: " << csv << "\n";
    Outputs o;
    o.paths = {csv, js};
    return o;
}

}  // namespace detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr);

namespace detail {

inline int rerun(const std::string& manifest_path, const std::string& out_dir_override, std::ostream& out,
                 std::ostream& err) {
    const json m = io::read_json_file(manifest_path);
    std::vector<std::string> args{"sdtest"};
    try {
        args.push_back(m.at("subcommand").get<std::string>());
        if (args.back() == "rerun") throw io::FormatError("manifest of a rerun cannot be replayed");
        for (const auto& [key, value] : m.at("resolved_config").items()) {
            const std::string v = value.get<std::string>();
            if (key == "out-dir" && !out_dir_override.empty()) continue;
            if (v == "true" || v == "false") {
                if (v == "true") args.push_back("--" + key);
                continue;
            }
            args.push_back("--" + key);
            args.push_back(v);
        }
    } catch (const json::exception& ex) {
        throw io::FormatError("manifest '" + manifest_path + "': " + ex.what());
    }
    if (!out_dir_override.empty()) {
        args.push_back("--out-dir");
        args.push_back(out_dir_override);
    }
    return run_cli(args, out, err);
}

}  // namespace detail

inline int run_cli(const std::vector<std::string>& input_args, std::ostream& out, std::ostream& err) {
    using namespace detail;
    CLI::App app{"Simulation and analysis of alternating non-commuting measurements"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1, 1);

    std::string out_dir = default_out_dir();
    auto common = [&](CLI::App* sub) {
        sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
        sub->add_option("--out-dir", out_dir, "Output directory (default $" + std::string(kOutDirEnv) + " or .)");
        sub->add_option("--config", "Flat key = value file supplying any flag")->expected(1);
    };

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Run an ensemble of measurement sequences");
    common(s);
    s->add_option("--model", sim.model, "qm or hv")->required()->check(CLI::IsMember({"qm", "hv"}));
    s->add_option("--theta-deg", sim.theta_deg, "Angle between the two observables, degrees");
    s->add_option("--mode", sim.mode)->check(CLI::IsMember({"transmissive", "recording"}));
    s->add_option("--runs", sim.runs)->check(CLI::PositiveNumber);
    s->add_option("--seed", sim.seed, "Master seed");
    s->add_option("--steps", sim.steps, "Measurements per run")->check(CLI::PositiveNumber);
    s->add_option("--dt", sim.dt, "Seconds between consecutive measurements");
    s->add_option("--tau", sim.tau, "Autocorrelation time in seconds, or inf");
    s->add_option("--tau-over-dt", sim.tau_over_dt, "Autocorrelation time in units of dt");
    s->add_option("--kernel", sim.kernel)->check(CLI::IsMember({"redraw", "diffusion"}));
    s->add_option("--diffusion-angle-deg", sim.diffusion_angle_deg);
    s->add_option("--pass-outcome", sim.pass_outcome)->check(CLI::IsMember({1, -1}));
    s->add_option("--initial-state", sim.initial_state, "qm: mixed, a+, a-, b+ or b-")
        ->check(CLI::IsMember({"mixed", "a+", "a-", "b+", "b-"}));
    s->add_option("--fixed-lambda", sim.fixed_lambda, "hv: fixed initial lambda x,y,z (default uniform)");
    s->add_option("--workers", sim.workers)->check(CLI::Range(1u, 1024u));
    s->add_option("--name", sim.name, "Output file stem");

    AnalyzeArgs an;
    auto* a = app.add_subcommand("analyze", "Autocorrelation and exponential fit of an ensemble file");
    common(a);
    a->add_option("--input", an.input, "Ensemble JSON")->required();
    a->add_option("--label", an.label, "Observable label (default: first observable)");
    a->add_option("--max-kappa", an.max_kappa, "Largest repetition lag (default: all)");
    a->add_option("--estimator", an.estimator)->check(CLI::IsMember({"first_reference", "lagged"}));
    a->add_option("--method", an.method)->check(CLI::IsMember({"log_linear", "mle"}));
    a->add_option("--resamples", an.resamples, "Bootstrap resamples");
    a->add_option("--seed", an.seed, "Bootstrap seed");
    a->add_option("--ci-level", an.ci_level)->check(CLI::Range(0.5, 0.999999));
    a->add_flag("--acknowledge-survivorship", an.acknowledge_survivorship,
                "Allow autocorrelation of transmissive (post-selected) data");
    a->add_option("--name", an.name, "Output file stem");

    TestArgs te;
    auto* t = app.add_subcommand("test", "Likelihood-ratio test of QM against hidden-variable persistence");
    common(t);
    t->add_option("--input", te.input, "Ensemble JSON")->required();
    t->add_option("--alpha", te.alpha);
    t->add_option("--resamples", te.resamples, "Bootstrap resamples");
    t->add_option("--seed", te.seed, "Bootstrap seed");
    t->add_option("--name", te.name, "Output file stem");

    FeasibilityArgs fe;
    auto* f = app.add_subcommand("feasibility", "Thermal autocorrelation time against photon bounce time");
    common(f);
    f->add_option("--n-atoms", fe.n_atoms);
    f->add_option("--band-gap-ev", fe.band_gap_ev);
    f->add_option("--temperature-k", fe.temperature_k);
    f->add_option("--recombination-ns", fe.recombination_ns);
    f->add_option("--mirror-separation-um", fe.mirror_separation_um);
    f->add_option("--threshold", fe.threshold, "Required tau_tilde / bounce_time ratio");
    f->add_option("--name", fe.name, "Output file stem");

    SweepArgs sw;
    auto* g = app.add_subcommand("sweep", "Feasibility over a parameter grid");
    common(g);
    g->add_option("--grid", sw.grid, "Grid spec JSON")->required();
    g->add_option("--threshold", sw.threshold);
    g->add_option("--max-rows", sw.max_rows);
    g->add_option("--workers", sw.workers)->check(CLI::Range(1u, 1024u));
    g->add_option("--name", sw.name, "Output file stem");

    std::string manifest_path;
    std::string rerun_out;
    auto* r = app.add_subcommand("rerun", "Replay a run from its manifest");
    r->add_option("--manifest", manifest_path)->required();
    r->add_option("--out-dir", rerun_out, "Override the recorded output directory");

    try {
        // Splice config-file values in front of the command-line flags of the
        // chosen subcommand; TakeLast lets the command line win.
        std::vector<std::string> args;
        std::vector<std::pair<std::string, std::string>> config;
        for (std::size_t i = 0; i < input_args.size(); ++i) {
            const std::string& tok = input_args[i];
            if (tok == "--config") {
                if (i + 1 >= input_args.size()) throw UsageError("--config: missing file name");
                config = read_config(input_args[++i]);
            } else if (tok.rfind("--config=", 0) == 0) {
                config = read_config(tok.substr(9));
            } else {
                args.push_back(tok);
            }
        }
        if (!config.empty()) {
            if (args.size() < 2) throw UsageError("--config: a subcommand is required");
            CLI::App* sub = nullptr;
            try {
                sub = app.get_subcommand(args[1]);
            } catch (const CLI::OptionNotFound&) {
                throw UsageError("unknown subcommand '" + args[1] + "'");
            }
            std::vector<std::string> spliced;
            for (const auto& [key, value] : config) {
                const CLI::Option* opt = sub->get_option_no_throw("--" + key);
                if (opt == nullptr) throw UsageError("--config: unknown key '" + key + "' for " + args[1]);
                if (opt->get_expected_min() == 0) {
                    if (value != "true" && value != "false") {
                        throw UsageError("--config: key '" + key + "' takes true or false");
                    }
                    if (value == "true") spliced.push_back("--" + key);
                } else {
                    spliced.push_back("--" + key);
                    spliced.push_back(value);
                }
            }
            args.insert(args.begin() + 2, spliced.begin(), spliced.end());
        }
        std::vector<char*> argv;
        argv.reserve(args.size());
        for (auto& arg : args) argv.push_back(const_cast<char*>(arg.c_str()));
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& ex) {
        err << "usage error: " << ex.what() << "\n";
        return 1;
    } catch (const UsageError& ex) {
        err << "usage error: " << ex.what() << "\n";
        return 1;
    }

    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (r->parsed()) {
            return rerun(manifest_path, rerun_out, out, err);
        }
        std::filesystem::create_directories(out_dir);
        CLI::App* sub = nullptr;
        std::string name;
        Outputs outputs;
        if (s->parsed()) {
            sub = s;
            name = sim.name;
            outputs = do_simulate(sim, out_dir, out);
        } else if (a->parsed()) {
            sub = a;
            name = an.name;
            outputs = do_analyze(an, out_dir, out);
        } else if (t->parsed()) {
            sub = t;
            name = te.name;
            outputs = do_test(te, out_dir, out);
        } else if (f->parsed()) {
            sub = f;
            name = fe.name;
            outputs = do_feasibility(fe, out_dir, out);
        } else {
            sub = g;
            name = sw.name;
            outputs = do_sweep(sw, out_dir, out);
        }
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_manifest(out_dir, name, sub->get_name(), *sub, outputs, wall, out);
        return 0;
    } catch (const UsageError& ex) {
        err << "usage error: " << ex.what() << "\n";
        return 1;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return 2;
    }
}

inline int run_cli(int argc, char** argv) {
    return run_cli(std::vector<std::string>(argv, argv + argc));
}

}  // namespace sdtest::cli
