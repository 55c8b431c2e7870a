#pragma once

// JSON and CSV encodings of the toolkit's results.
//
// JSON numbers are written with nlohmann/json's shortest round-trip
// formatting, so reading a file back reproduces every double bit for bit.
// Non-finite values are written as the strings "inf", "-inf" and "nan".
// CSV files are for people and plotting tools: six significant digits in
// scientific notation, fixed column order.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdtest/analysis.hpp"
#include "sdtest/feasibility.hpp"
#include "sdtest/simulate.hpp"

namespace sdtest::io {

using nlohmann::json;

inline constexpr const char* kEnsembleFormat = "sdtest.ensemble";
inline constexpr int kEnsembleFormatVersion = 1;

/// Malformed or unreadable input file.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline json number(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

inline double to_double(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    }
    throw FormatError("expected a number, got " + j.dump());
}

/// Six significant digits, scientific notation.
inline std::string sci6(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.5e", v);
    return buf;
}

inline json vec3(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline Vec3 vec3_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3-vector, got " + j.dump());
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

// --- ensemble ---------------------------------------------------------------

inline json to_json(const Observable& o) { return {{"label", o.label()}, {"direction", vec3(o.direction())}}; }

inline Observable observable_from(const json& j) {
    return Observable{vec3_from(j.at("direction")), j.at("label").get<std::string>()};
}

inline json to_json(const Protocol& p) {
    return {{"obs_a", to_json(p.obs_a)},
            {"obs_b", to_json(p.obs_b)},
            {"dt", number(p.dt)},
            {"max_steps", p.max_steps},
            {"mode", to_string(p.mode)},
            {"pass_outcome", p.pass_outcome.value()},
            {"allow_equal_directions", p.allow_equal_directions}};
}

inline Mode mode_from(const std::string& s) {
    if (s == "transmissive") return Mode::transmissive;
    if (s == "recording") return Mode::recording;
    throw FormatError("unknown mode '" + s + "'");
}

inline Protocol protocol_from(const json& j) {
    Protocol p;
    p.obs_a = observable_from(j.at("obs_a"));
    p.obs_b = observable_from(j.at("obs_b"));
    p.dt = to_double(j.at("dt"));
    p.max_steps = j.at("max_steps").get<std::size_t>();
    p.mode = mode_from(j.at("mode").get<std::string>());
    p.pass_outcome = Outcome{j.at("pass_outcome").get<int>()};
    p.allow_equal_directions = j.value("allow_equal_directions", false);
    p.validate();
    return p;
}

inline json to_json(const ModelSpec& m) {
    return {{"kind", to_string(m.kind)},
            {"initial_state", vec3(m.initial_state.bloch())},
            {"initial_lambda", m.initial_lambda == ModelSpec::InitialLambda::uniform ? "uniform" : "fixed"},
            {"fixed_lambda", vec3(m.fixed_lambda)},
            {"tau", number(m.tau)},
            {"kernel", {{"kind", to_string(m.kernel.kind)}, {"diffusion_angle", number(m.kernel.diffusion_angle)}}}};
}

inline ModelSpec model_from(const json& j) {
    ModelSpec m;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "qm") {
        m.kind = ModelSpec::Kind::qm;
    } else if (kind == "hidden_variable") {
        m.kind = ModelSpec::Kind::hidden_variable;
    } else {
        throw FormatError("unknown model kind '" + kind + "'");
    }
    m.initial_state = QubitState{vec3_from(j.at("initial_state"))};
    const auto init = j.at("initial_lambda").get<std::string>();
    if (init != "uniform" && init != "fixed") throw FormatError("unknown initial_lambda '" + init + "'");
    m.initial_lambda = init == "uniform" ? ModelSpec::InitialLambda::uniform : ModelSpec::InitialLambda::fixed;
    m.fixed_lambda = vec3_from(j.at("fixed_lambda"));
    m.tau = to_double(j.at("tau"));
    const auto& k = j.at("kernel");
    const auto kk = k.at("kind").get<std::string>();
    if (kk != "redraw" && kk != "diffusion") throw FormatError("unknown kernel kind '" + kk + "'");
    m.kernel.kind = kk == "redraw" ? DisturbanceKernel::Kind::redraw : DisturbanceKernel::Kind::diffusion;
    m.kernel.diffusion_angle = to_double(k.at("diffusion_angle"));
    m.validate();
    return m;
}

inline json to_json(const EnsembleResult& e) {
    json records = json::array();
    for (const auto& r : e.records) {
        records.push_back({{"run_index", r.seed_path.run_index},
                           {"outcomes", r.outcome_string()},
                           {"absorbed_at", r.absorbed_at ? json(*r.absorbed_at) : json(nullptr)}});
    }
    return {{"format", kEnsembleFormat},
            {"version", kEnsembleFormatVersion},
            {"master_seed", e.master_seed},
            {"protocol", to_json(e.protocol)},
            {"model", to_json(e.model)},
            {"records", std::move(records)}};
}

inline EnsembleResult ensemble_from(const json& j) {
    try {
        if (j.value("format", std::string{}) != kEnsembleFormat) {
            throw FormatError("not an ensemble file (format field missing or wrong)");
        }
        EnsembleResult e;
        e.master_seed = j.at("master_seed").get<std::uint64_t>();
        e.protocol = protocol_from(j.at("protocol"));
        e.model = model_from(j.at("model"));
        for (const auto& r : j.at("records")) {
            MeasurementRecord rec;
            rec.seed_path = {e.master_seed, r.at("run_index").get<std::uint64_t>()};
            for (const char c : r.at("outcomes").get<std::string>()) {
                if (c != '+' && c != '-') throw FormatError("bad outcome character in record");
                rec.outcomes.push_back(c == '+' ? Outcome::plus() : Outcome::minus());
            }
            if (rec.outcomes.empty()) throw FormatError("record with no outcomes");
            if (!r.at("absorbed_at").is_null()) rec.absorbed_at = r.at("absorbed_at").get<std::size_t>();
            e.records.push_back(std::move(rec));
        }
        return e;
    } catch (const json::exception& ex) {
        throw FormatError(std::string("malformed ensemble JSON: ") + ex.what());
    } catch (const std::invalid_argument& ex) {
        throw FormatError(std::string("invalid ensemble contents: ") + ex.what());
    }
}

/// One row per (run, step): run_index,step,observable_label,outcome,absorbed.
inline std::string ensemble_csv(const EnsembleResult& e) {
    std::ostringstream os;
    os << "run_index,step,observable_label,outcome,absorbed\n";
    for (const auto& r : e.records) {
        for (std::size_t k = 0; k < r.outcomes.size(); ++k) {
            const bool absorbed = r.absorbed_at && *r.absorbed_at == k;
            os << r.seed_path.run_index << ',' << k << ',' << e.protocol.observable_at(k).label() << ','
               << r.outcomes[k].value() << ',' << (absorbed ? 1 : 0) << '\n';
        }
    }
    return os.str();
}

// --- analysis ---------------------------------------------------------------

inline json to_json(const CorrSeries& c) {
    json est = json::array();
    json se = json::array();
    for (std::size_t i = 0; i < c.size(); ++i) {
        est.push_back(number(c.estimates[i]));
        se.push_back(number(c.std_errors[i]));
    }
    return {{"label", c.label},
            {"estimator", to_string(c.estimator)},
            {"lag_step", number(c.lag_step)},
            {"conditioned_on_survival", c.conditioned_on_survival},
            {"kappas", c.kappas},
            {"estimates", est},
            {"std_errors", se},
            {"n_samples", c.n_samples},
            {"warnings", c.warnings}};
}

inline CorrSeries corr_series_from(const json& j) {
    CorrSeries c;
    c.label = j.at("label").get<std::string>();
    const auto est = j.at("estimator").get<std::string>();
    c.estimator = est == "lagged" ? CorrEstimator::lagged : CorrEstimator::first_reference;
    c.lag_step = to_double(j.at("lag_step"));
    c.conditioned_on_survival = j.at("conditioned_on_survival").get<bool>();
    c.kappas = j.at("kappas").get<std::vector<unsigned>>();
    for (const auto& v : j.at("estimates")) c.estimates.push_back(to_double(v));
    for (const auto& v : j.at("std_errors")) c.std_errors.push_back(to_double(v));
    c.n_samples = j.at("n_samples").get<std::vector<std::size_t>>();
    c.warnings = j.at("warnings").get<std::vector<std::string>>();
    return c;
}

inline json to_json(const FitResult& f) {
    return {{"tau_hat", number(f.tau_hat)},
            {"ci_low", number(f.ci_low)},
            {"ci_high", number(f.ci_high)},
            {"ci_level", f.ci_level},
            {"method", to_string(f.method)},
            {"degenerate", f.degenerate},
            {"n_points", f.n_points},
            {"bootstrap_resamples", f.bootstrap_resamples},
            {"goodness", {{"chi2", number(f.goodness.chi2)}, {"dof", f.goodness.dof}, {"rmse", number(f.goodness.rmse)}}}};
}

/// Plot-ready table: kappa, lag_time, estimate, std_error, n_samples,
/// model_prediction = exp(-lag_time / tau_hat).
inline std::string corr_csv(const CorrSeries& c, const FitResult* fit) {
    std::ostringstream os;
    os << "kappa,lag_time,estimate,std_error,n_samples,model_prediction\n";
    for (std::size_t i = 0; i < c.size(); ++i) {
        os << c.kappas[i] << ',' << sci6(c.lag_time(i)) << ',' << sci6(c.estimates[i]) << ','
           << sci6(c.std_errors[i]) << ',' << c.n_samples[i] << ',';
        if (fit) os << sci6(std::exp(-c.lag_time(i) / fit->tau_hat));
        os << '\n';
    }
    return os.str();
}

inline std::string fit_csv(const FitResult& f) {
    std::ostringstream os;
    os << "method,tau_hat,ci_low,ci_high,ci_level,degenerate,chi2,dof,rmse\n"
       << to_string(f.method) << ',' << sci6(f.tau_hat) << ',' << sci6(f.ci_low) << ',' << sci6(f.ci_high) << ','
       << sci6(f.ci_level) << ',' << (f.degenerate ? 1 : 0) << ',' << sci6(f.goodness.chi2) << ',' << f.goodness.dof
       << ',' << sci6(f.goodness.rmse) << '\n';
    return os.str();
}

inline json to_json(const TestResult& t) {
    return {{"statistic", number(t.statistic)},
            {"p_value", number(t.p_value)},
            {"verdict", to_string(t.verdict)},
            {"alpha", number(t.alpha)},
            {"rho_hat", number(t.rho_hat)},
            {"tau_hat", number(t.tau_hat)},
            {"transitions", t.transitions},
            {"agreements", t.agreements},
            {"bootstrap_resamples", t.bootstrap_resamples}};
}

inline std::string test_csv(const TestResult& t) {
    std::ostringstream os;
    os << "statistic,p_value,verdict,alpha,rho_hat,tau_hat,transitions,agreements\n"
       << sci6(t.statistic) << ',' << sci6(t.p_value) << ',' << to_string(t.verdict) << ',' << sci6(t.alpha) << ','
       << sci6(t.rho_hat) << ',' << sci6(t.tau_hat) << ',' << t.transitions << ',' << t.agreements << '\n';
    return os.str();
}

inline json to_json(const std::vector<SurvivalPoint>& s) {
    json arr = json::array();
    for (const auto& p : s) {
        arr.push_back({{"kappa", p.kappa}, {"survival", number(p.survival)}, {"std_error", number(p.std_error)},
                       {"survivors", p.survivors}});
    }
    return arr;
}

inline std::string survival_csv(const std::vector<SurvivalPoint>& s) {
    std::ostringstream os;
    os << "kappa,survival,std_error,survivors\n";
    for (const auto& p : s) {
        os << p.kappa << ',' << sci6(p.survival) << ',' << sci6(p.std_error) << ',' << p.survivors << '\n';
    }
    return os.str();
}

// --- feasibility ------------------------------------------------------------

inline json to_json(const FeasibilityReport& r) {
    return {{"tau_tilde", number(r.tau_tilde)},
            {"bounce_time", number(r.bounce_time)},
            {"margin", number(r.margin)},
            {"measurable", r.measurable},
            {"threshold", number(r.threshold)}};
}

inline const char* kSweepHeader =
    "n_atoms,band_gap_eV,temperature_K,recombination_time_s,mirror_separation_m,tau_tilde,bounce_time,margin,"
    "measurable\n";

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << kSweepHeader;
    for (const auto& r : rows) {
        os << sci6(r.detector.n_atoms) << ',' << sci6(r.detector.band_gap_eV) << ',' << sci6(r.detector.temperature_K)
           << ',' << sci6(r.detector.recombination_time_s) << ',' << sci6(r.cavity.mirror_separation_m) << ','
           << sci6(r.report.tau_tilde) << ',' << sci6(r.report.bounce_time) << ',' << sci6(r.report.margin) << ','
           << (r.report.measurable ? "true" : "false") << '\n';
    }
    return os.str();
}

inline json sweep_json(const std::vector<SweepRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows) {
        // 6 significant digits to match the CSV table.
        auto s6 = [](double v) { return number(std::stod(sci6(v))); };
        arr.push_back({{"n_atoms", s6(r.detector.n_atoms)},
                       {"band_gap_eV", s6(r.detector.band_gap_eV)},
                       {"temperature_K", s6(r.detector.temperature_K)},
                       {"recombination_time_s", s6(r.detector.recombination_time_s)},
                       {"mirror_separation_m", s6(r.cavity.mirror_separation_m)},
                       {"tau_tilde", s6(r.report.tau_tilde)},
                       {"bounce_time", s6(r.report.bounce_time)},
                       {"margin", s6(r.report.margin)},
                       {"measurable", r.report.measurable},
                       {"threshold", s6(r.report.threshold)}});
    }
    return arr;
}

// --- files ------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read input file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json read_json_file(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& ex) {
        throw FormatError("'" + path + "' is not valid JSON: " + ex.what());
    }
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write output file '" + path + "'");
    out << content;
    if (!out) throw std::runtime_error("failed writing output file '" + path + "'");
}

inline void write_json_file(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

}  // namespace sdtest::io
