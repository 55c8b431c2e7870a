#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "sdtest/core.hpp"
#include "sdtest/models.hpp"
#include "sdtest/noise.hpp"
#include "sdtest/random.hpp"

namespace sdtest {

enum class Mode {
    transmissive,  // particle continues only while every outcome equals pass_outcome
    recording,     // non-absorbing: every step is measured and recorded
};

inline std::string to_string(Mode m) { return m == Mode::transmissive ? "transmissive" : "recording"; }

/// Alternating measurement schedule: obs_a at even steps, obs_b at odd steps,
/// consecutive measurements dt seconds apart.
struct Protocol {
    Observable obs_a = observable_from_angles(0.0, 0.0, "A");
    Observable obs_b = observable_from_angles(std::numbers::pi / 2, 0.0, "B");
    double dt = 1.0;
    std::size_t max_steps = 20;
    Mode mode = Mode::recording;
    Outcome pass_outcome = Outcome::plus();
    bool allow_equal_directions = false;  // set when deliberately testing theta = 0

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) {
            throw std::invalid_argument("Protocol: dt must be finite and > 0");
        }
        if (max_steps < 1) {
            throw std::invalid_argument("Protocol: max_steps must be >= 1");
        }
        if (obs_a.label() == obs_b.label()) {
            throw std::invalid_argument("Protocol: observables need distinct labels");
        }
        if (!allow_equal_directions && obs_a.direction() == obs_b.direction()) {
            throw std::invalid_argument(
                "Protocol: obs_a and obs_b share a direction; set allow_equal_directions to test theta = 0");
        }
    }

    /// Observable measured at `step`.
    const Observable& observable_at(std::size_t step) const { return step % 2 == 0 ? obs_a : obs_b; }

    /// 0 for obs_a, 1 for obs_b; throws for unknown labels.
    int index_of(const std::string& label) const {
        if (label == obs_a.label()) return 0;
        if (label == obs_b.label()) return 1;
        throw std::invalid_argument("Protocol: unknown observable label '" + label + "'");
    }

    double theta() const { return angle_between(obs_a, obs_b); }

    bool operator==(const Protocol&) const = default;
};

/// Protocol with obs_a along +z and obs_b at polar angle theta in the xz-plane.
inline Protocol make_protocol(double theta, double dt, std::size_t max_steps, Mode mode) {
    Protocol p;
    p.obs_a = observable_from_angles(0.0, 0.0, "A");
    p.obs_b = observable_from_angles(theta, 0.0, "B");
    p.dt = dt;
    p.max_steps = max_steps;
    p.mode = mode;
    p.allow_equal_directions = (theta == 0.0);
    p.validate();
    return p;
}

struct ModelSpec {
    enum class Kind { qm, hidden_variable };
    enum class InitialLambda { uniform, fixed };

    Kind kind = Kind::qm;
    QubitState initial_state = QubitState::maximally_mixed();  // qm
    InitialLambda initial_lambda = InitialLambda::uniform;     // hidden_variable
    Vec3 fixed_lambda{0.0, 0.0, 1.0};                          // used when initial_lambda == fixed
    double tau = std::numeric_limits<double>::infinity();      // seconds; +inf = noiseless
    DisturbanceKernel kernel = DisturbanceKernel::redraw();

    static ModelSpec qm(QubitState initial = QubitState::maximally_mixed()) {
        ModelSpec m;
        m.initial_state = initial;
        return m;
    }
    static ModelSpec hidden_variable(double tau, DisturbanceKernel kernel = DisturbanceKernel::redraw()) {
        ModelSpec m;
        m.kind = Kind::hidden_variable;
        m.tau = tau;
        m.kernel = kernel;
        return m;
    }

    void validate() const {
        if (!(tau > 0.0)) {
            throw std::invalid_argument("ModelSpec: tau must be > 0 (use +infinity for no noise)");
        }
        kernel.validate();
        if (kind == Kind::hidden_variable && initial_lambda == InitialLambda::fixed) {
            (void)HiddenVariable{fixed_lambda};
        }
    }

    bool operator==(const ModelSpec&) const = default;
};

inline std::string to_string(ModelSpec::Kind k) { return k == ModelSpec::Kind::qm ? "qm" : "hidden_variable"; }

/// Outcomes of one run. outcomes[k] is the result at step k, taken on
/// Protocol::observable_at(k). In transmissive mode the absorbing outcome is
/// the last entry and absorbed_at is its step.
struct MeasurementRecord {
    std::vector<Outcome> outcomes;
    std::optional<std::size_t> absorbed_at;
    rng::SeedPath seed_path;

    /// Outcomes of one observable (0 = obs_a, 1 = obs_b) in measurement order.
    std::vector<int> subsequence(int observable_index) const {
        std::vector<int> out;
        out.reserve(outcomes.size() / 2 + 1);
        for (std::size_t k = static_cast<std::size_t>(observable_index); k < outcomes.size(); k += 2) {
            out.push_back(outcomes[k].value());
        }
        return out;
    }

    /// "+-++" style encoding.
    std::string outcome_string() const {
        std::string s;
        s.reserve(outcomes.size());
        for (const Outcome o : outcomes) s.push_back(o.symbol());
        return s;
    }

    bool operator==(const MeasurementRecord&) const = default;
};

struct EnsembleResult {
    Protocol protocol;
    ModelSpec model;
    std::vector<MeasurementRecord> records;
    std::uint64_t master_seed = 0;

    bool operator==(const EnsembleResult&) const = default;
};

namespace detail {

inline bool absorbs(const Protocol& protocol, Outcome s) {
    return protocol.mode == Mode::transmissive && s != protocol.pass_outcome;
}

inline MeasurementRecord run_qm(const ModelSpec& model, const Protocol& protocol, rng::SeedPath path) {
    MeasurementRecord rec;
    rec.seed_path = path;
    rec.outcomes.reserve(protocol.max_steps);
    QubitState state = model.initial_state;
    for (std::size_t step = 0; step < protocol.max_steps; ++step) {
        auto stream = path.stream(step, rng::Purpose::measurement);
        const auto [s, next] = qm_measure(state, protocol.observable_at(step), stream.uniform());
        rec.outcomes.push_back(s);
        state = next;
        if (absorbs(protocol, s)) {
            rec.absorbed_at = step;
            break;
        }
    }
    return rec;
}

template <OutcomeRule Rule>
MeasurementRecord run_hv(const ModelSpec& model, const Protocol& protocol, rng::SeedPath path,
                         const Rule& rule) {
    MeasurementRecord rec;
    rec.seed_path = path;
    rec.outcomes.reserve(protocol.max_steps);
    HiddenVariable hv = [&] {
        if (model.initial_lambda == ModelSpec::InitialLambda::fixed) {
            return HiddenVariable{model.fixed_lambda};
        }
        auto init = path.stream(0, rng::Purpose::initial_state);
        return HiddenVariable{rng::uniform_on_sphere(init)};
    }();
    for (std::size_t step = 0; step < protocol.max_steps; ++step) {
        // Step 0 reads the prepared lambda; later steps first see the
        // disturbances accumulated over the preceding interval dt.
        if (step > 0) {
            auto count_stream = path.stream(step, rng::Purpose::disturbance_count);
            const std::uint64_t count = sample_disturbance_count(protocol.dt, model.tau, count_stream);
            auto kernel_stream = path.stream(step, rng::Purpose::disturbance_kernel);
            hv = apply_disturbances(hv, count, model.kernel, kernel_stream);
        }
        const Outcome s = rule(hv, protocol.observable_at(step));
        rec.outcomes.push_back(s);
        if (absorbs(protocol, s)) {
            rec.absorbed_at = step;
            break;
        }
    }
    return rec;
}

}  // namespace detail

/// One measurement sequence, fully determined by seed_path.
template <OutcomeRule Rule = SignRule>
MeasurementRecord run_sequence(const ModelSpec& model, const Protocol& protocol, rng::SeedPath seed_path,
                               const Rule& rule = Rule{}) {
    model.validate();
    protocol.validate();
    return model.kind == ModelSpec::Kind::qm ? detail::run_qm(model, protocol, seed_path)
                                             : detail::run_hv(model, protocol, seed_path, rule);
}

/// `size` independent runs; record i uses seed path (master_seed, i). The
/// result does not depend on `workers`.
template <OutcomeRule Rule = SignRule>
EnsembleResult run_ensemble(const ModelSpec& model, const Protocol& protocol, std::size_t size,
                            std::uint64_t master_seed, unsigned workers = 1, const Rule& rule = Rule{}) {
    if (size < 1) {
        throw std::invalid_argument("run_ensemble: size must be >= 1");
    }
    model.validate();
    protocol.validate();

    EnsembleResult result{protocol, model, std::vector<MeasurementRecord>(size), master_seed};
    auto run_one = [&](std::size_t i) {
        const rng::SeedPath path{master_seed, i};
        result.records[i] = model.kind == ModelSpec::Kind::qm ? detail::run_qm(model, protocol, path)
                                                              : detail::run_hv(model, protocol, path, rule);
    };

    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::min<std::size_t>(size, 1024))));
    if (workers == 1) {
        for (std::size_t i = 0; i < size; ++i) run_one(i);
        return result;
    }
    constexpr std::size_t kChunk = 256;
    std::atomic<std::size_t> next{0};
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t begin = next.fetch_add(kChunk);
                    if (begin >= size) break;
                    const std::size_t end = std::min(size, begin + kChunk);
                    for (std::size_t i = begin; i < end; ++i) run_one(i);
                }
            });
        }
    }
    return result;
}

}  // namespace sdtest
