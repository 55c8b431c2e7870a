#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "sdtest/core.hpp"

namespace sdtest {

/// Spin-1/2 state in Bloch-vector form. |bloch| = 1 for pure states, < 1 for
/// mixed ones.
class QubitState {
public:
    QubitState() = default;
    explicit QubitState(Vec3 bloch) : bloch_(bloch) {
        if (!is_finite(bloch_) || norm(bloch_) > 1.0 + kUnitTolerance) {
            throw std::invalid_argument("QubitState: Bloch vector must be finite with length <= 1");
        }
    }

    static QubitState maximally_mixed() { return QubitState{}; }
    static QubitState eigenstate(const Observable& obs, Outcome s) {
        return QubitState{obs.direction() * static_cast<double>(s.value())};
    }

    const Vec3& bloch() const { return bloch_; }
    bool operator==(const QubitState&) const = default;

private:
    Vec3 bloch_{};
};

/// Hidden variable of the deterministic model: a unit vector that fixes every
/// outcome.
class HiddenVariable {
public:
    explicit HiddenVariable(Vec3 lambda) : lambda_(lambda) {
        const double n = norm(lambda_);
        if (!is_finite(lambda_) || std::abs(n - 1.0) > 1e-9) {
            throw std::invalid_argument("HiddenVariable: lambda must be a unit vector");
        }
        if (std::abs(n - 1.0) > kUnitTolerance) {
            lambda_ = lambda_ * (1.0 / n);
        }
    }

    const Vec3& lambda() const { return lambda_; }
    bool operator==(const HiddenVariable&) const = default;

private:
    Vec3 lambda_;
};

/// Born rule: P(+1) = (1 + r.n) / 2.
inline double born_plus_probability(const QubitState& state, const Observable& obs) {
    const double p = 0.5 * (1.0 + dot(state.bloch(), obs.direction()));
    return std::clamp(p, 0.0, 1.0);
}

/// Projective measurement. Outcome is +1 iff u < P(+1); the state collapses
/// onto the corresponding eigenstate.
inline std::pair<Outcome, QubitState> qm_measure(const QubitState& state, const Observable& obs,
                                                 double u) {
    const Outcome s = u < born_plus_probability(state, obs) ? Outcome::plus() : Outcome::minus();
    return {s, QubitState::eigenstate(obs, s)};
}

/// Hemispheric sign rule: +1 if lambda.n >= 0, else -1. The measure-zero tie
/// lambda.n == 0 resolves to +1.
struct SignRule {
    Outcome operator()(const HiddenVariable& hv, const Observable& obs) const {
        return dot(hv.lambda(), obs.direction()) >= 0.0 ? Outcome::plus() : Outcome::minus();
    }
};

/// Any deterministic map (HiddenVariable, Observable) -> Outcome can stand in
/// for SignRule in the simulator and the posterior estimate.
template <class R>
concept OutcomeRule = requires(const R& r, const HiddenVariable& hv, const Observable& obs) {
    { r(hv, obs) } -> std::convertible_to<Outcome>;
};

inline Outcome hv_outcome(const HiddenVariable& hv, const Observable& obs) {
    return SignRule{}(hv, obs);
}

/// Exact correlation E[s_0 s_kappa] of the same-observable subsequence in
/// QM recording mode when two observables at angle theta alternate:
/// each intermediate measurement contributes a factor cos(theta).
inline double qm_same_observable_autocorr_analytic(double theta, unsigned kappa) {
    if (!(theta >= 0.0 && theta <= std::numbers::pi)) {
        throw std::invalid_argument("qm_same_observable_autocorr_analytic: theta must lie in [0, pi]");
    }
    if (kappa == 0) {
        return 1.0;
    }
    return std::pow(std::cos(theta), 2.0 * kappa);
}

}  // namespace sdtest
