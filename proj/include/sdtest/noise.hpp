#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

#include "sdtest/core.hpp"
#include "sdtest/models.hpp"
#include "sdtest/random.hpp"

namespace sdtest {

/// Photodetector parameters that set the thermal noise timescale.
struct DetectorParams {
    double n_atoms = 1e15;             // N
    double band_gap_eV = 1.0;          // Delta E
    double temperature_K = 300.0;      // T
    double recombination_time_s = 1e-9;  // tau_r

    void validate() const {
        auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
        if (!positive(n_atoms) || n_atoms < 1.0) {
            throw std::invalid_argument("DetectorParams: n_atoms must be finite and >= 1");
        }
        if (!positive(band_gap_eV)) {
            throw std::invalid_argument("DetectorParams: band_gap_eV must be finite and > 0");
        }
        if (!positive(temperature_K)) {
            throw std::invalid_argument("DetectorParams: temperature_K must be finite and > 0");
        }
        if (!positive(recombination_time_s)) {
            throw std::invalid_argument("DetectorParams: recombination_time_s must be finite and > 0");
        }
    }

    bool operator==(const DetectorParams&) const = default;
};

inline constexpr double kMaxBoltzmannExponent = 700.0;

/// Boltzmann exponent Delta E / (k_B T).
inline double boltzmann_exponent(const DetectorParams& det) {
    return det.band_gap_eV / (PhysicalConstants::boltzmann_eV_per_K * det.temperature_K);
}

/// Time for N atoms to undergo a thermally driven statistical change:
/// exp(Delta E / k_B T) * tau_r / N, in seconds.
inline double thermal_autocorrelation_time(const DetectorParams& det) {
    det.validate();
    const double x = boltzmann_exponent(det);
    if (x > kMaxBoltzmannExponent) {
        std::ostringstream msg;
        msg << "thermal_autocorrelation_time: Boltzmann exponent band_gap/(k_B*T) = " << x
            << " exceeds overflow guard " << kMaxBoltzmannExponent;
        throw std::out_of_range(msg.str());
    }
    return std::exp(x) * det.recombination_time_s / det.n_atoms;
}

/// Survival probability of a homogeneous Poisson process over dt.
/// tau = +infinity means no disturbances at all.
inline double no_disturbance_probability(double dt, double tau) {
    if (!(dt >= 0.0)) {
        throw std::invalid_argument("no_disturbance_probability: dt must be >= 0");
    }
    if (!(tau > 0.0)) {
        throw std::invalid_argument("no_disturbance_probability: tau must be > 0");
    }
    if (std::isinf(tau)) {
        return 1.0;
    }
    return std::exp(-dt / tau);
}

namespace detail {

inline constexpr double kInversionMaxMean = 30.0;

template <class Rng>
std::uint64_t poisson_inversion(Rng& rng, double mean) {
    const double u = rng.uniform();
    double p = std::exp(-mean);
    double cdf = p;
    std::uint64_t k = 0;
    while (u >= cdf) {
        ++k;
        p *= mean / static_cast<double>(k);
        if (p == 0.0) {
            break;
        }
        cdf += p;
    }
    return k;
}

// Hormann's transformed rejection with squeeze (PTRS), valid for mean >= 10.
template <class Rng>
std::uint64_t poisson_ptrs(Rng& rng, double mean) {
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        const double u = rng.uniform() - 0.5;
        const double v = rng.uniform();
        const double us = 0.5 - std::abs(u);
        const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= vr) {
            return static_cast<std::uint64_t>(k);
        }
        if (k < 0.0 || (us < 0.013 && v > us)) {
            continue;
        }
        if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
            -mean + k * loglam - std::lgamma(k + 1.0)) {
            return static_cast<std::uint64_t>(k);
        }
    }
}

}  // namespace detail

/// Poisson(mean) draw. Inversion for small means, PTRS above.
template <class Rng>
std::uint64_t sample_poisson(Rng& rng, double mean) {
    if (!(mean >= 0.0) || !std::isfinite(mean)) {
        throw std::invalid_argument("sample_poisson: mean must be finite and >= 0");
    }
    if (mean == 0.0) {
        return 0;
    }
    return mean <= detail::kInversionMaxMean ? detail::poisson_inversion(rng, mean)
                                             : detail::poisson_ptrs(rng, mean);
}

/// Number of disturbance events in an interval dt for a homogeneous Poisson
/// process of timescale tau (rate 1/tau).
template <class Rng>
std::uint64_t sample_disturbance_count(double dt, double tau, Rng& rng) {
    if (!(dt >= 0.0)) {
        throw std::invalid_argument("sample_disturbance_count: dt must be >= 0");
    }
    if (!(tau > 0.0)) {
        throw std::invalid_argument("sample_disturbance_count: tau must be > 0");
    }
    if (std::isinf(tau) || dt == 0.0) {
        return 0;
    }
    return sample_poisson(rng, dt / tau);
}

/// What one disturbance event does to the hidden variable.
struct DisturbanceKernel {
    enum class Kind { redraw, diffusion };

    Kind kind = Kind::redraw;
    double diffusion_angle = 0.0;  // radians, diffusion only

    static DisturbanceKernel redraw() { return {}; }
    static DisturbanceKernel diffusion(double angle) {
        DisturbanceKernel k{Kind::diffusion, angle};
        k.validate();
        return k;
    }

    void validate() const {
        if (kind == Kind::diffusion &&
            !(diffusion_angle > 0.0 && diffusion_angle <= std::numbers::pi)) {
            throw std::invalid_argument("DisturbanceKernel: diffusion_angle must lie in (0, pi]");
        }
    }

    bool operator==(const DisturbanceKernel&) const = default;
};

inline std::string to_string(DisturbanceKernel::Kind k) {
    return k == DisturbanceKernel::Kind::redraw ? "redraw" : "diffusion";
}

/// Rodrigues rotation of v about unit axis by angle.
inline Vec3 rotate(const Vec3& v, const Vec3& axis, double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return v * c + cross(axis, v) * s + axis * (dot(axis, v) * (1.0 - c));
}

/// Apply `count` disturbance events. Redraw: any count >= 1 gives a fresh
/// uniform lambda. Diffusion: count independent rotations by diffusion_angle
/// about uniformly random axes.
template <class Rng>
HiddenVariable apply_disturbances(const HiddenVariable& hv, std::uint64_t count,
                                  const DisturbanceKernel& kernel, Rng& rng) {
    if (count == 0) {
        return hv;
    }
    if (kernel.kind == DisturbanceKernel::Kind::redraw) {
        return HiddenVariable{rng::uniform_on_sphere(rng)};
    }
    kernel.validate();
    Vec3 v = hv.lambda();
    for (std::uint64_t i = 0; i < count; ++i) {
        v = rotate(v, rng::uniform_on_sphere(rng), kernel.diffusion_angle);
    }
    return HiddenVariable{v * (1.0 / norm(v))};
}

}  // namespace sdtest
