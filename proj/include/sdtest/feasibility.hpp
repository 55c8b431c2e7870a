#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "sdtest/core.hpp"
#include "sdtest/noise.hpp"

namespace sdtest {

struct CavityParams {
    double mirror_separation_m = 1e-6;

    void validate() const {
        if (!(mirror_separation_m > 0.0) || !std::isfinite(mirror_separation_m)) {
            throw std::invalid_argument("CavityParams: mirror_separation_m must be finite and > 0");
        }
    }

    bool operator==(const CavityParams&) const = default;
};

/// Photon round trip between the mirrors, 2 L / c.
inline double bounce_time(const CavityParams& cavity) {
    cavity.validate();
    return 2.0 * cavity.mirror_separation_m / PhysicalConstants::speed_of_light;
}

inline constexpr double kDefaultMeasurabilityThreshold = 100.0;

struct FeasibilityReport {
    double tau_tilde = 0.0;    // s
    double bounce_time = 0.0;  // s
    double margin = 0.0;       // tau_tilde / bounce_time
    bool measurable = false;   // margin >= threshold
    double threshold = kDefaultMeasurabilityThreshold;

    bool operator==(const FeasibilityReport&) const = default;
};

/// Compares the thermal autocorrelation time with the bounce time.
inline FeasibilityReport feasibility_report(const DetectorParams& det, const CavityParams& cavity,
                                            double threshold = kDefaultMeasurabilityThreshold) {
    if (!(threshold >= 1.0) || !std::isfinite(threshold)) {
        throw std::invalid_argument("feasibility_report: threshold must be finite and >= 1");
    }
    FeasibilityReport r;
    r.tau_tilde = thermal_autocorrelation_time(det);
    r.bounce_time = bounce_time(cavity);
    r.margin = r.tau_tilde / r.bounce_time;
    r.threshold = threshold;
    r.measurable = r.margin >= threshold;
    return r;
}

/// Grid axes for parameter_sweep, in sweep (lexicographic) order: the first
/// axis varies slowest.
struct SweepGrid {
    std::vector<double> n_atoms;
    std::vector<double> band_gap_eV;
    std::vector<double> temperature_K;
    std::vector<double> recombination_time_s;
    std::vector<double> mirror_separation_m;

    static constexpr std::array<const char*, 5> axis_names{
        "n_atoms", "band_gap_eV", "temperature_K", "recombination_time_s", "mirror_separation_m"};

    std::array<const std::vector<double>*, 5> axes() const {
        return {&n_atoms, &band_gap_eV, &temperature_K, &recombination_time_s, &mirror_separation_m};
    }
};

struct SweepRow {
    DetectorParams detector;
    CavityParams cavity;
    FeasibilityReport report;

    bool operator==(const SweepRow&) const = default;
};

/// Grid larger than the configured row cap.
struct SweepTooLarge : std::length_error {
    using std::length_error::length_error;
};

inline constexpr std::size_t kDefaultMaxSweepRows = 1'000'000;

/// Cartesian product of the grid axes, one report per row. Row order is
/// lexicographic in axis order regardless of `workers`.
inline std::vector<SweepRow> parameter_sweep(const SweepGrid& grid, double threshold = kDefaultMeasurabilityThreshold,
                                             std::size_t max_rows = kDefaultMaxSweepRows, unsigned workers = 1) {
    const auto axes = grid.axes();
    std::size_t rows = 1;
    for (std::size_t a = 0; a < axes.size(); ++a) {
        if (axes[a]->empty()) {
            throw std::invalid_argument(std::string("parameter_sweep: axis '") + SweepGrid::axis_names[a] +
                                        "' is empty");
        }
        rows = std::min(rows * axes[a]->size(), max_rows + 1);
    }
    if (rows > max_rows) {
        throw SweepTooLarge("parameter_sweep: grid has more than " + std::to_string(max_rows) + " rows");
    }

    // Validate every axis value once, up front, so worker threads never throw.
    for (const double n : grid.n_atoms) DetectorParams{n, 1.0, 1.0, 1.0}.validate();
    for (const double e : grid.band_gap_eV) DetectorParams{1.0, e, 1.0, 1.0}.validate();
    for (const double t : grid.temperature_K) DetectorParams{1.0, 1.0, t, 1.0}.validate();
    for (const double r : grid.recombination_time_s) DetectorParams{1.0, 1.0, 1.0, r}.validate();
    for (const double l : grid.mirror_separation_m) CavityParams{l}.validate();
    for (const double e : grid.band_gap_eV) {
        for (const double t : grid.temperature_K) {
            if (boltzmann_exponent(DetectorParams{1.0, e, t, 1.0}) > kMaxBoltzmannExponent) {
                thermal_autocorrelation_time(DetectorParams{1.0, e, t, 1.0});  // throws with details
            }
        }
    }
    if (!(threshold >= 1.0) || !std::isfinite(threshold)) {
        throw std::invalid_argument("parameter_sweep: threshold must be finite and >= 1");
    }

    std::vector<SweepRow> out(rows);
    auto fill = [&](std::size_t row) {
        std::size_t rem = row;
        std::array<std::size_t, 5> idx{};
        for (std::size_t a = axes.size(); a-- > 0;) {
            idx[a] = rem % axes[a]->size();
            rem /= axes[a]->size();
        }
        SweepRow& r = out[row];
        r.detector = DetectorParams{grid.n_atoms[idx[0]], grid.band_gap_eV[idx[1]], grid.temperature_K[idx[2]],
                                    grid.recombination_time_s[idx[3]]};
        r.cavity = CavityParams{grid.mirror_separation_m[idx[4]]};
        r.report = feasibility_report(r.detector, r.cavity, threshold);
    };

    workers = std::max(1u, workers);
    if (workers == 1 || rows < 4096) {
        for (std::size_t i = 0; i < rows; ++i) fill(i);
        return out;
    }
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < rows; i += workers) fill(i);
        });
    }
    pool.clear();
    return out;
}

}  // namespace sdtest
