#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "sdtest/feasibility.hpp"

using namespace sdtest;

namespace {
const DetectorParams kWorked{1e15, 1.0, 300.0, 1e-9};
}

TEST(BounceTime, Examples) {
    EXPECT_DOUBLE_EQ(bounce_time({PhysicalConstants::speed_of_light / 2}), 1.0);
    EXPECT_NEAR(bounce_time({1e-6}), oracle::kBounceOneMicron, 1e-28);
    EXPECT_NEAR(bounce_time({1e-2}), oracle::kBounceOneCentimetre, 1e-24);
    EXPECT_THROW(bounce_time({0.0}), std::invalid_argument);
    EXPECT_THROW(bounce_time({-1.0}), std::invalid_argument);
}

TEST(FeasibilityReport, WorkedExampleIsMeasurable) {
    const auto r = feasibility_report(kWorked, {1e-6});
    EXPECT_NEAR(r.tau_tilde, oracle::kTauTildeWorkedExample, 1e-12 * oracle::kTauTildeWorkedExample);
    EXPECT_NEAR(r.margin, oracle::kTauTildeWorkedExample / oracle::kBounceOneMicron, 1e-9 * r.margin);
    EXPECT_NEAR(r.margin, 9.4e6, 0.05e6);
    EXPECT_TRUE(r.measurable);
    EXPECT_EQ(r.threshold, 100.0);
}

TEST(FeasibilityReport, BoundaryIsInclusive) {
    // Choose L so that bounce_time == tau_tilde to the last bit.
    const double tau = thermal_autocorrelation_time(kWorked);
    double length = tau * PhysicalConstants::speed_of_light / 2.0;
    // Nudge to an exact tie if rounding left it one ulp off.
    for (int i = 0; i < 8 && bounce_time({length}) != tau; ++i) {
        length = bounce_time({length}) > tau ? std::nextafter(length, 0.0) : std::nextafter(length, 1.0);
    }
    ASSERT_EQ(bounce_time({length}), tau);
    const auto r = feasibility_report(kWorked, {length}, 1.0);
    EXPECT_EQ(r.margin, 1.0);
    EXPECT_TRUE(r.measurable);
}

TEST(FeasibilityReport, HotDetectorIsNotMeasurable) {
    const auto r = feasibility_report({1e15, 1.0, 3000.0, 1e-9}, {1e-6});
    EXPECT_LT(r.tau_tilde, r.bounce_time);
    EXPECT_FALSE(r.measurable);
}

TEST(FeasibilityReport, Errors) {
    EXPECT_THROW(feasibility_report(kWorked, {1e-6}, 0.5), std::invalid_argument);
    EXPECT_THROW(feasibility_report({1e15, 1.0, 10.0, 1e-9}, {1e-6}), std::out_of_range);
}

TEST(FeasibilityReport, LinearScalings) {
    const auto base = feasibility_report(kWorked, {1e-6});
    for (const double f : {2.0, 4.0, 0.5, 8.0}) {
        auto d = kWorked;
        d.recombination_time_s *= f;
        EXPECT_DOUBLE_EQ(feasibility_report(d, {1e-6}).margin, base.margin * f);
        d = kWorked;
        d.n_atoms *= f;
        EXPECT_DOUBLE_EQ(feasibility_report(d, {1e-6}).margin, base.margin / f);
        EXPECT_DOUBLE_EQ(feasibility_report(kWorked, {1e-6 * f}).margin, base.margin / f);
    }
}

TEST(ParameterSweep, SingletonMatchesReport) {
    const SweepGrid g{{1e15}, {1.0}, {300.0}, {1e-9}, {1e-6}};
    const auto rows = parameter_sweep(g);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].report, feasibility_report(kWorked, {1e-6}));
}

TEST(ParameterSweep, TwoByTwoOrderFirstAxisSlowest) {
    const SweepGrid g{{1e12, 1e15}, {1.0}, {200.0, 300.0}, {1e-9}, {1e-6}};
    const auto rows = parameter_sweep(g);
    ASSERT_EQ(rows.size(), 4u);
    const double expect[4][2] = {{1e12, 200.0}, {1e12, 300.0}, {1e15, 200.0}, {1e15, 300.0}};
    for (int i = 0; i < 4; ++i) {
        EXPECT_EQ(rows[i].detector.n_atoms, expect[i][0]);
        EXPECT_EQ(rows[i].detector.temperature_K, expect[i][1]);
    }
}

TEST(ParameterSweep, MarginStrictlyDecreasingInTemperature) {
    SweepGrid g{{1e15}, {1.0}, {}, {1e-9}, {1e-6}};
    for (double t = 100.0; t <= 1000.0; t += 25.0) g.temperature_K.push_back(t);
    const auto rows = parameter_sweep(g);
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i].report.margin, rows[i - 1].report.margin);
}

TEST(ParameterSweep, RowCapAndEmptyAxis) {
    SweepGrid g{{1e15, 2e15}, {1.0, 1.1}, {300.0}, {1e-9}, {1e-6, 2e-6}};
    EXPECT_THROW(parameter_sweep(g, 100.0, 7), SweepTooLarge);
    EXPECT_EQ(parameter_sweep(g, 100.0, 8).size(), 8u);
    g.band_gap_eV.clear();
    EXPECT_THROW(parameter_sweep(g), std::invalid_argument);
}

TEST(ParameterSweep, RowOrderIndependentOfWorkers) {
    SweepGrid g;
    for (int i = 0; i < 10; ++i) g.n_atoms.push_back(1e10 * (i + 1));
    for (int i = 0; i < 8; ++i) g.band_gap_eV.push_back(0.2 + 0.1 * i);
    for (int i = 0; i < 8; ++i) g.temperature_K.push_back(150.0 + 25.0 * i);
    g.recombination_time_s = {1e-10, 1e-9};
    g.mirror_separation_m = {1e-6, 1e-5, 1e-4, 1e-3};
    const auto one = parameter_sweep(g, 100.0, 1'000'000, 1);
    EXPECT_EQ(one.size(), 5120u);
    EXPECT_EQ(one, parameter_sweep(g, 100.0, 1'000'000, 4));
    EXPECT_EQ(one, parameter_sweep(g, 100.0, 1'000'000, 1));
}
