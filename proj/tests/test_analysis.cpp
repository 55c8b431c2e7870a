#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "oracles.hpp"
#include "sdtest/analysis.hpp"

using namespace sdtest;
constexpr double kPi = std::numbers::pi;
constexpr double kInfinity = std::numeric_limits<double>::infinity();

namespace {

CorrSeries synthetic_series(double tau, unsigned max_kappa, double sigma, rng::Stream* noise) {
    CorrSeries c;
    for (unsigned k = 0; k <= max_kappa; ++k) {
        c.kappas.push_back(k);
        double v = std::exp(-static_cast<double>(k) / tau);
        if (k > 0 && noise != nullptr) v += sigma * noise->normal();
        c.estimates.push_back(k == 0 ? 1.0 : v);
        c.std_errors.push_back(k == 0 ? 0.0 : sigma);
        c.n_samples.push_back(1000);
    }
    return c;
}

Constraint plus_along(double polar, double azimuth) {
    return {observable_from_angles(polar, azimuth, "O"), Outcome::plus()};
}

}  // namespace

// --- autocorrelation -------------------------------------------------------

TEST(Autocorrelation, LagZeroIsExactlyOne) {
    const auto ens = run_ensemble(ModelSpec::qm(), make_protocol(1.0, 1.0, 12, Mode::recording), 500, 3);
    for (const auto est : {CorrEstimator::first_reference, CorrEstimator::lagged}) {
        const auto c = estimate_autocorrelation(ens, "B", 5, {est, false});
        ASSERT_EQ(c.kappas.front(), 0u);
        EXPECT_EQ(c.estimates.front(), 1.0);
        for (const double v : c.estimates) {
            EXPECT_GE(v, -1.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Autocorrelation, NoiselessHiddenVariableIsFlatOne) {
    const auto ens = run_ensemble(ModelSpec::hidden_variable(kInfinity), make_protocol(kPi / 2, 1.0, 22, Mode::recording),
                                  2000, 5);
    const auto c = estimate_autocorrelation(ens, "A", 10);
    ASSERT_EQ(c.size(), 11u);
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_EQ(c.estimates[i], 1.0);
        EXPECT_EQ(c.std_errors[i], 0.0);
    }
}

TEST(Autocorrelation, RedrawKernelMatchesOracle) {
    const double dt = 1.0;
    const double tau = 10.0 * dt;
    const auto ens = run_ensemble(ModelSpec::hidden_variable(tau), make_protocol(kPi / 2, dt, 22, Mode::recording),
                                  10000, 11, 4);
    for (const char* label : {"A", "B"}) {
        const auto c = estimate_autocorrelation(ens, label, 10);
        ASSERT_EQ(c.size(), 11u);
        EXPECT_DOUBLE_EQ(c.lag_step, 2.0 * dt);
        for (std::size_t i = 0; i < c.size(); ++i) {
            const double expect = oracle::hv_redraw_corr(c.kappas[i], dt, tau);
            EXPECT_NEAR(c.estimates[i], expect, std::max(4 * c.std_errors[i], 1e-12)) << label << " " << c.kappas[i];
            EXPECT_NEAR(expect, std::exp(-c.lag_time(i) / tau), 1e-13);
        }
    }
}

TEST(Autocorrelation, LaggedEstimatorAgreesOnStationaryData) {
    const auto ens = run_ensemble(ModelSpec::hidden_variable(6.0), make_protocol(kPi / 2, 1.0, 30, Mode::recording),
                                  5000, 13, 4);
    const auto c = estimate_autocorrelation(ens, "A", 6, {CorrEstimator::lagged, false});
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_NEAR(c.estimates[i], oracle::hv_redraw_corr(c.kappas[i], 1.0, 6.0), std::max(4 * c.std_errors[i], 1e-12));
    }
}

TEST(Autocorrelation, OmitsUnderpopulatedLagsWithWarning) {
    const auto ens = run_ensemble(ModelSpec::qm(), make_protocol(kPi / 2, 1.0, 6, Mode::recording), 100, 1);
    const auto c = estimate_autocorrelation(ens, "A", 5);
    EXPECT_EQ(c.size(), 3u);  // A is measured at steps 0, 2, 4
    EXPECT_EQ(c.warnings.size(), 3u);
}

TEST(Autocorrelation, Errors) {
    EnsembleResult empty;
    empty.protocol = make_protocol(kPi / 2, 1.0, 4, Mode::recording);
    EXPECT_THROW(estimate_autocorrelation(empty, "A", 2), std::invalid_argument);

    const auto trans = run_ensemble(ModelSpec::qm(), make_protocol(kPi / 2, 1.0, 6, Mode::transmissive), 100, 1);
    EXPECT_THROW(estimate_autocorrelation(trans, "A", 2), std::invalid_argument);
    const auto flagged = estimate_autocorrelation(trans, "A", 2, {CorrEstimator::first_reference, true});
    EXPECT_TRUE(flagged.conditioned_on_survival);

    const auto rec = run_ensemble(ModelSpec::qm(), make_protocol(kPi / 2, 1.0, 6, Mode::recording), 100, 1);
    EXPECT_THROW(estimate_autocorrelation(rec, "C", 2), std::invalid_argument);
}

// --- fit --------------------------------------------------------------------

TEST(Fit, RecoversExactExponential) {
    const auto series = synthetic_series(5.0, 20, 0.0, nullptr);
    for (const auto method : {FitMethod::log_linear, FitMethod::mle}) {
        const auto fit = fit_exponential_decay(series, {method, 200});
        EXPECT_NEAR(fit.tau_hat, 5.0, 5e-6) << to_string(method);
        EXPECT_FALSE(fit.degenerate);
        EXPECT_LE(fit.ci_low, fit.tau_hat);
        EXPECT_GE(fit.ci_high, fit.tau_hat);
    }
}

TEST(Fit, FlatSeriesIsDegenerateInfinite) {
    CorrSeries ones;
    for (unsigned k = 0; k <= 10; ++k) {
        ones.kappas.push_back(k);
        ones.estimates.push_back(1.0);
        ones.std_errors.push_back(0.0);
        ones.n_samples.push_back(100);
    }
    for (const auto method : {FitMethod::log_linear, FitMethod::mle}) {
        const auto fit = fit_exponential_decay(ones, {method});
        EXPECT_TRUE(std::isinf(fit.tau_hat));
        EXPECT_TRUE(fit.degenerate);
    }
}

TEST(Fit, NonPositiveSeriesHasNoSignal) {
    CorrSeries c;
    for (unsigned k = 0; k <= 5; ++k) {
        c.kappas.push_back(k);
        c.estimates.push_back(k == 0 ? 1.0 : -0.01 * k);
        c.std_errors.push_back(0.01);
        c.n_samples.push_back(100);
    }
    EXPECT_THROW(fit_exponential_decay(c, {FitMethod::log_linear}), NoDecaySignal);
    EXPECT_THROW(fit_exponential_decay(c, {FitMethod::mle}), NoDecaySignal);
}

TEST(Fit, LogLinearNeedsThreePositivePoints) {
    auto c = synthetic_series(2.0, 5, 0.0, nullptr);
    for (std::size_t i = 2; i < c.size(); ++i) c.estimates[i] = -0.01;
    EXPECT_THROW(fit_exponential_decay(c, {FitMethod::log_linear}), std::invalid_argument);
    EXPECT_NO_THROW(fit_exponential_decay(c, {FitMethod::mle}));
}

TEST(Fit, CoverageWithGaussianNoise) {
    for (const auto method : {FitMethod::log_linear, FitMethod::mle}) {
        rng::Stream noise{2024, 0, 0};
        int covered = 0;
        for (int rep = 0; rep < 100; ++rep) {
            const auto series = synthetic_series(5.0, 20, 0.01, &noise);
            FitOptions opts{method};
            opts.lag_noise = LagNoise::independent;
            opts.seed = 1000 + static_cast<std::uint64_t>(rep);
            const auto fit = fit_exponential_decay(series, opts);
            covered += fit.ci_low <= 5.0 && 5.0 <= fit.ci_high;
        }
        EXPECT_GE(covered, 90) << to_string(method);
    }
}

TEST(Fit, ScaleFreeInLagUnits) {
    rng::Stream noise{9, 0, 0};
    auto series = synthetic_series(3.0, 12, 0.02, &noise);
    const double dt = 6.671281903963041e-15;
    for (const auto method : {FitMethod::log_linear, FitMethod::mle}) {
        series.lag_step = 1.0;
        const auto unit = fit_exponential_decay(series, {method, 300});
        series.lag_step = dt;
        const auto scaled = fit_exponential_decay(series, {method, 300});
        EXPECT_DOUBLE_EQ(scaled.tau_hat, unit.tau_hat * dt);
        EXPECT_DOUBLE_EQ(scaled.ci_low, unit.ci_low * dt);
        EXPECT_DOUBLE_EQ(scaled.ci_high, unit.ci_high * dt);
    }
}

TEST(Fit, SeedDeterministic) {
    rng::Stream noise{10, 0, 0};
    const auto series = synthetic_series(4.0, 10, 0.02, &noise);
    EXPECT_EQ(fit_exponential_decay(series), fit_exponential_decay(series));
}

TEST(Fit, RedrawModelRoundTripCoverage) {
    // Fit of the analytic redraw correlation, perturbed by the estimator's own
    // standard errors, recovers the generating tau inside the CI.
    const double tau = 10.0;
    const double se = 0.01;
    rng::Stream noise{31, 0, 0};
    int covered = 0;
    for (int rep = 0; rep < 100; ++rep) {
        CorrSeries c;
        c.lag_step = 2.0;
        for (unsigned k = 0; k <= 10; ++k) {
            c.kappas.push_back(k);
            c.estimates.push_back(k == 0 ? 1.0 : oracle::hv_redraw_corr(k, 1.0, tau) + se * noise.normal());
            c.std_errors.push_back(k == 0 ? 0.0 : se);
            c.n_samples.push_back(10000);
        }
        FitOptions opts;
        opts.lag_noise = LagNoise::independent;
        opts.seed = static_cast<std::uint64_t>(rep);
        const auto fit = fit_exponential_decay(c, opts);
        covered += fit.ci_low <= tau && tau <= fit.ci_high;
    }
    EXPECT_GE(covered, 90);
}

TEST(Fit, SharedReferenceFactorReproducesCorrelation) {
    const double rate = 0.2;
    std::vector<detail::Point> pts;
    for (unsigned k = 1; k <= 8; ++k) pts.push_back({static_cast<double>(k), 0.0, 1.0});
    const auto L = detail::shared_reference_factor(pts, rate);
    ASSERT_EQ(L.size(), 64u);
    auto c = [&](double a, double b) { return std::exp(-rate * std::abs(a - b)) - std::exp(-rate * (a + b)); };
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
            double ll = 0.0;
            for (std::size_t k = 0; k < 8; ++k) ll += L[i * 8 + k] * L[j * 8 + k];
            const double a = pts[i].kappa;
            const double b = pts[j].kappa;
            EXPECT_NEAR(ll, c(a, b) / std::sqrt(c(a, a) * c(b, b)), 1e-12);
        }
    }
    EXPECT_TRUE(detail::shared_reference_factor(pts, 0.0).empty());
}

TEST(Fit, EnsembleCoverageWithSharedReference) {
    // Real +-1 data: estimates at different lags share s_0 and are correlated.
    const auto protocol = make_protocol(kPi / 2, 1.0, 22, Mode::recording);
    const auto model = ModelSpec::hidden_variable(10.0);
    int covered = 0;
    for (int rep = 0; rep < 40; ++rep) {
        const auto ens = run_ensemble(model, protocol, 4000, 500 + static_cast<std::uint64_t>(rep), 4);
        FitOptions opts;
        opts.bootstrap_resamples = 400;
        opts.seed = static_cast<std::uint64_t>(rep);
        const auto fit = fit_exponential_decay(estimate_autocorrelation(ens, "A", 10), opts);
        covered += fit.ci_low <= 10.0 && 10.0 <= fit.ci_high;
    }
    EXPECT_GE(covered, 34);
}

// --- survival ---------------------------------------------------------------

TEST(Survival, QmOrthogonalHalvesEachStep) {
    const int n = 100000;
    const auto ens = run_ensemble(ModelSpec::qm(), make_protocol(kPi / 2, 1.0, 11, Mode::transmissive), n, 17, 4);
    const auto s = survival_curve(ens);
    ASSERT_EQ(s.size(), 11u);
    const double s0 = s[0].survival;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const double expect = std::pow(0.5, static_cast<double>(k));
        // Conditional on the first pass, survival to k is binomial in the survivors.
        const double m = static_cast<double>(s[0].survivors);
        EXPECT_NEAR(s[k].survival / s0, expect, 4 * std::sqrt(expect * (1 - expect) / m) + 1e-15) << k;
        if (k > 0) {
            EXPECT_LE(s[k].survival, s[k - 1].survival);
        }
    }
}

TEST(Survival, NoiselessHiddenVariableIsFlatAfterFirstCombination) {
    const auto ens = run_ensemble(ModelSpec::hidden_variable(kInfinity),
                                  make_protocol(kPi / 2, 1.0, 15, Mode::transmissive), 5000, 19);
    const auto s = survival_curve(ens);
    for (std::size_t k = 1; k < s.size(); ++k) EXPECT_EQ(s[k].survival, s[1].survival);
    // Passing A leaves B undetermined: half of the first passes fail at step 1.
    EXPECT_NEAR(s[1].survival / s[0].survival, 0.5, 4 * std::sqrt(0.25 / s[0].survivors));
}

TEST(Survival, NoiselessHiddenVariableParallelSettingIsFlat) {
    const auto ens = run_ensemble(ModelSpec::hidden_variable(kInfinity), make_protocol(0.0, 1.0, 15, Mode::transmissive),
                                  5000, 20);
    const auto s = survival_curve(ens);
    for (const auto& p : s) EXPECT_EQ(p.survival, s[0].survival);
}

TEST(Survival, FirstColumnIsFirstPassFraction) {
    const auto ens = run_ensemble(ModelSpec::qm(), make_protocol(1.0, 1.0, 5, Mode::transmissive), 3000, 23);
    std::size_t passed = 0;
    for (const auto& rec : ens.records) passed += rec.outcomes.front() == Outcome::plus();
    EXPECT_EQ(survival_curve(ens)[0].survival, static_cast<double>(passed) / 3000.0);
}

TEST(Survival, RejectsRecordingMode) {
    const auto ens = run_ensemble(ModelSpec::qm(), make_protocol(1.0, 1.0, 5, Mode::recording), 10, 1);
    EXPECT_THROW(survival_curve(ens), std::invalid_argument);
}

// --- hypothesis test ----------------------------------------------------------

namespace {

double rejection_rate(const ModelSpec& model, std::size_t runs, int trials, std::uint64_t seed0) {
    const auto protocol = make_protocol(kPi / 2, 1.0, 20, Mode::recording);
    int rejected = 0;
    for (int t = 0; t < trials; ++t) {
        const auto ens = run_ensemble(model, protocol, runs, seed0 + static_cast<std::uint64_t>(t), 4);
        TestOptions opts;
        opts.seed = seed0 * 7 + static_cast<std::uint64_t>(t);
        rejected += qm_vs_superdet_test(ens, 0.05, opts).verdict == Verdict::favors_superdeterminism;
    }
    return static_cast<double>(rejected) / trials;
}

}  // namespace

TEST(HypothesisTest, LikelihoodRatioStatistic) {
    EXPECT_EQ(detail::lr_statistic(50, 100), 0.0);
    EXPECT_EQ(detail::lr_statistic(40, 100), 0.0);
    // rho = 0.2: 2 [60 ln 1.2 + 40 ln 0.8]
    EXPECT_NEAR(detail::lr_statistic(60, 100), 2 * (60 * std::log(1.2) + 40 * std::log(0.8)), 1e-12);
    EXPECT_NEAR(detail::lr_statistic(100, 100), 200 * std::log(2.0), 1e-12);
}

TEST(HypothesisTest, QmEnsembleIsConsistent) {
    const auto ens = run_ensemble(ModelSpec::qm(), make_protocol(kPi / 2, 1.0, 20, Mode::recording), 10000, 41, 4);
    const auto r = qm_vs_superdet_test(ens, 0.05);
    EXPECT_EQ(r.transitions, 10000u * 18u);
    EXPECT_GE(r.p_value, 0.0);
    EXPECT_LE(r.p_value, 1.0);
    EXPECT_EQ(r.verdict == Verdict::favors_superdeterminism, r.p_value < 0.05);
}

TEST(HypothesisTest, PersistentHiddenVariableIsDetected) {
    const auto ens = run_ensemble(ModelSpec::hidden_variable(10.0), make_protocol(kPi / 2, 1.0, 20, Mode::recording),
                                  10000, 43, 4);
    const auto r = qm_vs_superdet_test(ens, 0.05);
    EXPECT_LT(r.p_value, 1e-3);
    EXPECT_EQ(r.verdict, Verdict::favors_superdeterminism);
    // rho = exp(-2 dt / tau) per repetition.
    EXPECT_NEAR(r.rho_hat, std::exp(-0.2), 0.01);
    EXPECT_NEAR(r.tau_hat, 10.0, 0.5);
}

TEST(HypothesisTest, NullCalibrationAndNoiseDominatedLimit) {
    EXPECT_LE(rejection_rate(ModelSpec::qm(), 2000, 100, 100), 0.10);
    EXPECT_LE(rejection_rate(ModelSpec::hidden_variable(0.01), 2000, 100, 300), 0.10);
}

TEST(HypothesisTest, RejectionRateIncreasesWithTau) {
    // The two smallest tau values give rho below 1e-8, so their rejection
    // rates are both the null rate and may differ only by sampling noise.
    const std::vector<double> taus{0.01, 0.1, 1.0, 10.0, 100.0};
    std::vector<double> rates;
    for (const double tau : taus) rates.push_back(rejection_rate(ModelSpec::hidden_variable(tau), 2000, 100, 500));
    const double null_noise = 2 * std::sqrt(2 * 0.05 * 0.95 / 100);
    for (std::size_t i = 1; i < rates.size(); ++i) {
        const double slack = i <= 1 ? null_noise : 0.0;
        EXPECT_GE(rates[i] + slack, rates[i - 1]) << "tau " << taus[i];
    }
    EXPECT_EQ(rates.back(), 1.0);
}

TEST(HypothesisTest, Preconditions) {
    const auto protocol = make_protocol(kPi / 2, 1.0, 10, Mode::recording);
    const auto small = run_ensemble(ModelSpec::qm(), protocol, 99, 1);
    EXPECT_THROW(qm_vs_superdet_test(small, 0.05), InadequateData);
    const auto ok = run_ensemble(ModelSpec::qm(), protocol, 100, 1);
    EXPECT_NO_THROW(qm_vs_superdet_test(ok, 0.05));
    EXPECT_THROW(qm_vs_superdet_test(ok, 0.0), std::invalid_argument);
    EXPECT_THROW(qm_vs_superdet_test(ok, 1.0), std::invalid_argument);
    const auto oblique = run_ensemble(ModelSpec::qm(), make_protocol(1.0, 1.0, 10, Mode::recording), 200, 1);
    EXPECT_THROW(qm_vs_superdet_test(oblique, 0.05), std::invalid_argument);
    const auto trans = run_ensemble(ModelSpec::qm(), make_protocol(kPi / 2, 1.0, 10, Mode::transmissive), 200, 1);
    EXPECT_THROW(qm_vs_superdet_test(trans, 0.05), std::invalid_argument);
}

TEST(HypothesisTest, TooShortSequencesAreInconclusive) {
    const auto ens = run_ensemble(ModelSpec::qm(), make_protocol(kPi / 2, 1.0, 2, Mode::recording), 200, 1);
    const auto r = qm_vs_superdet_test(ens, 0.05);
    EXPECT_EQ(r.transitions, 0u);
    EXPECT_EQ(r.verdict, Verdict::inconclusive);
}

// --- posterior --------------------------------------------------------------

TEST(Posterior, HemisphereQuadrantOctant) {
    const std::size_t n = 100000;
    const std::vector<Constraint> all{plus_along(0.0, 0.0), plus_along(kPi / 2, 0.0), plus_along(kPi / 2, kPi / 2)};
    const double expected[] = {0.5, 0.25, 0.125};
    rng::Stream r{61, 0, 0};
    for (std::size_t m = 1; m <= 3; ++m) {
        const auto est = posterior_support_fraction(std::span(all.data(), m), n, r);
        const double p = expected[m - 1];
        EXPECT_NEAR(est.fraction, p, 4 * std::sqrt(p * (1 - p) / n)) << m;
        EXPECT_FALSE(est.empty_region);
    }
}

TEST(Posterior, ContradictionIsEmpty) {
    rng::Stream r{62, 0, 0};
    const auto z = observable_from_angles(0.0, 0.0, "A");
    const std::vector<Constraint> c{{z, Outcome::plus()}, {z, Outcome::minus()}};
    const auto est = posterior_support_fraction(c, 1000, r);
    EXPECT_EQ(est.fraction, 0.0);
    EXPECT_TRUE(est.empty_region);
}

TEST(Posterior, SurroundingConstraintsAreEmpty) {
    // + along four tetrahedral directions: no hemisphere contains them all.
    rng::Stream r{63, 0, 0};
    const double s = 1.0 / std::sqrt(3.0);
    std::vector<Constraint> c;
    for (const Vec3 v : {Vec3{s, s, s}, Vec3{s, -s, -s}, Vec3{-s, s, -s}, Vec3{-s, -s, s}}) {
        c.emplace_back(Observable{v, "T"}, Outcome::plus());
    }
    EXPECT_TRUE(posterior_support_fraction(c, 1000, r).empty_region);
    c.pop_back();
    const auto three = posterior_support_fraction(c, 100000, r);
    EXPECT_FALSE(three.empty_region);
    EXPECT_GT(three.fraction, 0.0);
}

TEST(Posterior, NonIncreasingAsConstraintsAppend) {
    rng::Stream pick{64, 0, 0};
    std::vector<Constraint> c;
    double prev = 1.0;
    double prev_se = 0.0;
    const std::size_t n = 50000;
    for (int i = 0; i < 8; ++i) {
        c.emplace_back(Observable{rng::uniform_on_sphere(pick), "O"}, pick.uniform() < 0.5 ? Outcome::plus() : Outcome::minus());
        rng::Stream r{65, static_cast<std::uint64_t>(i), 0};
        const auto est = posterior_support_fraction(c, n, r);
        EXPECT_LE(est.fraction, prev + 4 * std::hypot(est.std_error, prev_se) + 1e-12) << i;
        prev = est.fraction;
        prev_se = est.std_error;
    }
}

TEST(Posterior, NestedAnalyticCasesExactWithSharedSamples) {
    // With the same sample stream, each accepted sample of a superset is also
    // accepted by the subset, so the counts are exactly non-increasing.
    const std::vector<Constraint> all{plus_along(0.0, 0.0), plus_along(kPi / 2, 0.0), plus_along(kPi / 2, kPi / 2)};
    double prev = 1.0;
    for (std::size_t m = 1; m <= 3; ++m) {
        rng::Stream r{66, 0, 0};
        const double f = posterior_support_fraction(std::span(all.data(), m), 20000, r).fraction;
        EXPECT_LE(f, prev);
        prev = f;
    }
}

TEST(Posterior, Errors) {
    rng::Stream r{67, 0, 0};
    EXPECT_THROW(posterior_support_fraction(std::span<const Constraint>{}, 10, r), std::invalid_argument);
    const std::vector<Constraint> c{plus_along(0.0, 0.0)};
    EXPECT_THROW(posterior_support_fraction(c, 0, r), std::invalid_argument);
}
