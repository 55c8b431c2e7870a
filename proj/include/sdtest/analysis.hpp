#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sdtest/core.hpp"
#include "sdtest/models.hpp"
#include "sdtest/random.hpp"
#include "sdtest/simulate.hpp"

namespace sdtest {

/// The series shows no positive correlation to fit.
struct NoDecaySignal : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Too little data for a stable bootstrap.
struct InadequateData : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Autocorrelation
// ---------------------------------------------------------------------------

enum class CorrEstimator {
    first_reference,  // correlate every repetition with the first one
    lagged,           // average over all pairs (j, j + kappa) within a run
};

inline std::string to_string(CorrEstimator e) {
    return e == CorrEstimator::first_reference ? "first_reference" : "lagged";
}

/// Corr_kappa estimates for one observable. kappa counts repetitions of that
/// observable; lag_step is the physical time between repetitions, so the
/// elapsed time at index i is kappas[i] * lag_step.
struct CorrSeries {
    std::vector<unsigned> kappas;
    std::vector<double> estimates;
    std::vector<double> std_errors;
    std::vector<std::size_t> n_samples;
    double lag_step = 1.0;
    std::string label;
    CorrEstimator estimator = CorrEstimator::first_reference;
    bool conditioned_on_survival = false;
    std::vector<std::string> warnings;

    std::size_t size() const { return kappas.size(); }
    double lag_time(std::size_t i) const { return kappas[i] * lag_step; }

    bool operator==(const CorrSeries&) const = default;
};

struct CorrOptions {
    CorrEstimator estimator = CorrEstimator::first_reference;
    /// Required to analyze transmissive (post-selected) data; the result is
    /// then flagged conditioned_on_survival.
    bool acknowledge_survivorship = false;
};

namespace detail {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanSe mean_and_se(std::span<const double> v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (const double x : v) ss += (x - mean) * (x - mean);
    const double var = v.size() > 1 ? ss / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n)};
}

}  // namespace detail

/// Corr_kappa = E[s_0 s_kappa] / E[s_0^2] over the runs of the ensemble, for
/// the subsequence of outcomes of the observable named `label`.
inline CorrSeries estimate_autocorrelation(const EnsembleResult& ens, const std::string& label,
                                           unsigned max_kappa, const CorrOptions& opts = {}) {
    if (ens.records.empty()) {
        throw std::invalid_argument("estimate_autocorrelation: empty ensemble");
    }
    const int which = ens.protocol.index_of(label);
    const bool transmissive = ens.protocol.mode == Mode::transmissive;
    if (transmissive && !opts.acknowledge_survivorship) {
        throw std::invalid_argument(
            "estimate_autocorrelation: transmissive ensemble is post-selected on survival; "
            "set acknowledge_survivorship to analyze it anyway");
    }

    std::vector<std::vector<int>> subs;
    subs.reserve(ens.records.size());
    for (const auto& rec : ens.records) subs.push_back(rec.subsequence(which));

    CorrSeries out;
    out.lag_step = 2.0 * ens.protocol.dt;
    out.label = label;
    out.estimator = opts.estimator;
    out.conditioned_on_survival = transmissive;

    std::vector<double> products;
    std::vector<double> squares;
    products.reserve(subs.size());
    for (unsigned kappa = 0; kappa <= max_kappa; ++kappa) {
        products.clear();
        squares.clear();
        for (const auto& s : subs) {
            if (s.size() <= kappa) continue;
            if (opts.estimator == CorrEstimator::first_reference) {
                products.push_back(static_cast<double>(s[0] * s[kappa]));
                squares.push_back(static_cast<double>(s[0] * s[0]));
            } else {
                double acc = 0.0;
                double sq = 0.0;
                const std::size_t pairs = s.size() - kappa;
                for (std::size_t j = 0; j < pairs; ++j) {
                    acc += s[j] * s[j + kappa];
                    sq += s[j] * s[j];
                }
                products.push_back(acc / static_cast<double>(pairs));
                squares.push_back(sq / static_cast<double>(pairs));
            }
        }
        if (products.size() < 2) {
            out.warnings.push_back("kappa " + std::to_string(kappa) + " omitted: " +
                                   std::to_string(products.size()) + " sample(s)");
            continue;
        }
        const auto [num, se] = detail::mean_and_se(products);
        const double den = std::accumulate(squares.begin(), squares.end(), 0.0) /
                           static_cast<double>(squares.size());
        out.kappas.push_back(kappa);
        out.estimates.push_back(std::clamp(num / den, -1.0, 1.0));
        out.std_errors.push_back(se / den);
        out.n_samples.push_back(products.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Exponential-decay fit
// ---------------------------------------------------------------------------

enum class FitMethod { log_linear, mle };

inline std::string to_string(FitMethod m) { return m == FitMethod::log_linear ? "log_linear" : "mle"; }

struct FitGoodness {
    double chi2 = 0.0;       // sum of squared standardized residuals of the estimates
    std::size_t dof = 0;     // points used minus one
    double rmse = 0.0;       // unweighted root mean square residual

    bool operator==(const FitGoodness&) const = default;
};

/// Fitted autocorrelation time. tau_hat is in the series' physical units
/// (kappa * lag_step); +infinity when no decay is visible.
struct FitResult {
    double tau_hat = kInf;
    double ci_low = kInf;
    double ci_high = kInf;
    double ci_level = 0.95;
    FitMethod method = FitMethod::log_linear;
    FitGoodness goodness;
    bool degenerate = false;
    std::size_t n_points = 0;
    std::size_t bootstrap_resamples = 0;

    bool operator==(const FitResult&) const = default;
};

/// Noise model for the bootstrap. Estimates from the first_reference
/// estimator share s_0 across lags, so for +-1 outcomes
/// Cov(s_0 s_a, s_0 s_b) = rho^|a-b| - rho^(a+b); independent treats every
/// estimate on its own. automatic picks shared_reference for first_reference
/// series and independent otherwise.
enum class LagNoise { automatic, independent, shared_reference };

struct FitOptions {
    FitMethod method = FitMethod::log_linear;
    std::size_t bootstrap_resamples = 1000;
    double ci_level = 0.95;
    std::uint64_t seed = 0x5EEDF17ull;
    LagNoise lag_noise = LagNoise::automatic;
};

namespace detail {

struct Point {
    double kappa;
    double value;
    double se;
};

// Points with kappa > 0. The model fixes Corr_0 = 1, so kappa = 0 carries no
// information about the rate. Zero standard errors are floored at the
// smallest positive one; if none is positive every point gets unit weight.
inline std::vector<Point> fit_points(std::span<const unsigned> kappas, std::span<const double> values,
                                     std::span<const double> ses) {
    double floor_se = kInf;
    for (std::size_t i = 0; i < kappas.size(); ++i) {
        if (kappas[i] > 0 && ses[i] > 0.0) floor_se = std::min(floor_se, ses[i]);
    }
    std::vector<Point> pts;
    for (std::size_t i = 0; i < kappas.size(); ++i) {
        if (kappas[i] == 0) continue;
        const double se = std::isinf(floor_se) ? 1.0 : std::max(ses[i], floor_se);
        pts.push_back({static_cast<double>(kappas[i]), values[i], se});
    }
    return pts;
}

// Decay rate per unit kappa; 0 means no decay. Weighted least squares of
// ln(value) on kappa through the origin. The variance of ln(value) is
// (se / mean)^2; the first pass takes the mean from the data, later passes
// from the current fit, which removes the pull toward upward fluctuations.
inline double fit_rate_log_linear(std::span<const Point> pts) {
    auto solve = [&](double rate, bool from_data) {
        double num = 0.0;
        double den = 0.0;
        for (const auto& p : pts) {
            if (!(p.value > 0.0)) continue;
            const double mean = from_data ? p.value : std::exp(-rate * p.kappa);
            const double w = (mean / p.se) * (mean / p.se);
            num += w * p.kappa * std::log(p.value);
            den += w * p.kappa * p.kappa;
        }
        const double slope = den > 0.0 ? num / den : 0.0;
        return slope < 0.0 ? -slope : 0.0;
    };
    if (std::none_of(pts.begin(), pts.end(), [](const Point& p) { return p.value > 0.0; })) {
        throw NoDecaySignal("fit_exponential_decay: no positive correlation estimates");
    }
    double rate = solve(0.0, true);
    for (int it = 0; it < 20; ++it) {
        const double next = solve(rate, false);
        const bool done = std::abs(next - rate) <= 1e-14 * std::max(1.0, rate);
        rate = next;
        if (done) break;
    }
    return rate;
}

inline double chi2_at(std::span<const Point> pts, double rate) {
    double c = 0.0;
    for (const auto& p : pts) {
        const double r = (p.value - std::exp(-rate * p.kappa)) / p.se;
        c += r * r;
    }
    return c;
}

inline double fit_rate_mle(std::span<const Point> pts) {
    // Coarse log-spaced scan followed by golden-section refinement; the
    // Gaussian likelihood in the rate is smooth but need not be unimodal far
    // from the optimum.
    double best_rate = 0.0;
    double best = chi2_at(pts, 0.0);
    std::vector<double> grid;
    for (double lr = -9.0; lr <= 3.0; lr += 0.05) grid.push_back(std::pow(10.0, lr));
    std::size_t best_i = grid.size();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double c = chi2_at(pts, grid[i]);
        if (c < best) {
            best = c;
            best_rate = grid[i];
            best_i = i;
        }
    }
    if (best_i == grid.size()) {
        return 0.0;
    }
    double lo = best_i == 0 ? 0.0 : grid[best_i - 1];
    double hi = best_i + 1 < grid.size() ? grid[best_i + 1] : grid[best_i] * 2.0;
    constexpr double kGolden = 0.6180339887498949;
    double x1 = hi - kGolden * (hi - lo);
    double x2 = lo + kGolden * (hi - lo);
    double f1 = chi2_at(pts, x1);
    double f2 = chi2_at(pts, x2);
    for (int it = 0; it < 200 && (hi - lo) > 1e-15 * std::max(1.0, hi); ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - kGolden * (hi - lo);
            f1 = chi2_at(pts, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + kGolden * (hi - lo);
            f2 = chi2_at(pts, x2);
        }
    }
    const double rate = 0.5 * (lo + hi);
    return chi2_at(pts, rate) <= best ? rate : best_rate;
}

inline double fit_rate(std::span<const Point> pts, FitMethod method) {
    bool any_positive = false;
    for (const auto& p : pts) any_positive = any_positive || p.value > 0.0;
    if (!any_positive) {
        throw NoDecaySignal("fit_exponential_decay: all correlation estimates are non-positive");
    }
    return method == FitMethod::log_linear ? fit_rate_log_linear(pts) : fit_rate_mle(pts);
}

// Lower Cholesky factor of the correlation of first_reference estimates under
// Corr_kappa = exp(-rate kappa). Empty when the matrix is not usable.
inline std::vector<double> shared_reference_factor(std::span<const Point> pts, double rate) {
    const std::size_t n = pts.size();
    if (!(rate > 0.0) || std::isinf(rate)) return {};
    auto cov = [&](const Point& a, const Point& b) {
        return std::exp(-rate * std::abs(a.kappa - b.kappa)) - std::exp(-rate * (a.kappa + b.kappa));
    };
    std::vector<double> L(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double cii = cov(pts[i], pts[i]);
        if (!(cii > 0.0)) return {};
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = cov(pts[i], pts[j]) / std::sqrt(cii * cov(pts[j], pts[j]));
            for (std::size_t k = 0; k < j; ++k) sum -= L[i * n + k] * L[j * n + k];
            if (i == j) {
                if (!(sum > 1e-12)) return {};
                L[i * n + i] = std::sqrt(sum);
            } else {
                L[i * n + j] = sum / L[j * n + j];
            }
        }
    }
    return L;
}

inline double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(i);
    if (i + 1 >= v.size()) return v.back();
    if (std::isinf(v[i + 1])) return frac > 0.0 ? v[i + 1] : v[i];
    return v[i] + frac * (v[i + 1] - v[i]);
}

}  // namespace detail

/// Fit Corr_kappa = exp(-kappa / tau). The confidence interval is a
/// percentile interval from a parametric bootstrap that redraws the estimates
/// around exp(-kappa / tau_hat) with standard errors se_kappa (correlated
/// across lags per opts.lag_noise) and refits.
inline FitResult fit_exponential_decay(const CorrSeries& series, const FitOptions& opts = {}) {
    if (series.estimates.size() != series.kappas.size() || series.std_errors.size() != series.kappas.size()) {
        throw std::invalid_argument("fit_exponential_decay: CorrSeries fields have unequal lengths");
    }
    if (opts.method == FitMethod::log_linear) {
        const auto positive = std::count_if(series.estimates.begin(), series.estimates.end(),
                                            [](double c) { return c > 0.0; });
        const bool any_positive_after_zero = [&] {
            for (std::size_t i = 0; i < series.size(); ++i) {
                if (series.kappas[i] > 0 && series.estimates[i] > 0.0) return true;
            }
            return false;
        }();
        if (!any_positive_after_zero) {
            throw NoDecaySignal("fit_exponential_decay: all correlation estimates are non-positive");
        }
        if (positive < 3) {
            throw std::invalid_argument("fit_exponential_decay: log_linear needs at least 3 positive estimates");
        }
    }
    const auto pts = detail::fit_points(series.kappas, series.estimates, series.std_errors);
    if (pts.empty()) {
        throw std::invalid_argument("fit_exponential_decay: series has no kappa > 0");
    }

    const double rate = detail::fit_rate(pts, opts.method);

    FitResult fit;
    fit.method = opts.method;
    fit.ci_level = opts.ci_level;
    fit.n_points = pts.size();
    fit.degenerate = !(rate > 0.0);
    const double tau_kappa = fit.degenerate ? kInf : 1.0 / rate;
    fit.tau_hat = tau_kappa * series.lag_step;

    double sq = 0.0;
    for (const auto& p : pts) {
        const double r = p.value - std::exp(-rate * p.kappa);
        sq += r * r;
    }
    fit.goodness.chi2 = detail::chi2_at(pts, rate);
    fit.goodness.dof = pts.size() - 1;
    fit.goodness.rmse = std::sqrt(sq / static_cast<double>(pts.size()));

    fit.bootstrap_resamples = opts.bootstrap_resamples;
    if (opts.bootstrap_resamples == 0) {
        fit.ci_low = fit.ci_high = fit.tau_hat;
        return fit;
    }

    const bool shared = opts.lag_noise == LagNoise::shared_reference ||
                        (opts.lag_noise == LagNoise::automatic && series.estimator == CorrEstimator::first_reference);
    const auto L = shared ? detail::shared_reference_factor(pts, rate) : std::vector<double>{};
    const std::size_t n = pts.size();

    std::vector<double> taus;
    taus.reserve(opts.bootstrap_resamples);
    std::vector<detail::Point> resampled(n);
    std::vector<double> z(n);
    for (std::size_t b = 0; b < opts.bootstrap_resamples; ++b) {
        rng::Stream stream{opts.seed, b, 0};
        for (auto& zi : z) zi = stream.normal();
        for (std::size_t i = 0; i < n; ++i) {
            double e = z[i];
            if (!L.empty()) {
                e = 0.0;
                for (std::size_t k = 0; k <= i; ++k) e += L[i * n + k] * z[k];
            }
            resampled[i] = pts[i];
            resampled[i].value = std::exp(-rate * pts[i].kappa) + pts[i].se * e;
        }
        double r = 0.0;
        try {
            r = detail::fit_rate(resampled, opts.method);
        } catch (const NoDecaySignal&) {
            // Nothing positive left: the resample decays faster than any
            // resolvable rate.
            taus.push_back(0.0);
            continue;
        }
        taus.push_back(r > 0.0 ? series.lag_step / r : kInf);
    }
    const double a = 0.5 * (1.0 - opts.ci_level);
    fit.ci_low = std::min(detail::quantile(taus, a), fit.tau_hat);
    fit.ci_high = std::max(detail::quantile(taus, 1.0 - a), fit.tau_hat);
    return fit;
}

// ---------------------------------------------------------------------------
// Survival
// ---------------------------------------------------------------------------

struct SurvivalPoint {
    std::size_t kappa = 0;
    double survival = 0.0;
    double std_error = 0.0;
    std::size_t survivors = 0;
};

/// Fraction of transmissive runs still unabsorbed after step kappa.
inline std::vector<SurvivalPoint> survival_curve(const EnsembleResult& ens) {
    if (ens.protocol.mode != Mode::transmissive) {
        throw std::invalid_argument("survival_curve: requires a transmissive-mode ensemble");
    }
    if (ens.records.empty()) {
        throw std::invalid_argument("survival_curve: empty ensemble");
    }
    // absorbed[k] = number of runs absorbed exactly at step k.
    std::vector<std::size_t> absorbed(ens.protocol.max_steps, 0);
    for (const auto& rec : ens.records) {
        if (rec.absorbed_at) ++absorbed[*rec.absorbed_at];
    }
    const auto n = static_cast<double>(ens.records.size());
    std::vector<SurvivalPoint> out;
    out.reserve(ens.protocol.max_steps);
    std::size_t alive = ens.records.size();
    for (std::size_t k = 0; k < ens.protocol.max_steps; ++k) {
        alive -= absorbed[k];
        const double f = static_cast<double>(alive) / n;
        out.push_back({k, f, std::sqrt(f * (1.0 - f) / n), alive});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hypothesis test
// ---------------------------------------------------------------------------

enum class Verdict { consistent_with_qm, favors_superdeterminism, inconclusive };

inline std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::consistent_with_qm: return "consistent_with_qm";
        case Verdict::favors_superdeterminism: return "favors_superdeterminism";
        case Verdict::inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

struct TestResult {
    double statistic = 0.0;  // likelihood-ratio statistic 2 (l1 - l0)
    double p_value = 1.0;
    Verdict verdict = Verdict::inconclusive;
    double alpha = 0.05;
    double rho_hat = 0.0;     // fitted correlation between consecutive repetitions
    double tau_hat = 0.0;     // seconds; 0 when rho_hat == 0, +inf when rho_hat == 1
    std::uint64_t transitions = 0;
    std::uint64_t agreements = 0;
    std::size_t bootstrap_resamples = 0;

    bool operator==(const TestResult&) const = default;
};

struct TestOptions {
    std::size_t bootstrap_resamples = 1000;
    std::uint64_t seed = 0x7E57ull;
    std::size_t min_runs = 100;
};

namespace detail {

// 2 * [l(rho_hat) - l(0)] for `agree` agreements among `n` transitions, where
// P(agree) = (1 + rho) / 2 and rho is constrained to [0, 1].
inline double lr_statistic(std::uint64_t agree, std::uint64_t n) {
    if (n == 0) return 0.0;
    const auto s = static_cast<double>(agree);
    const auto d = static_cast<double>(n - agree);
    const double rho = (s - d) / static_cast<double>(n);
    if (!(rho > 0.0)) return 0.0;
    double ll = s * std::log1p(rho);
    if (d > 0.0) ll += d * std::log1p(-rho);
    return 2.0 * ll;
}

}  // namespace detail

/// Likelihood-ratio test of H0 (same-observable outcomes i.i.d. fair, the QM
/// prediction for orthogonal settings) against H1 (outcomes of each
/// observable form a Markov chain with agreement probability (1 + rho) / 2,
/// rho = exp(-lag / tau)). Transitions of both observables are pooled. The
/// p-value comes from a parametric bootstrap of the null distribution.
///
/// Verdict: favors_superdeterminism iff p_value < alpha, consistent_with_qm
/// otherwise; inconclusive when the ensemble contains no transitions.
inline TestResult qm_vs_superdet_test(const EnsembleResult& ens, double alpha, const TestOptions& opts = {}) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("qm_vs_superdet_test: alpha must lie in (0, 1)");
    }
    if (ens.protocol.mode != Mode::recording) {
        throw std::invalid_argument("qm_vs_superdet_test: requires a recording-mode ensemble");
    }
    if (std::abs(ens.protocol.theta() - std::numbers::pi / 2) > 1e-9) {
        throw std::invalid_argument(
            "qm_vs_superdet_test: the i.i.d. null holds only for orthogonal settings (theta = 90 deg)");
    }
    if (ens.records.size() < opts.min_runs) {
        throw InadequateData("qm_vs_superdet_test: " + std::to_string(ens.records.size()) +
                             " runs, need at least " + std::to_string(opts.min_runs) +
                             " for a stable bootstrap");
    }
    if (opts.bootstrap_resamples == 0) {
        throw std::invalid_argument("qm_vs_superdet_test: bootstrap_resamples must be >= 1");
    }

    std::uint64_t n = 0;
    std::uint64_t agree = 0;
    for (const auto& rec : ens.records) {
        const auto& o = rec.outcomes;
        for (std::size_t k = 2; k < o.size(); ++k) {
            ++n;
            agree += o[k] == o[k - 2] ? 1 : 0;
        }
    }

    TestResult res;
    res.alpha = alpha;
    res.transitions = n;
    res.agreements = agree;
    res.bootstrap_resamples = opts.bootstrap_resamples;
    if (n == 0) {
        res.verdict = Verdict::inconclusive;
        return res;
    }

    res.statistic = detail::lr_statistic(agree, n);
    res.rho_hat = std::max(0.0, (2.0 * static_cast<double>(agree) - static_cast<double>(n)) / static_cast<double>(n));
    const double lag = 2.0 * ens.protocol.dt;
    res.tau_hat = res.rho_hat <= 0.0 ? 0.0 : (res.rho_hat >= 1.0 ? kInf : -lag / std::log(res.rho_hat));

    // Under H0 the agreement indicators are i.i.d. fair coins, so the count of
    // agreements is Binomial(n, 1/2) and it is sufficient for the statistic.
    std::size_t exceed = 0;
    for (std::size_t b = 0; b < opts.bootstrap_resamples; ++b) {
        rng::Stream stream{opts.seed, b, 0};
        const std::uint64_t agree_star = rng::fair_binomial(stream, n);
        if (detail::lr_statistic(agree_star, n) >= res.statistic) ++exceed;
    }
    res.p_value = static_cast<double>(exceed + 1) / static_cast<double>(opts.bootstrap_resamples + 1);
    res.verdict = res.p_value < alpha ? Verdict::favors_superdeterminism : Verdict::consistent_with_qm;
    return res;
}

// ---------------------------------------------------------------------------
// Hidden-variable posterior restriction
// ---------------------------------------------------------------------------

struct PosteriorEstimate {
    double fraction = 0.0;
    double std_error = 0.0;
    bool empty_region = false;
    std::size_t n_samples = 0;
};

using Constraint = std::pair<Observable, Outcome>;

namespace detail {

inline double det3(const Vec3& a, const Vec3& b, const Vec3& c) { return dot(a, cross(b, c)); }

// True iff the origin lies in the convex hull of `pts` (Caratheodory: some
// subset of at most four points already contains it).
inline bool origin_in_hull(std::span<const Vec3> pts, double eps = 1e-12) {
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (norm(pts[i]) < eps) return true;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (norm(cross(pts[i], pts[j])) < eps && dot(pts[i], pts[j]) < 0.0) return true;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            for (std::size_t k = j + 1; k < n; ++k) {
                const Vec3 &a = pts[i], &b = pts[j], &c = pts[k];
                if (std::abs(det3(a, b, c)) > eps) continue;
                const Vec3 ab = cross(a, b);
                const Vec3 bc = cross(b, c);
                const Vec3 ca = cross(c, a);
                if (dot(ab, bc) >= -eps && dot(bc, ca) >= -eps && dot(ca, ab) >= -eps &&
                    norm(ab) + norm(bc) + norm(ca) > eps) {
                    return true;
                }
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            for (std::size_t k = j + 1; k < n; ++k) {
                for (std::size_t l = k + 1; l < n; ++l) {
                    const Vec3 &a = pts[i], &b = pts[j], &c = pts[k], &d = pts[l];
                    const double total = det3(b - a, c - a, d - a);
                    if (std::abs(total) < eps) continue;
                    // Barycentric weights of the origin, as signed volumes.
                    const double wa = det3(b, c, d);
                    const double wb = -det3(a, c, d);
                    const double wc = det3(a, b, d);
                    const double wd = -det3(a, b, c);
                    const double sign = total > 0.0 ? 1.0 : -1.0;
                    if (sign * wa >= -eps && sign * wb >= -eps && sign * wc >= -eps && sign * wd >= -eps) {
                        return true;
                    }
                }
            }
        }
    }
    return false;
}

}  // namespace detail

inline constexpr std::size_t kExactEmptinessMaxConstraints = 48;

/// Solid-angle fraction of hidden variables lambda consistent with every
/// observed (observable, outcome) pair under the sign rule, estimated from
/// n_samples uniform directions. Contradictory constraint sets are detected
/// exactly and return 0 with empty_region set.
template <class Rng>
PosteriorEstimate posterior_support_fraction(std::span<const Constraint> constraints, std::size_t n_samples,
                                             Rng& rng) {
    if (constraints.empty()) {
        throw std::invalid_argument("posterior_support_fraction: constraints must be non-empty");
    }
    if (n_samples == 0) {
        throw std::invalid_argument("posterior_support_fraction: n_samples must be >= 1");
    }
    PosteriorEstimate est;
    est.n_samples = n_samples;
    if (constraints.size() <= kExactEmptinessMaxConstraints) {
        std::vector<Vec3> pts;
        pts.reserve(constraints.size());
        for (const auto& [obs, s] : constraints) pts.push_back(obs.direction() * static_cast<double>(s.value()));
        if (detail::origin_in_hull(pts)) {
            est.empty_region = true;
            return est;
        }
    }
    std::size_t hits = 0;
    const SignRule rule;
    for (std::size_t i = 0; i < n_samples; ++i) {
        const HiddenVariable hv{rng::uniform_on_sphere(rng)};
        bool ok = true;
        for (const auto& [obs, s] : constraints) {
            if (rule(hv, obs) != s) {
                ok = false;
                break;
            }
        }
        hits += ok ? 1 : 0;
    }
    const double n = static_cast<double>(n_samples);
    est.fraction = static_cast<double>(hits) / n;
    est.std_error = std::sqrt(est.fraction * (1.0 - est.fraction) / n);
    est.empty_region = hits == 0 && constraints.size() > kExactEmptinessMaxConstraints;
    return est;
}

}  // namespace sdtest
