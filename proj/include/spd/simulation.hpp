#pragma once

#include "spd/estimator.hpp"
#include "spd/pricing.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace spd {

/// Synthetic market with an implied volatility and a relative noise
/// half-width that are both linear in strike.
struct SmileScenario {
    MarketContext ctx;
    double strike_lo;
    double strike_hi;
    int n_quotes;
    double vol_lo;
    double vol_hi;
    double noise_lo;
    double noise_hi;

    void validate() const;
    double vol_at(double strike) const;
    double noise_at(double strike) const;
    std::vector<double> strikes() const;  ///< n_quotes equispaced, endpoints included
    double true_price(double strike) const;
    /// e^{r tau} times the central second difference (step 0.01) of the smile
    /// price curve.
    double true_density(double s, double step = 0.01) const;
};

/// Index-option market: spot 1365, r 4.5%, q 2.5%, 30 days, 25 strikes on
/// [1000, 1700], vol 40% -> 20%, noise 3% -> 18%.
SmileScenario asd_scenario();

/// Noisy quotes: theoretical smile price plus Uniform(-p C*, p C*) noise,
/// floored at zero. Uses mt19937_64 with uniforms from its top 53 bits, so
/// the draws are identical on every platform.
std::vector<Quote> simulate_quotes(const SmileScenario& scenario, std::uint64_t seed);

enum class SigmaRule {
    Fixed,        ///< use fit_config.sigma_floor
    RuleOfThumb,  ///< 0.75 * Black-Scholes vol * sqrt(tau)
    Loocv,        ///< leave-one-out over the default grid
};

/// Fit settings used by the study unless overridden: inverse-price weights,
/// since the simulated noise is proportional to the option value.
inline FitConfig study_fit_config() {
    FitConfig cfg;
    cfg.weight_mode = WeightMode::InversePrice;
    return cfg;
}

struct StudyOptions {
    int n_runs = 200;
    std::uint64_t seed0 = 0;
    FitConfig fit_config = study_fit_config();
    SigmaRule sigma_rule = SigmaRule::Loocv;
    std::vector<double> strike_grid;   ///< empty: 141 points on [strike_lo, strike_hi]
    std::vector<double> density_grid;  ///< empty: same as the strike grid
    unsigned threads = 1;
    bool keep_models = false;  ///< retain each run's fitted model in the report
};

struct StudyReport {
    std::vector<double> strike_grid;
    std::vector<double> density_grid;
    std::vector<double> true_price;
    std::vector<double> true_density;
    std::vector<double> price_mean, price_lo, price_hi;        ///< pointwise mean, 2.5%, 97.5%
    std::vector<double> density_mean, density_lo, density_hi;
    std::vector<double> price_ise;    ///< per successful run
    std::vector<double> density_ise;  ///< per successful run
    std::vector<double> sigma_floor;  ///< per successful run
    std::vector<std::uint64_t> seeds;          ///< per successful run
    std::vector<std::uint64_t> failed_seeds;
    std::vector<MixtureModel> models;  ///< per successful run, only with keep_models
};

/// Trapezoidal integral of (a - b)^2 over `grid`.
double integrated_squared_error(std::span<const double> grid, std::span<const double> a,
                                std::span<const double> b);

/// Linear-interpolation quantile (type 7) of an unsorted sample.
double sample_quantile(std::vector<double> values, double q);

/// Runs seeds seed0 .. seed0 + n_runs - 1 in parallel when threads > 1.
/// Failed runs are excluded; more than 10% failures aborts the study.
StudyReport monte_carlo_study(const SmileScenario& scenario, const StudyOptions& options);

}  // namespace spd
