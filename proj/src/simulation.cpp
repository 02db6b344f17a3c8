#include "spd/simulation.hpp"

#include "spd/baselines.hpp"
#include "spd/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <string>
#include <thread>

namespace spd {

void SmileScenario::validate() const {
    if (!(strike_lo > 0.0 && strike_lo < strike_hi))
        throw Error(ErrorCode::InvalidArgument, "scenario needs 0 < strike_lo < strike_hi");
    if (n_quotes < 2) throw Error(ErrorCode::InvalidArgument, "scenario needs at least 2 quotes");
    if (!(vol_lo > 0.0 && vol_hi > 0.0)) throw Error(ErrorCode::InvalidArgument, "scenario vols must be positive");
    if (!(noise_lo >= 0.0 && noise_hi >= 0.0))
        throw Error(ErrorCode::InvalidArgument, "scenario noise widths must be nonnegative");
}

double SmileScenario::vol_at(double strike) const {
    const double t = (strike - strike_lo) / (strike_hi - strike_lo);
    return vol_lo + t * (vol_hi - vol_lo);
}

double SmileScenario::noise_at(double strike) const {
    const double t = (strike - strike_lo) / (strike_hi - strike_lo);
    return noise_lo + t * (noise_hi - noise_lo);
}

std::vector<double> SmileScenario::strikes() const {
    std::vector<double> out(static_cast<std::size_t>(n_quotes));
    for (int i = 0; i < n_quotes; ++i)
        out[static_cast<std::size_t>(i)] = strike_lo + (strike_hi - strike_lo) * i / (n_quotes - 1);
    out.back() = strike_hi;
    return out;
}

double SmileScenario::true_price(double strike) const {
    return bs_call_price(ctx, strike, vol_at(strike));
}

double SmileScenario::true_density(double s, double step) const {
    const double second = (true_price(s - step) - 2.0 * true_price(s) + true_price(s + step)) / (step * step);
    return second / ctx.discount();
}

SmileScenario asd_scenario() {
    return {MarketContext(1365.0, 0.045, 0.025, 30.0 / 365.0), 1000.0, 1700.0, 25, 0.40, 0.20, 0.03, 0.18};
}

std::vector<Quote> simulate_quotes(const SmileScenario& scenario, std::uint64_t seed) {
    scenario.validate();
    std::mt19937_64 gen(seed);
    std::vector<Quote> quotes;
    for (double x : scenario.strikes()) {
        const double exact = scenario.true_price(x);
        const double half_width = scenario.noise_at(x) * exact;
        const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
        quotes.push_back({x, std::max(0.0, exact + half_width * (2.0 * u - 1.0)), 1.0});
    }
    return quotes;
}

double integrated_squared_error(std::span<const double> grid, std::span<const double> a,
                                std::span<const double> b) {
    if (grid.size() != a.size() || grid.size() != b.size())
        throw Error(ErrorCode::InvalidArgument, "ISE inputs differ in length");
    double total = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double e0 = a[i - 1] - b[i - 1];
        const double e1 = a[i] - b[i];
        total += 0.5 * (grid[i] - grid[i - 1]) * (e0 * e0 + e1 * e1);
    }
    return total;
}

double sample_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

struct RunOutcome {
    std::vector<double> price;
    std::vector<double> density;
    double price_ise = 0.0;
    double density_ise = 0.0;
    double sigma = 0.0;
    std::optional<MixtureModel> model;
};

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    out.back() = hi;
    return out;
}

// Mean of a sample that is insensitive to the input order and exact when
// every value is identical.
double stable_mean(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const double pivot = values[values.size() / 2];
    double acc = 0.0;
    for (double v : values) acc += v - pivot;
    return pivot + acc / static_cast<double>(values.size());
}

RunOutcome run_once(const SmileScenario& scenario, const StudyOptions& options, std::uint64_t seed,
                    std::span<const double> strike_grid, std::span<const double> density_grid,
                    std::span<const double> true_price, std::span<const double> true_density) {
    const auto quotes = simulate_quotes(scenario, seed);
    FitConfig cfg = options.fit_config;
    switch (options.sigma_rule) {
        case SigmaRule::Fixed: break;
        case SigmaRule::RuleOfThumb:
            cfg.sigma_floor = 0.75 * fit_black_scholes(quotes, scenario.ctx, cfg.weight_mode).vol *
                              std::sqrt(scenario.ctx.tau());
            break;
        case SigmaRule::Loocv:
            cfg.sigma_floor = loocv_select_sigma(quotes, scenario.ctx, cfg).sigma_floor;
            break;
    }
    const auto result = fit(quotes, scenario.ctx, cfg);
    RunOutcome out;
    out.sigma = cfg.sigma_floor;
    out.price = mixture_call_prices(result.model, strike_grid);
    out.density = mixture_densities(result.model, density_grid);
    out.price_ise = integrated_squared_error(strike_grid, out.price, true_price);
    out.density_ise = integrated_squared_error(density_grid, out.density, true_density);
    if (options.keep_models) out.model = result.model;
    return out;
}

void summarise(const std::vector<std::vector<double>>& curves, std::size_t points,
               std::vector<double>& mean, std::vector<double>& lo, std::vector<double>& hi) {
    mean.resize(points);
    lo.resize(points);
    hi.resize(points);
    std::vector<double> column(curves.size());
    for (std::size_t p = 0; p < points; ++p) {
        for (std::size_t r = 0; r < curves.size(); ++r) column[r] = curves[r][p];
        mean[p] = stable_mean(column);
        lo[p] = sample_quantile(column, 0.025);
        hi[p] = sample_quantile(column, 0.975);
    }
}

}  // namespace

StudyReport monte_carlo_study(const SmileScenario& scenario, const StudyOptions& options) {
    scenario.validate();
    if (options.n_runs < 1) throw Error(ErrorCode::InvalidArgument, "study needs at least one run");

    StudyReport report;
    report.strike_grid = options.strike_grid.empty() ? linspace(scenario.strike_lo, scenario.strike_hi, 141)
                                                     : options.strike_grid;
    report.density_grid = options.density_grid.empty() ? report.strike_grid : options.density_grid;
    for (double x : report.strike_grid) report.true_price.push_back(scenario.true_price(x));
    for (double s : report.density_grid) report.true_density.push_back(scenario.true_density(s));

    const auto n_runs = static_cast<std::size_t>(options.n_runs);
    std::vector<std::optional<RunOutcome>> outcomes(n_runs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < n_runs; k = next++) {
            try {
                outcomes[k] = run_once(scenario, options, options.seed0 + k, report.strike_grid,
                                       report.density_grid, report.true_price, report.true_density);
            } catch (const Error&) {
                outcomes[k].reset();
            }
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(n_runs)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    std::vector<std::vector<double>> prices;
    std::vector<std::vector<double>> densities;
    for (std::size_t k = 0; k < n_runs; ++k) {
        const std::uint64_t seed = options.seed0 + k;
        if (!outcomes[k]) {
            report.failed_seeds.push_back(seed);
            continue;
        }
        auto& run = *outcomes[k];
        report.seeds.push_back(seed);
        report.price_ise.push_back(run.price_ise);
        report.density_ise.push_back(run.density_ise);
        report.sigma_floor.push_back(run.sigma);
        if (run.model) report.models.push_back(std::move(*run.model));
        prices.push_back(std::move(run.price));
        densities.push_back(std::move(run.density));
    }
    if (prices.empty() || 10 * report.failed_seeds.size() > n_runs)
        throw Error(ErrorCode::StudyFailed, std::to_string(report.failed_seeds.size()) + " of " +
                                                std::to_string(n_runs) + " runs failed");

    summarise(prices, report.strike_grid.size(), report.price_mean, report.price_lo, report.price_hi);
    summarise(densities, report.density_grid.size(), report.density_mean, report.density_lo,
              report.density_hi);
    return report;
}

}  // namespace spd
