#include "oracles.hpp"
#include "spd/error.hpp"
#include "spd/pricing.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace spd;

namespace {

MarketContext index_market() { return MarketContext(1365.0, 0.045, 0.025, 30.0 / 365.0); }

double rel_err(double a, double b) { return std::abs(a - b) / std::abs(b); }

MixtureModel random_model(std::mt19937_64& gen, const MarketContext& ctx, int m) {
    std::uniform_real_distribution<double> mu(-0.15, 0.15);
    std::uniform_real_distribution<double> sd(0.02, 0.15);
    std::uniform_real_distribution<double> raw(0.05, 1.0);
    std::vector<MixtureComponent> comps;
    std::vector<double> w;
    double total = 0.0;
    for (int j = 0; j < m; ++j) {
        comps.push_back({mu(gen), sd(gen)});
        w.push_back(raw(gen));
        total += w.back();
    }
    for (double& v : w) v /= total;
    return MixtureModel(ctx, comps, w);
}

double density_mass(const MixtureModel& model) {
    const double z = 5.997807015;  // -Phi^{-1}(1e-9)
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto& c : model.components()) {
        lo = std::min(lo, model.context().spot() * std::exp(c.mu - z * c.sigma));
        hi = std::max(hi, model.context().spot() * std::exp(c.mu + z * c.sigma));
    }
    return oracle::integrate([&](double s) { return mixture_density(model, s); }, lo, hi);
}

}  // namespace

TEST(NormalCdf, MatchesHighPrecisionOracle) {
    EXPECT_EQ(normal_cdf(0.0), 0.5);
    EXPECT_NEAR(normal_cdf(1.959964), oracle::normal_cdf(1.959964), 1e-12);
    EXPECT_NEAR(normal_cdf(1.959964), 0.975, 1e-6);
    for (double x = -10.0; x <= 10.0; x += 0.137) EXPECT_NEAR(normal_cdf(x), oracle::normal_cdf(x), 1e-12) << x;
}

TEST(NormalCdf, DeepTailIsNotFlushed) {
    const double v = normal_cdf(-8.0);
    EXPECT_GT(v, 0.0);
    EXPECT_LT(rel_err(v, oracle::normal_cdf(-8.0)), 1e-12);
    EXPECT_NEAR(v, 6.22e-16, 0.01e-16);
    // Upper tail keeps relative accuracy where 1 - cdf would be zero.
    EXPECT_LT(rel_err(normal_ccdf(10.0), oracle::normal_cdf(-10.0)), 1e-13);
    EXPECT_LT(rel_err(normal_ccdf(20.0), oracle::normal_cdf(-20.0)), 1e-13);
}

TEST(MarketContext, RejectsInvalidInputs) {
    EXPECT_THROW(MarketContext(0.0, 0.01, 0.0, 1.0), Error);
    EXPECT_THROW(MarketContext(100.0, 0.01, 0.0, 0.0), Error);
    EXPECT_THROW(MarketContext(100.0, NAN, 0.0, 1.0), Error);
    EXPECT_NEAR(index_market().forward(), 1365.0 * std::exp(0.02 * 30.0 / 365.0), 1e-12);
}

TEST(BsCallPrice, MatchesPayoffQuadrature) {
    const auto ctx = index_market();
    const double vol = 0.30;
    const double sd = vol * std::sqrt(ctx.tau());
    const double mu_abs = std::log(ctx.spot()) + (ctx.rate() - ctx.dividend_yield() - 0.5 * vol * vol) * ctx.tau();
    const double expected = oracle::call_by_quadrature(mu_abs, sd, 1365.0, std::exp(-ctx.rate() * ctx.tau()));
    EXPECT_LT(rel_err(bs_call_price(ctx, 1365.0, vol), expected), 1e-8);
}

TEST(BsCallPrice, LimitsAndBounds) {
    const auto ctx = index_market();
    const double disc = std::exp(-ctx.rate() * ctx.tau());
    EXPECT_NEAR(bs_call_price(ctx, 1300.0, 1e-9), disc * (ctx.forward() - 1300.0), 1e-9);
    EXPECT_LT(bs_call_price(ctx, 1e7, 0.3), 1e-300);
    const double carry = ctx.spot() * std::exp(-ctx.dividend_yield() * ctx.tau());
    for (double x = 500.0; x <= 2500.0; x += 50.0) {
        const double c = bs_call_price(ctx, x, 0.35);
        EXPECT_GE(c, std::max(0.0, carry - x * disc) - 1e-10);
        EXPECT_LE(c, carry);
    }
    EXPECT_THROW(bs_call_price(ctx, 0.0, 0.2), Error);
    EXPECT_THROW(bs_call_price(ctx, 100.0, 0.0), Error);
}

TEST(ComponentCallPrice, ReducesToBlackScholesOnAGrid) {
    const auto ctx = index_market();
    for (int i = 0; i < 20; ++i) {
        const double vol = 0.1 + 0.5 * i / 19.0;
        for (int k = 0; k < 20; ++k) {
            const double x = ctx.spot() * (0.5 + k / 19.0);
            const double bs = bs_call_price(ctx, x, vol);
            EXPECT_LE(rel_err(component_call_price(ctx, x, black_scholes_component(ctx, vol)), bs), 1e-12)
                << "vol " << vol << " strike " << x;
        }
    }
}

TEST(ComponentCallPrice, ZeroStrikeLimitAndOracle) {
    const auto ctx = index_market();
    const MixtureComponent comp{0.0, 0.10};
    EXPECT_LT(rel_err(component_call_price(ctx, 1e-12, comp), component_zero_strike_price(ctx, comp)), 1e-12);
    EXPECT_NEAR(component_zero_strike_price(ctx, comp),
                std::exp(-ctx.rate() * ctx.tau() + 0.005 + std::log(ctx.spot())), 1e-9);

    const double expected =
        oracle::call_by_quadrature(std::log(ctx.spot()), 0.10, 1200.0, std::exp(-ctx.rate() * ctx.tau()));
    EXPECT_LT(rel_err(component_call_price(ctx, 1200.0, comp), expected), 1e-8);
    EXPECT_THROW(component_call_price(ctx, -1.0, comp), Error);
}

TEST(ComponentPriceDmu, MatchesFiniteDifferences) {
    const auto ctx = index_market();
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> mu(-0.2, 0.2), sd(0.02, 0.3), x(900.0, 1800.0);
    for (int t = 0; t < 200; ++t) {
        const MixtureComponent c{mu(gen), sd(gen)};
        const double strike = x(gen);
        const double h = 1e-6;
        const double fd = (component_call_price(ctx, strike, {c.mu + h, c.sigma}) -
                           component_call_price(ctx, strike, {c.mu - h, c.sigma})) / (2 * h);
        const double an = component_price_dmu(ctx, strike, c);
        if (an < 1e-3) continue;  // FD loses relative accuracy on vanishing values
        EXPECT_LT(rel_err(an, fd), 1e-6) << c.mu << " " << c.sigma << " " << strike;
    }
    const MixtureComponent c{0.0, 0.1};
    EXPECT_EQ(component_price_dmu(ctx, 1e9, c), 0.0);
    EXPECT_LT(rel_err(component_price_dmu(ctx, 1e-9, c), component_zero_strike_price(ctx, c)), 1e-12);
}

TEST(MixtureCallPrice, LinearityAndOracle) {
    const auto ctx = index_market();
    const MixtureComponent a{-0.03, 0.05}, b{0.04, 0.08}, c{0.0, 0.12};
    const MixtureModel single(ctx, {a}, {1.0});
    EXPECT_DOUBLE_EQ(mixture_call_price(single, 1300.0), component_call_price(ctx, 1300.0, a));
    const MixtureModel pair(ctx, {a, b}, {0.5, 0.5});
    EXPECT_NEAR(mixture_call_price(pair, 1400.0),
                0.5 * (component_call_price(ctx, 1400.0, a) + component_call_price(ctx, 1400.0, b)), 1e-12);

    const MixtureModel three(ctx, {a, b, c}, {0.2, 0.3, 0.5});
    const double disc = std::exp(-ctx.rate() * ctx.tau());
    for (double x : {1000.0, 1200.0, 1365.0, 1500.0, 1700.0}) {
        const double expected = 0.2 * oracle::call_by_quadrature(std::log(ctx.spot()) + a.mu, a.sigma, x, disc) +
                                0.3 * oracle::call_by_quadrature(std::log(ctx.spot()) + b.mu, b.sigma, x, disc) +
                                0.5 * oracle::call_by_quadrature(std::log(ctx.spot()) + c.mu, c.sigma, x, disc);
        EXPECT_LT(rel_err(mixture_call_price(three, x), expected), 1e-8) << x;
    }
}

TEST(MixtureDensity, MedianValueAndNormalisation) {
    const auto ctx = index_market();
    const MixtureComponent c{0.01, 0.07};
    const MixtureModel single(ctx, {c}, {1.0});
    const double median = ctx.spot() * std::exp(c.mu);
    const double expected = oracle::lognormal_pdf(median, std::log(ctx.spot()) + c.mu, c.sigma);
    EXPECT_LT(rel_err(mixture_density(single, median), expected), 1e-13);
    EXPECT_THROW(mixture_density(single, 0.0), Error);

    std::mt19937_64 gen(3);
    for (int t = 0; t < 10; ++t) EXPECT_NEAR(density_mass(random_model(gen, ctx, 1 + t % 5)), 1.0, 1e-6);
}

TEST(MixtureDensity, SecondStrikeDerivativeConverges) {
    // e^{r tau} C'' recovers the density with O(h^2) central-difference error.
    const auto ctx = index_market();
    std::mt19937_64 gen(5);
    for (int t = 0; t < 10; ++t) {
        const auto model = random_model(gen, ctx, 3);
        double sigma = 1.0;
        for (const auto& c : model.components()) sigma = std::min(sigma, c.sigma);
        auto sup_err = [&](double h) {
            double e = 0.0;
            for (int k = 0; k <= 40; ++k) {
                const double s = ctx.spot() * (0.85 + 0.3 * k / 40.0);
                const double fd = (mixture_call_price(model, s - h) - 2 * mixture_call_price(model, s) +
                                   mixture_call_price(model, s + h)) / (h * h);
                e = std::max(e, std::abs(fd / ctx.discount() - mixture_density(model, s)));
            }
            return e;
        };
        const double h = 0.25 * sigma * ctx.spot();
        EXPECT_NEAR(sup_err(h) / sup_err(h / 2), 4.0, 0.5) << "model " << t;
        EXPECT_LT(sup_err(h / 8), 2e-3 * mixture_density(model, ctx.spot()) + 1e-9);
    }
}

TEST(MixturePriceDerivatives, SlopeBoundsAndFiniteDifferences) {
    const auto ctx = index_market();
    std::mt19937_64 gen(9);
    const double disc = ctx.discount();
    for (int t = 0; t < 20; ++t) {
        const auto model = random_model(gen, ctx, 1 + t % 6);
        for (double x = 900.0; x <= 1900.0; x += 37.0) {
            const auto d = mixture_price_derivatives(model, x);
            EXPECT_LE(d.first, 0.0);
            EXPECT_GE(d.first, -disc);
            EXPECT_DOUBLE_EQ(d.second, disc * mixture_density(model, x));
            const double h = 1e-3;
            const double fd = (mixture_call_price(model, x + h) - mixture_call_price(model, x - h)) / (2 * h);
            if (std::abs(d.first) > 1e-4) EXPECT_LT(rel_err(d.first, fd), 1e-6) << x;
        }
    }
}

TEST(MixtureMean, IdentitiesAndQuadrature) {
    const auto ctx = index_market();
    const MixtureModel bs(ctx, {black_scholes_component(ctx, 0.25)}, {1.0});
    EXPECT_LT(rel_err(mixture_mean(bs), ctx.forward()), 1e-14);

    const MixtureComponent a{-0.05, 0.04}, b{0.06, 0.09};
    const MixtureModel pair(ctx, {a, b}, {0.5, 0.5});
    const MixtureModel ma(ctx, {a}, {1.0}), mb(ctx, {b}, {1.0});
    EXPECT_NEAR(mixture_mean(pair), 0.5 * (mixture_mean(ma) + mixture_mean(mb)), 1e-10);

    const MixtureModel four(ctx, {{-0.1, 0.05}, {-0.02, 0.03}, {0.03, 0.06}, {0.09, 0.04}}, {0.1, 0.4, 0.3, 0.2});
    const double quad = oracle::integrate([&](double s) { return s * mixture_density(four, s); }, 500.0, 3000.0);
    EXPECT_LT(rel_err(mixture_mean(four), quad), 1e-6);
}

TEST(MixtureModel, ValidatesWeights) {
    const auto ctx = index_market();
    EXPECT_THROW(MixtureModel(ctx, {}, {}), Error);
    EXPECT_THROW(MixtureModel(ctx, {{0.0, 0.1}}, {0.9}), Error);
    EXPECT_THROW(MixtureModel(ctx, {{0.0, 0.1}, {0.1, 0.1}}, {1.2, -0.2}), Error);
    EXPECT_THROW(MixtureModel(ctx, {{0.0, 0.0}}, {1.0}), Error);
    EXPECT_THROW(MixtureModel(ctx, {{0.0, 0.1}}, {0.5, 0.5}), Error);
    EXPECT_NO_THROW(MixtureModel(ctx, {{0.0, 0.1}, {0.1, 0.1}}, {0.3, 0.7}));
}

TEST(MixtureProperties, PriceEnvelopeAndShapeOnRandomModels) {
    const auto ctx = index_market();
    std::mt19937_64 gen(21);
    const double disc = ctx.discount();
    for (int t = 0; t < 50; ++t) {
        const auto model = random_model(gen, ctx, 1 + t % 8);
        const double mean = mixture_mean(model);
        std::vector<double> grid;
        for (int k = 0; k < 300; ++k) grid.push_back(600.0 + 6.0 * k);
        const auto c = mixture_call_prices(model, grid);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            EXPECT_GE(c[k], std::max(0.0, disc * (mean - grid[k])) - 1e-9);
            EXPECT_LE(c[k], disc * mean + 1e-9);
            if (k > 0) EXPECT_LE(c[k], c[k - 1] + 1e-12);
            if (k > 0 && k + 1 < grid.size()) EXPECT_GE(c[k - 1] - 2 * c[k] + c[k + 1], -1e-10);
        }
    }
}

TEST(Parity, RecoversDividendYield) {
    const MarketContext ctx(1365.0, 0.045, 0.0, 30.0 / 365.0);
    const double q = 0.025;
    const double x = 1350.0;
    const double call = 40.0;
    const double put = call + x * ctx.discount() - ctx.spot() * std::exp(-q * ctx.tau());
    EXPECT_NEAR(implied_dividend_from_parity(call, put, ctx, x), q, 1e-12);

    const MarketContext flat(100.0, 0.0, 0.0, 1.0);
    EXPECT_NEAR(implied_dividend_from_parity(5.0, 5.0, flat, 100.0), 0.0, 1e-15);

    try {
        implied_dividend_from_parity(1.0, 2000.0, ctx, x);
        FAIL() << "expected an inconsistent-parity error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InconsistentParity);
    }
}
