#include "spd/baselines.hpp"

#include "spd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace spd {

namespace {

constexpr double kVolLo = 1e-4;
constexpr double kVolHi = 5.0;
constexpr int kScanPoints = 64;

double bs_objective(std::span<const Quote> quotes, std::span<const double> w,
                    const MarketContext& ctx, double vol) {
    double total = 0.0;
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        const double r = quotes[i].price - bs_call_price(ctx, quotes[i].strike, vol);
        total += w[i] * r * r;
    }
    return total / static_cast<double>(quotes.size());
}

double bs_vega(const MarketContext& ctx, double strike, double vol) {
    const double sd = vol * std::sqrt(ctx.tau());
    const double d1 = (std::log(ctx.spot() / strike) +
                       (ctx.rate() - ctx.dividend_yield()) * ctx.tau()) / sd + 0.5 * sd;
    return ctx.spot() * std::exp(-ctx.dividend_yield() * ctx.tau()) * std::sqrt(ctx.tau()) *
           normal_pdf(d1);
}

}  // namespace

BsFit fit_black_scholes(std::span<const Quote> quotes, const MarketContext& ctx, WeightMode mode) {
    if (quotes.empty()) throw Error(ErrorCode::EmptyQuotes, "no quotes for the Black-Scholes fit");
    for (const auto& q : quotes) validate_quote(q);
    const auto w = effective_weights(quotes, mode);
    auto objective = [&](double vol) { return bs_objective(quotes, w, ctx, vol); };

    const double step = (kVolHi - kVolLo) / (kScanPoints - 1);
    int best = 0;
    double best_obj = std::numeric_limits<double>::infinity();
    for (int k = 0; k < kScanPoints; ++k) {
        const double f = objective(kVolLo + step * k);
        if (f < best_obj) {
            best_obj = f;
            best = k;
        }
    }

    // Golden-section search on the bracket around the best scan point.
    double a = kVolLo + step * std::max(0, best - 1);
    double b = kVolLo + step * std::min(kScanPoints - 1, best + 1);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = objective(c);
    double fd = objective(d);
    while (b - a > 1e-9) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
    }
    double vol = fc < fd ? c : d;
    double f = std::min(fc, fd);

    // Gauss-Newton polish; only improvements are kept.
    for (int it = 0; it < 20; ++it) {
        double num = 0.0;
        double den = 0.0;
        for (std::size_t i = 0; i < quotes.size(); ++i) {
            const double r = bs_call_price(ctx, quotes[i].strike, vol) - quotes[i].price;
            const double v = bs_vega(ctx, quotes[i].strike, vol);
            num += w[i] * r * v;
            den += w[i] * v * v;
        }
        if (!(den > 0.0)) break;
        const double next = std::clamp(vol - num / den, kVolLo, kVolHi);
        const double fn = objective(next);
        if (!(fn < f)) break;
        vol = next;
        f = fn;
    }
    return {vol, f};
}

GridDensity naive_second_difference_spd(std::span<const Quote> quotes, const MarketContext& ctx) {
    // Duplicate strikes are averaged into one observation.
    std::map<double, std::pair<double, int>> by_strike;
    for (const auto& q : quotes) {
        validate_quote(q);
        auto& slot = by_strike[q.strike];
        slot.first += q.price;
        slot.second += 1;
    }
    if (by_strike.size() < 3)
        throw Error(ErrorCode::InvalidArgument, "naive density needs at least 3 distinct strikes");

    GridDensity out;
    std::vector<double> price;
    for (const auto& [strike, acc] : by_strike) {
        out.grid.push_back(strike);
        price.push_back(acc.first / acc.second);
    }
    const double growth = 1.0 / ctx.discount();
    for (std::size_t i = 1; i + 1 < out.grid.size(); ++i) {
        const double h0 = out.grid[i] - out.grid[i - 1];
        const double h1 = out.grid[i + 1] - out.grid[i];
        const double slope_hi = (price[i + 1] - price[i]) / h1;
        const double slope_lo = (price[i] - price[i - 1]) / h0;
        out.values.push_back(growth * 2.0 * (slope_hi - slope_lo) / (h0 + h1));
    }
    return out;
}

}  // namespace spd
