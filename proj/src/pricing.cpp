#include "spd/pricing.hpp"

#include "spd/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace spd {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid-argument";
        case ErrorCode::EmptyQuotes: return "empty-quotes";
        case ErrorCode::InconsistentParity: return "inconsistent-parity";
        case ErrorCode::Infeasible: return "infeasible";
        case ErrorCode::NonConvergence: return "non-convergence";
        case ErrorCode::Parse: return "parse";
        case ErrorCode::Io: return "io";
        case ErrorCode::StudyFailed: return "study-failed";
    }
    return "unknown";
}

int exit_status(ErrorCode code) noexcept {
    return 2 + static_cast<int>(code);
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

void require(bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidArgument, what);
}

void require_strike(double strike) {
    if (!(strike > 0.0) || !std::isfinite(strike))
        throw Error(ErrorCode::InvalidArgument, "strike must be positive and finite");
}

long double ld_ccdf(long double x) { return 0.5L * std::erfc(x / std::sqrt(2.0L)); }

// Out of the money the two terms of the closed form nearly cancel and the
// Gaussian tail amplifies argument rounding, so these branches run in
// extended precision.
double bs_call_extended(const MarketContext& ctx, double strike, long double sd) {
    const long double tau = ctx.tau();
    const long double d1 = (std::log(static_cast<long double>(ctx.spot()) / strike) +
                            (static_cast<long double>(ctx.rate()) - ctx.dividend_yield()) * tau) / sd + 0.5L * sd;
    const long double carry = ctx.spot() * std::exp(-ctx.dividend_yield() * tau);
    const long double disc = std::exp(-ctx.rate() * tau);
    return static_cast<double>(carry * ld_ccdf(-d1) - strike * disc * ld_ccdf(sd - d1));
}

double component_call_extended(const MarketContext& ctx, double strike, const MixtureComponent& comp) {
    const long double s = comp.sigma;
    const long double z = (std::log(static_cast<long double>(strike) / ctx.spot()) - comp.mu) / s;
    const long double rt = static_cast<long double>(ctx.rate()) * ctx.tau();
    const long double upper = ctx.spot() * std::exp(-rt + 0.5L * s * s + comp.mu) * ld_ccdf(z - s);
    const long double lower = std::exp(-rt) * strike * ld_ccdf(z);
    return static_cast<double>(std::max(0.0L, upper - lower));
}

}  // namespace

double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x * kInvSqrt2); }

double normal_ccdf(double x) noexcept { return 0.5 * std::erfc(x * kInvSqrt2); }

double normal_pdf(double x) noexcept {
    return std::numbers::inv_sqrtpi * kInvSqrt2 * std::exp(-0.5 * x * x);
}

MarketContext::MarketContext(double spot, double rate, double dividend_yield, double tau)
    : spot_(spot), rate_(rate), dividend_yield_(dividend_yield), tau_(tau) {
    require(spot > 0.0 && std::isfinite(spot), "spot must be positive and finite");
    require(tau > 0.0 && std::isfinite(tau), "tau must be positive and finite");
    require(std::isfinite(rate), "rate must be finite");
    require(std::isfinite(dividend_yield), "dividend yield must be finite");
}

double MarketContext::forward() const noexcept {
    return spot_ * std::exp((rate_ - dividend_yield_) * tau_);
}

double MarketContext::discount() const noexcept { return std::exp(-rate_ * tau_); }

MixtureComponent black_scholes_component(const MarketContext& ctx, double vol) {
    require(vol > 0.0 && std::isfinite(vol), "vol must be positive and finite");
    return {(ctx.rate() - ctx.dividend_yield() - 0.5 * vol * vol) * ctx.tau(),
            vol * std::sqrt(ctx.tau())};
}

MixtureModel::MixtureModel(MarketContext ctx, std::vector<MixtureComponent> components,
                           std::vector<double> weights)
    : ctx_(ctx), components_(std::move(components)), weights_(std::move(weights)) {
    require(!weights_.empty(), "mixture needs at least one component");
    require(components_.size() == weights_.size(), "components and weights differ in length");
    for (const auto& c : components_) {
        require(std::isfinite(c.mu), "component mean must be finite");
        require(c.sigma > 0.0 && std::isfinite(c.sigma), "component sigma must be positive");
    }
    for (double w : weights_) require(w >= 0.0 && std::isfinite(w), "weights must be nonnegative");
    const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
    require(std::abs(total - 1.0) <= 1e-12, "weights must sum to one");
}

double bs_call_price(const MarketContext& ctx, double strike, double vol) {
    require_strike(strike);
    require(vol > 0.0 && std::isfinite(vol), "vol must be positive and finite");
    const double sd = vol * std::sqrt(ctx.tau());
    const double d1 = (std::log(ctx.spot() / strike) + (ctx.rate() - ctx.dividend_yield()) * ctx.tau()) / sd +
                      0.5 * sd;
    if (d1 < 0.0) return bs_call_extended(ctx, strike, sd);
    const double d2 = d1 - sd;
    const double carry = ctx.spot() * std::exp(-ctx.dividend_yield() * ctx.tau());
    return carry * normal_cdf(d1) - strike * ctx.discount() * normal_cdf(d2);
}

double component_zero_strike_price(const MarketContext& ctx, const MixtureComponent& comp) {
    return ctx.spot() * std::exp(-ctx.rate() * ctx.tau() + 0.5 * comp.sigma * comp.sigma + comp.mu);
}

double component_call_price(const MarketContext& ctx, double strike,
                            const MixtureComponent& comp) {
    require_strike(strike);
    const double s = comp.sigma;
    const double z = (std::log(strike / ctx.spot()) - comp.mu) / s;
    if (z > s) return component_call_extended(ctx, strike, comp);
    const double upper = component_zero_strike_price(ctx, comp) * normal_ccdf(z - s);
    const double lower = ctx.discount() * strike * normal_ccdf(z);
    return std::max(0.0, upper - lower);
}

double component_price_dmu(const MarketContext& ctx, double strike,
                           const MixtureComponent& comp) {
    require_strike(strike);
    const double s = comp.sigma;
    const double z = (std::log(strike / ctx.spot()) - comp.mu) / s;
    return component_zero_strike_price(ctx, comp) * normal_ccdf(z - s);
}

double mixture_call_price(const MixtureModel& model, double strike) {
    require_strike(strike);
    const auto& comps = model.components();
    const auto& w = model.weights();
    double total = 0.0;
    for (std::size_t j = 0; j < comps.size(); ++j) {
        if (w[j] == 0.0) continue;
        total += w[j] * component_call_price(model.context(), strike, comps[j]);
    }
    return total;
}

double mixture_density(const MixtureModel& model, double s) {
    if (!(s > 0.0) || !std::isfinite(s))
        throw Error(ErrorCode::InvalidArgument, "density abscissa must be positive and finite");
    const double log_moneyness = std::log(s / model.context().spot());
    const auto& comps = model.components();
    const auto& w = model.weights();
    double total = 0.0;
    for (std::size_t j = 0; j < comps.size(); ++j) {
        if (w[j] == 0.0) continue;
        const double z = (log_moneyness - comps[j].mu) / comps[j].sigma;
        total += w[j] * normal_pdf(z) / comps[j].sigma;
    }
    return total / s;
}

PriceDerivatives mixture_price_derivatives(const MixtureModel& model, double strike) {
    require_strike(strike);
    const auto& ctx = model.context();
    const double log_moneyness = std::log(strike / ctx.spot());
    const auto& comps = model.components();
    const auto& w = model.weights();
    double tail = 0.0;
    for (std::size_t j = 0; j < comps.size(); ++j) {
        if (w[j] == 0.0) continue;
        tail += w[j] * normal_ccdf((log_moneyness - comps[j].mu) / comps[j].sigma);
    }
    // The tail mass is a probability; rounding in the weights can push it past 1.
    tail = std::clamp(tail, 0.0, 1.0);
    return {-ctx.discount() * tail, ctx.discount() * mixture_density(model, strike)};
}

double mixture_mean(const MixtureModel& model) {
    const double spot = model.context().spot();
    const auto& comps = model.components();
    const auto& w = model.weights();
    double total = 0.0;
    for (std::size_t j = 0; j < comps.size(); ++j)
        total += w[j] * std::exp(comps[j].mu + 0.5 * comps[j].sigma * comps[j].sigma);
    return spot * total;
}

double implied_dividend_from_parity(double call, double put, const MarketContext& ctx,
                                    double strike) {
    require_strike(strike);
    require(std::isfinite(call) && std::isfinite(put), "option prices must be finite");
    const double carry = call - put + strike * ctx.discount();
    if (!(carry > 0.0))
        throw Error(ErrorCode::InconsistentParity,
                    "C - P + X e^{-r tau} must be positive, got " + std::to_string(carry));
    return -std::log(carry / ctx.spot()) / ctx.tau();
}

std::vector<double> mixture_call_prices(const MixtureModel& model, std::span<const double> strikes) {
    std::vector<double> out;
    out.reserve(strikes.size());
    for (double x : strikes) out.push_back(mixture_call_price(model, x));
    return out;
}

std::vector<double> mixture_densities(const MixtureModel& model, std::span<const double> points) {
    std::vector<double> out;
    out.reserve(points.size());
    for (double s : points) out.push_back(mixture_density(model, s));
    return out;
}

}  // namespace spd
