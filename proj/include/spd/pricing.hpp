#pragma once

#include <span>
#include <vector>

namespace spd {

// ---------------------------------------------------------------------------
// Standard normal helpers
// ---------------------------------------------------------------------------

/// Standard normal CDF.
double normal_cdf(double x) noexcept;

/// Upper tail 1 - CDF(x), evaluated through erfc so it keeps full relative
/// accuracy for large positive x.
double normal_ccdf(double x) noexcept;

double normal_pdf(double x) noexcept;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Economic environment of a single expiry. Rates are continuously
/// compounded; tau is an ACT/365 year fraction.
class MarketContext {
public:
    MarketContext(double spot, double rate, double dividend_yield, double tau);

    double spot() const noexcept { return spot_; }
    double rate() const noexcept { return rate_; }
    double dividend_yield() const noexcept { return dividend_yield_; }
    double tau() const noexcept { return tau_; }

    double forward() const noexcept;
    double discount() const noexcept;  ///< e^{-r tau}

private:
    double spot_;
    double rate_;
    double dividend_yield_;
    double tau_;
};

/// One lognormal atom. `mu` is the mean of ln(S_T / S_t), `sigma` its
/// standard deviation over the whole horizon (not annualized).
struct MixtureComponent {
    double mu;
    double sigma;
};

/// Component whose price coincides with Black-Scholes at annual vol `vol`.
MixtureComponent black_scholes_component(const MarketContext& ctx, double vol);

/// Discrete mixing distribution over lognormal atoms. Weights are validated
/// to lie on the probability simplex (sum within 1e-12).
class MixtureModel {
public:
    MixtureModel(MarketContext ctx, std::vector<MixtureComponent> components,
                 std::vector<double> weights);

    const MarketContext& context() const noexcept { return ctx_; }
    const std::vector<MixtureComponent>& components() const noexcept { return components_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    std::size_t size() const noexcept { return weights_.size(); }

private:
    MarketContext ctx_;
    std::vector<MixtureComponent> components_;
    std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// Pricing
// ---------------------------------------------------------------------------

/// Black-Scholes European call with continuous dividend yield.
double bs_call_price(const MarketContext& ctx, double strike, double vol);

/// Closed-form call price under a single lognormal atom.
double component_call_price(const MarketContext& ctx, double strike,
                            const MixtureComponent& comp);

/// d/dmu of component_call_price. The density terms cancel, leaving
/// e^{-r tau + mu_abs + sigma^2/2} * ccdf((ln X - mu_abs - sigma^2) / sigma).
double component_price_dmu(const MarketContext& ctx, double strike,
                           const MixtureComponent& comp);

/// Limit of component_call_price as strike -> 0+, the discounted atom mean.
double component_zero_strike_price(const MarketContext& ctx, const MixtureComponent& comp);

double mixture_call_price(const MixtureModel& model, double strike);

/// Risk-neutral density of S_T at `s`.
double mixture_density(const MixtureModel& model, double s);

struct PriceDerivatives {
    double first;   ///< dC/dX, within [-e^{-r tau}, 0]
    double second;  ///< d2C/dX2 = e^{-r tau} * density
};

PriceDerivatives mixture_price_derivatives(const MixtureModel& model, double strike);

/// Risk-neutral mean of S_T under the mixture.
double mixture_mean(const MixtureModel& model);

/// Inverts put-call parity P + S e^{-q tau} = C + X e^{-r tau} for q.
/// The dividend yield stored in `ctx` is ignored.
double implied_dividend_from_parity(double call, double put, const MarketContext& ctx,
                                    double strike);

/// Vectorised convenience wrappers.
std::vector<double> mixture_call_prices(const MixtureModel& model, std::span<const double> strikes);
std::vector<double> mixture_densities(const MixtureModel& model, std::span<const double> points);

}  // namespace spd
