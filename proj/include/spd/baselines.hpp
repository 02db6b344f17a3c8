#pragma once

#include "spd/estimator.hpp"
#include "spd/pricing.hpp"

#include <span>
#include <vector>

namespace spd {

struct BsFit {
    double vol;        ///< annualised volatility
    double objective;  ///< (1/n) sum w_i (C_i - BS(X_i; vol))^2
};

/// Single-volatility least-squares Black-Scholes fit. The volatility is
/// searched on [1e-4, 5]: a 64-point scan, golden-section refinement around
/// the best scan point, then a Gauss-Newton polish in vega.
BsFit fit_black_scholes(std::span<const Quote> quotes, const MarketContext& ctx, WeightMode mode);

/// Raw divided-difference density estimate at the interior grid points.
struct GridDensity {
    std::vector<double> grid;    ///< strictly increasing strikes
    std::vector<double> values;  ///< size grid.size() - 2, may be negative
};

/// e^{r tau} times the three-point divided second difference of the
/// observed prices, on a possibly uneven strike grid. Quotes must be sorted
/// by strictly increasing strike. No clipping is applied.
GridDensity naive_second_difference_spd(std::span<const Quote> quotes, const MarketContext& ctx);

}  // namespace spd
