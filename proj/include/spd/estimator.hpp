#pragma once

#include "spd/pricing.hpp"
#include "spd/qp.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace spd {

/// One observed call quote. `weight` is the user-supplied liquidity weight.
struct Quote {
    double strike;
    double price;
    double weight = 1.0;
};

void validate_quote(const Quote& q);

enum class WeightMode {
    Unit,          ///< w_i = quote weight
    InversePrice,  ///< w_i = quote weight / C_i (quote weight alone below the price floor)
};

/// Prices below this floor keep their plain weight under InversePrice.
inline constexpr double kInversePriceFloor = 1e-6;

/// Mixture atoms with weight below this are dropped from the reported model.
inline constexpr double kPruneThreshold = 1e-12;

struct FitConfig {
    /// Common atom scale (std. dev. of ln(S_T/S_t) over the horizon).
    double sigma_floor = 0.0;
    /// Half-width of the box the means live in. Defaults to 5 * sigma_floor.
    std::optional<double> mu_bound;
    /// Centre of the mean box. Defaults to (r - q) * tau when fitting.
    std::optional<double> mu_center;
    /// Number of atoms. Defaults to n_quotes + 1.
    std::optional<int> n_components;
    /// Target forward price for the risk-neutral mean, if enforced.
    std::optional<double> forward_constraint;
    int newton_iters = 1;
    double kkt_tol = 1e-8;
    WeightMode weight_mode = WeightMode::Unit;
};

/// Fills every defaulted field of `config` for a fit of `n_quotes` quotes.
FitConfig resolve_config(const FitConfig& config, const MarketContext& ctx, std::size_t n_quotes);

struct FitResult {
    MixtureModel model;
    double objective = 0.0;  ///< (1/n) sum w_i (C_i - C_hat(X_i))^2
    double kkt_residual = 0.0;
    int iterations_used = 0;
    std::vector<double> per_quote_residuals;  ///< C_i - C_hat(X_i)
    std::vector<double> objective_trace;      ///< objective after each QP / Newton phase
};

/// Effective least-squares weights for `quotes` under `mode`.
std::vector<double> effective_weights(std::span<const Quote> quotes, WeightMode mode);

/// Equally spaced means on [center - M, center + M]; a single atom sits at
/// the centre. Requires n_components to be set.
std::vector<double> init_equispaced_means(const FitConfig& config);

/// A(i, j) = price of quote i's strike under atom (means[j], sigma_floor).
Eigen::MatrixXd design_matrix(std::span<const Quote> quotes, std::span<const double> means,
                              double sigma_floor, const MarketContext& ctx);

/// Coefficients of the forward-price equality: spot * e^{sigma^2/2 + mu_j}.
Eigen::VectorXd forward_coefficients(std::span<const double> means, double sigma_floor,
                                     const MarketContext& ctx);

/// Up to `config.newton_iters` damped Gauss-Newton steps on the atom means
/// with the mixture weights held fixed. Never increases the weighted
/// objective; means are clipped to the configured box.
std::vector<double> refine_means_newton(std::span<const Quote> quotes, const MixtureModel& model,
                                        const FitConfig& config);

/// Residual vector r_i = C_i - C_model(X_i) and its Jacobian in the atom
/// means. Exposed for tests.
struct ResidualJacobian {
    Eigen::VectorXd residuals;
    Eigen::MatrixXd jacobian;
};
ResidualJacobian residual_jacobian(std::span<const Quote> quotes, const MixtureModel& model);

/// Weighted least-squares fit of a lognormal mixture to call quotes.
FitResult fit(std::span<const Quote> quotes, const MarketContext& ctx, const FitConfig& config);

struct CvResult {
    double sigma_floor;
    std::vector<double> sigma_grid;
    std::vector<double> scores;  ///< +inf where a leave-one-out fit failed
};

/// Default candidate grid {0.5, 0.625, 0.75, 0.875, 1.0} * vol_bs * sqrt(tau),
/// where vol_bs is the least-squares Black-Scholes volatility.
std::vector<double> default_sigma_grid(std::span<const Quote> quotes, const MarketContext& ctx,
                                       WeightMode mode);

/// Picks sigma_floor by leave-one-out cross-validation on weighted squared
/// price error. Ties go to the larger sigma. An empty grid selects the
/// default grid.
CvResult loocv_select_sigma(std::span<const Quote> quotes, const MarketContext& ctx,
                            const FitConfig& config_template, std::vector<double> sigma_grid = {});

}  // namespace spd
