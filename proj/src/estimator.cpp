#include "spd/estimator.hpp"

#include "spd/baselines.hpp"
#include "spd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace spd {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double weighted_objective(std::span<const double> w, const VectorXd& r) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) total += w[static_cast<std::size_t>(i)] * r(i) * r(i);
    return total / static_cast<double>(r.size());
}

std::vector<MixtureComponent> components_for(std::span<const double> means, double sigma) {
    std::vector<MixtureComponent> out;
    out.reserve(means.size());
    for (double mu : means) out.push_back({mu, sigma});
    return out;
}

std::vector<double> normalised(const VectorXd& pi) {
    std::vector<double> w(static_cast<std::size_t>(pi.size()));
    double total = 0.0;
    for (Eigen::Index j = 0; j < pi.size(); ++j) {
        w[static_cast<std::size_t>(j)] = std::max(0.0, pi(j));
        total += w[static_cast<std::size_t>(j)];
    }
    if (!(total > 0.0)) throw Error(ErrorCode::NonConvergence, "QP returned a zero weight vector");
    for (double& v : w) v /= total;
    return w;
}

VectorXd observed_prices(std::span<const Quote> quotes) {
    VectorXd c(static_cast<Eigen::Index>(quotes.size()));
    for (std::size_t i = 0; i < quotes.size(); ++i) c(static_cast<Eigen::Index>(i)) = quotes[i].price;
    return c;
}

VectorXd to_vector(std::span<const double> v) {
    VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
    return out;
}

void validate_quotes(std::span<const Quote> quotes) {
    if (quotes.empty()) throw Error(ErrorCode::EmptyQuotes, "no quotes to fit");
    for (const auto& q : quotes) validate_quote(q);
}

struct WeightSolve {
    QpSolution qp;
    std::vector<double> weights;
};

WeightSolve solve_weights(std::span<const Quote> quotes, std::span<const double> means,
                          const FitConfig& cfg, const MarketContext& ctx, const VectorXd& prices,
                          const VectorXd& w) {
    const MatrixXd a = design_matrix(quotes, means, cfg.sigma_floor, ctx);
    std::optional<LinearEquality> eq;
    if (cfg.forward_constraint)
        eq = LinearEquality{forward_coefficients(means, cfg.sigma_floor, ctx), *cfg.forward_constraint};
    auto qp = solve_weights_qp(a, prices, w, eq, cfg.kkt_tol);
    auto weights = normalised(qp.weights);
    return {std::move(qp), std::move(weights)};
}

}  // namespace

void validate_quote(const Quote& q) {
    if (!(q.strike > 0.0) || !std::isfinite(q.strike))
        throw Error(ErrorCode::InvalidArgument, "quote strike must be positive and finite");
    if (!(q.price >= 0.0) || !std::isfinite(q.price))
        throw Error(ErrorCode::InvalidArgument, "quote price must be nonnegative and finite");
    if (!(q.weight >= 0.0) || !std::isfinite(q.weight))
        throw Error(ErrorCode::InvalidArgument, "quote weight must be nonnegative and finite");
}

FitConfig resolve_config(const FitConfig& config, const MarketContext& ctx, std::size_t n_quotes) {
    if (!(config.sigma_floor > 0.0) || !std::isfinite(config.sigma_floor))
        throw Error(ErrorCode::InvalidArgument, "sigma_floor must be positive");
    if (!(config.kkt_tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "kkt_tol must be positive");
    if (config.newton_iters < 0) throw Error(ErrorCode::InvalidArgument, "newton_iters must be >= 0");
    FitConfig out = config;
    if (!out.mu_bound) out.mu_bound = 5.0 * config.sigma_floor;
    if (!out.mu_center) out.mu_center = (ctx.rate() - ctx.dividend_yield()) * ctx.tau();
    if (!out.n_components) out.n_components = static_cast<int>(n_quotes) + 1;
    if (!(*out.mu_bound > 0.0)) throw Error(ErrorCode::InvalidArgument, "mu_bound must be positive");
    if (*out.n_components < 1) throw Error(ErrorCode::InvalidArgument, "n_components must be >= 1");
    if (out.forward_constraint && !(*out.forward_constraint > 0.0))
        throw Error(ErrorCode::InvalidArgument, "forward constraint must be positive");
    return out;
}

std::vector<double> effective_weights(std::span<const Quote> quotes, WeightMode mode) {
    std::vector<double> w;
    w.reserve(quotes.size());
    for (const auto& q : quotes) {
        if (mode == WeightMode::InversePrice && q.price >= kInversePriceFloor)
            w.push_back(q.weight / q.price);
        else
            w.push_back(q.weight);
    }
    return w;
}

std::vector<double> init_equispaced_means(const FitConfig& config) {
    if (!config.n_components || *config.n_components < 1)
        throw Error(ErrorCode::InvalidArgument, "n_components must be set and >= 1");
    const double bound = config.mu_bound.value_or(5.0 * config.sigma_floor);
    if (!(bound > 0.0)) throw Error(ErrorCode::InvalidArgument, "mu_bound must be positive");
    const double center = config.mu_center.value_or(0.0);
    const int m = *config.n_components;
    if (m == 1) return {center};
    std::vector<double> means(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j)
        means[static_cast<std::size_t>(j)] = center - bound + 2.0 * bound * j / (m - 1);
    means.back() = center + bound;
    return means;
}

MatrixXd design_matrix(std::span<const Quote> quotes, std::span<const double> means,
                       double sigma_floor, const MarketContext& ctx) {
    if (quotes.empty()) throw Error(ErrorCode::EmptyQuotes, "design matrix needs at least one quote");
    MatrixXd a(static_cast<Eigen::Index>(quotes.size()), static_cast<Eigen::Index>(means.size()));
    for (std::size_t j = 0; j < means.size(); ++j) {
        const MixtureComponent comp{means[j], sigma_floor};
        for (std::size_t i = 0; i < quotes.size(); ++i)
            a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                component_call_price(ctx, quotes[i].strike, comp);
    }
    return a;
}

VectorXd forward_coefficients(std::span<const double> means, double sigma_floor,
                              const MarketContext& ctx) {
    VectorXd a(static_cast<Eigen::Index>(means.size()));
    for (std::size_t j = 0; j < means.size(); ++j)
        a(static_cast<Eigen::Index>(j)) = ctx.spot() * std::exp(0.5 * sigma_floor * sigma_floor + means[j]);
    return a;
}

ResidualJacobian residual_jacobian(std::span<const Quote> quotes, const MixtureModel& model) {
    const auto& ctx = model.context();
    const auto& comps = model.components();
    const auto& pi = model.weights();
    const auto n = static_cast<Eigen::Index>(quotes.size());
    const auto m = static_cast<Eigen::Index>(comps.size());
    ResidualJacobian out{VectorXd(n), MatrixXd::Zero(n, m)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = quotes[static_cast<std::size_t>(i)].strike;
        double fitted = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            const auto& c = comps[static_cast<std::size_t>(j)];
            const double w = pi[static_cast<std::size_t>(j)];
            if (w == 0.0) continue;
            fitted += w * component_call_price(ctx, x, c);
            out.jacobian(i, j) = -w * component_price_dmu(ctx, x, c);
        }
        out.residuals(i) = quotes[static_cast<std::size_t>(i)].price - fitted;
    }
    return out;
}

std::vector<double> refine_means_newton(std::span<const Quote> quotes, const MixtureModel& model,
                                        const FitConfig& config) {
    validate_quotes(quotes);
    const FitConfig cfg = resolve_config(config, model.context(), quotes.size());
    std::vector<double> means;
    for (const auto& c : model.components()) means.push_back(c.mu);
    if (cfg.newton_iters == 0) return means;

    const double lo = *cfg.mu_center - *cfg.mu_bound;
    const double hi = *cfg.mu_center + *cfg.mu_bound;
    const auto w = effective_weights(quotes, cfg.weight_mode);
    const VectorXd sw = to_vector(w).cwiseSqrt();

    std::vector<Eigen::Index> active;
    for (std::size_t j = 0; j < model.size(); ++j)
        if (model.weights()[j] > 0.0) active.push_back(static_cast<Eigen::Index>(j));
    const auto k = static_cast<Eigen::Index>(active.size());
    const auto n = static_cast<Eigen::Index>(quotes.size());

    auto with_means = [&](const std::vector<double>& mu) {
        std::vector<MixtureComponent> comps = model.components();
        for (std::size_t j = 0; j < comps.size(); ++j) comps[j].mu = mu[j];
        return MixtureModel(model.context(), std::move(comps), model.weights());
    };

    auto current = with_means(means);
    for (int it = 0; it < cfg.newton_iters; ++it) {
        const auto rj = residual_jacobian(quotes, current);
        const double f0 = weighted_objective(w, rj.residuals);
        if (f0 == 0.0) break;

        MatrixXd jw(n + k, k);
        VectorXd rhs = VectorXd::Zero(n + k);
        for (Eigen::Index c = 0; c < k; ++c) jw.col(c).head(n) = sw.cwiseProduct(rj.jacobian.col(active[static_cast<std::size_t>(c)]));
        rhs.head(n) = -sw.cwiseProduct(rj.residuals);
        // Levenberg damping keeps the normal equations regular when atoms coincide.
        double scale = 0.0;
        for (Eigen::Index c = 0; c < k; ++c) scale = std::max(scale, jw.col(c).head(n).squaredNorm());
        const double damping = std::sqrt(1e-12 * scale + std::numeric_limits<double>::min());
        jw.bottomRows(k) = damping * MatrixXd::Identity(k, k);
        const VectorXd step = jw.colPivHouseholderQr().solve(rhs);
        if (!step.allFinite()) break;

        bool accepted = false;
        double t = 1.0;
        for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
            std::vector<double> trial = means;
            for (Eigen::Index c = 0; c < k; ++c) {
                auto& mu = trial[static_cast<std::size_t>(active[static_cast<std::size_t>(c)])];
                mu = std::clamp(mu + t * step(c), lo, hi);
            }
            auto candidate = with_means(trial);
            const auto r = residual_jacobian(quotes, candidate).residuals;
            if (weighted_objective(w, r) <= f0) {
                accepted = trial != means;
                means = std::move(trial);
                current = std::move(candidate);
                break;
            }
        }
        if (!accepted) break;
    }
    return means;
}

FitResult fit(std::span<const Quote> quotes, const MarketContext& ctx, const FitConfig& config) {
    validate_quotes(quotes);
    const FitConfig cfg = resolve_config(config, ctx, quotes.size());
    const VectorXd prices = observed_prices(quotes);
    const auto wv = effective_weights(quotes, cfg.weight_mode);
    const VectorXd w = to_vector(wv);

    std::vector<double> means = init_equispaced_means(cfg);
    auto solved = solve_weights(quotes, means, cfg, ctx, prices, w);
    std::vector<double> trace{solved.qp.objective};
    int cycles = 0;

    FitConfig one_step = cfg;
    one_step.newton_iters = 1;
    for (int it = 0; it < cfg.newton_iters; ++it) {
        const MixtureModel model(ctx, components_for(means, cfg.sigma_floor), solved.weights);
        auto next_means = refine_means_newton(quotes, model, one_step);
        if (next_means == means) break;
        const VectorXd r = residual_jacobian(quotes, MixtureModel(ctx, components_for(next_means, cfg.sigma_floor),
                                                                   solved.weights)).residuals;
        const double newton_objective = weighted_objective(wv, r);
        std::optional<WeightSolve> next;
        try {
            next = solve_weights(quotes, next_means, cfg, ctx, prices, w);
        } catch (const Error& e) {
            // Moving the atoms can push the forward target out of reach.
            if (e.code() != ErrorCode::Infeasible) throw;
        }
        if (!next || next->qp.objective > trace.back()) break;
        ++cycles;
        if (!cfg.forward_constraint) trace.push_back(newton_objective);
        trace.push_back(next->qp.objective);
        means = std::move(next_means);
        solved = std::move(*next);
    }

    std::vector<MixtureComponent> comps;
    std::vector<double> pi;
    for (std::size_t j = 0; j < means.size(); ++j) {
        if (solved.weights[j] < kPruneThreshold) continue;
        comps.push_back({means[j], cfg.sigma_floor});
        pi.push_back(solved.weights[j]);
    }
    const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
    for (double& v : pi) v /= total;
    MixtureModel model(ctx, std::move(comps), std::move(pi));

    const VectorXd residuals = residual_jacobian(quotes, model).residuals;
    FitResult out{std::move(model), weighted_objective(wv, residuals), solved.qp.kkt.max(), cycles,
                  std::vector<double>(residuals.data(), residuals.data() + residuals.size()),
                  std::move(trace)};
    return out;
}

std::vector<double> default_sigma_grid(std::span<const Quote> quotes, const MarketContext& ctx,
                                       WeightMode mode) {
    const double centre = fit_black_scholes(quotes, ctx, mode).vol * std::sqrt(ctx.tau());
    return {0.5 * centre, 0.625 * centre, 0.75 * centre, 0.875 * centre, centre};
}

CvResult loocv_select_sigma(std::span<const Quote> quotes, const MarketContext& ctx,
                            const FitConfig& config_template, std::vector<double> sigma_grid) {
    validate_quotes(quotes);
    if (quotes.size() < 3) throw Error(ErrorCode::InvalidArgument, "cross-validation needs at least 3 quotes");
    if (sigma_grid.empty()) sigma_grid = default_sigma_grid(quotes, ctx, config_template.weight_mode);
    for (double s : sigma_grid)
        if (!(s > 0.0) || !std::isfinite(s))
            throw Error(ErrorCode::InvalidArgument, "sigma grid entries must be positive");

    const auto w = effective_weights(quotes, config_template.weight_mode);
    std::vector<double> scores;
    std::vector<Quote> held(quotes.begin(), quotes.end());
    std::vector<Quote> train;
    train.reserve(quotes.size() - 1);
    for (double sigma : sigma_grid) {
        FitConfig cfg = config_template;
        cfg.sigma_floor = sigma;
        // Box and atom count follow each training set unless pinned.
        double score = 0.0;
        try {
            for (std::size_t i = 0; i < held.size(); ++i) {
                train.clear();
                for (std::size_t k = 0; k < held.size(); ++k)
                    if (k != i) train.push_back(held[k]);
                const auto res = fit(train, ctx, cfg);
                const double err = held[i].price - mixture_call_price(res.model, held[i].strike);
                score += w[i] * err * err;
            }
        } catch (const Error&) {
            score = std::numeric_limits<double>::infinity();
        }
        scores.push_back(score);
    }

    const double best = *std::min_element(scores.begin(), scores.end());
    if (!std::isfinite(best))
        throw Error(ErrorCode::NonConvergence, "every cross-validation candidate failed");
    double chosen = 0.0;
    for (std::size_t c = 0; c < sigma_grid.size(); ++c) {
        const bool tie = scores[c] <= best * (1.0 + 1e-12);
        if (tie && sigma_grid[c] > chosen) chosen = sigma_grid[c];
    }
    return {chosen, std::move(sigma_grid), std::move(scores)};
}

}  // namespace spd
