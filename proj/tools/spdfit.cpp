// spdfit: command-line front end for lognormal-mixture state price density
// estimation. Run `spdfit --help` for the subcommand list.

#include "spd/baselines.hpp"
#include "spd/error.hpp"
#include "spd/estimator.hpp"
#include "spd/io.hpp"
#include "spd/pricing.hpp"
#include "spd/simulation.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

namespace {

using namespace spd;

struct MarketFlags {
    double spot = 0.0;
    double rate = 0.0;
    std::optional<double> div;
    double tau = 0.0;

    void add(CLI::App* app, bool need_div) {
        app->add_option("--spot", spot, "Underlying price")->required();
        app->add_option("--rate", rate, "Continuously compounded risk-free rate")->required();
        auto* d = app->add_option("--div", div, "Continuously compounded dividend yield");
        if (need_div) d->required();
        app->add_option("--tau", tau, "Time to maturity in years (ACT/365)")->required();
    }
};

struct Grid {
    double lo = 0.0;
    double hi = 0.0;
    int n = 0;

    std::vector<double> points() const {
        std::vector<double> out(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            out[static_cast<std::size_t>(i)] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
        return out;
    }
};

Grid parse_grid(const std::string& text) {
    std::istringstream ss(text);
    std::string a, b, c;
    if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, c))
        throw Error(ErrorCode::InvalidArgument, "grid must look like lo:hi:n, got '" + text + "'");
    try {
        std::size_t pos = 0;
        Grid g{std::stod(a, &pos), 0.0, 0};
        if (pos != a.size()) throw std::invalid_argument(a);
        g.hi = std::stod(b, &pos);
        if (pos != b.size()) throw std::invalid_argument(b);
        g.n = std::stoi(c, &pos);
        if (pos != c.size()) throw std::invalid_argument(c);
        if (g.n < 1 || !(g.hi >= g.lo)) throw std::invalid_argument(text);
        return g;
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::InvalidArgument, "invalid grid '" + text + "'");
    }
}

const std::map<std::string, WeightMode> kWeightModes{{"unit", WeightMode::Unit},
                                                     {"inverse-price", WeightMode::InversePrice}};

// Dividend yield from the put-call pair whose strike is closest to spot.
double dividend_from_rows(const std::vector<QuoteFileRow>& rows, double spot, double rate, double tau) {
    const QuoteFileRow* best = nullptr;
    for (const auto& r : rows)
        if (r.put_price && (!best || std::abs(r.strike - spot) < std::abs(best->strike - spot))) best = &r;
    if (!best)
        throw Error(ErrorCode::InvalidArgument, "--div not given and the quote file has no put_price column");
    return implied_dividend_from_parity(best->price, *best->put_price, MarketContext(spot, rate, 0.0, tau),
                                        best->strike);
}

std::vector<Quote> to_quotes(const std::vector<QuoteFileRow>& rows) {
    std::vector<Quote> out;
    for (const auto& r : rows) out.push_back(r.to_quote());
    return out;
}

MarketContext market_for(const MarketFlags& m, const std::vector<QuoteFileRow>& rows) {
    const double div = m.div ? *m.div : dividend_from_rows(rows, m.spot, m.rate, m.tau);
    return MarketContext(m.spot, m.rate, div, m.tau);
}

void write_output(const std::string& path, const std::string& text) {
    if (path == "-")
        std::cout << text;
    else
        write_file(path, text);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Risk-neutral density estimation with lognormal mixtures"};
    app.require_subcommand(1);

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "Fit a lognormal mixture to call quotes");
    std::string quotes_path, out_path;
    MarketFlags market;
    std::optional<double> sigma_floor;
    bool use_cv = false;
    std::vector<double> cv_grid;
    bool forward_constraint = false;
    std::string weight_name = "unit";
    std::optional<int> components;
    int newton_iters = 1;
    std::optional<double> mu_bound;
    fit_cmd->add_option("--quotes", quotes_path, "Quote CSV (strike,price[,weight][,put_price])")->required();
    market.add(fit_cmd, false);
    auto* sf = fit_cmd->add_option("--sigma-floor", sigma_floor, "Atom scale in log-return units");
    auto* cvf = fit_cmd->add_flag("--cv", use_cv, "Select sigma-floor by leave-one-out cross-validation");
    sf->excludes(cvf);
    fit_cmd->add_option("--cv-grid", cv_grid, "Candidate sigma-floor values for --cv")->needs(cvf);
    fit_cmd->add_flag("--forward-constraint", forward_constraint, "Pin the mixture mean to the forward price");
    fit_cmd->add_option("--weights", weight_name, "unit | inverse-price")
        ->check(CLI::IsMember({"unit", "inverse-price"}));
    fit_cmd->add_option("--components", components, "Number of atoms (default n+1)");
    fit_cmd->add_option("--newton-iters", newton_iters, "Weight/mean alternations (default 1)");
    fit_cmd->add_option("--mu-bound", mu_bound, "Half-width of the mean box (default 5*sigma-floor)");
    fit_cmd->add_option("--out", out_path, "Model JSON path ('-' for stdout)")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a fitted model on a grid");
    std::string model_path, price_grid, density_grid, x_axis = "price", eval_out;
    eval_cmd->add_option("--model", model_path, "Model JSON from `fit`")->required();
    auto* pg = eval_cmd->add_option("--price-grid", price_grid, "Strike grid lo:hi:n");
    auto* dg = eval_cmd->add_option("--density-grid", density_grid, "Density grid lo:hi:n");
    pg->excludes(dg);
    eval_cmd->add_option("--x-axis", x_axis, "Density abscissa: price | excess-log-return")
        ->check(CLI::IsMember({"price", "excess-log-return"}));
    eval_cmd->add_option("--out", eval_out, "CSV path ('-' for stdout)")->required();

    // baseline-bs
    auto* bs_cmd = app.add_subcommand("baseline-bs", "Least-squares Black-Scholes fit");
    std::string bs_quotes, bs_out, bs_weights = "unit";
    MarketFlags bs_market;
    bs_cmd->add_option("--quotes", bs_quotes, "Quote CSV")->required();
    bs_market.add(bs_cmd, false);
    bs_cmd->add_option("--weights", bs_weights, "unit | inverse-price")
        ->check(CLI::IsMember({"unit", "inverse-price"}));
    bs_cmd->add_option("--out", bs_out, "Optional JSON result path");

    // baseline-naive
    auto* naive_cmd = app.add_subcommand("baseline-naive", "Second-difference density of raw quotes");
    std::string naive_quotes, naive_out;
    MarketFlags naive_market;
    naive_cmd->add_option("--quotes", naive_quotes, "Quote CSV")->required();
    naive_market.add(naive_cmd, false);
    naive_cmd->add_option("--out", naive_out, "CSV path ('-' for stdout)")->required();

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo study on the linear-smile market");
    SmileScenario scenario = asd_scenario();
    int runs = 200;
    std::uint64_t seed = 0;
    std::string sim_out, sigma_rule = "loocv", sim_weights = "inverse-price";
    std::optional<double> sim_sigma;
    int grid_points = 141;
    std::optional<unsigned> threads;
    double s_spot = scenario.ctx.spot(), s_rate = scenario.ctx.rate(), s_div = scenario.ctx.dividend_yield(),
           s_tau = scenario.ctx.tau();
    int sim_newton = 1;
    sim_cmd->add_option("--runs", runs, "Number of Monte Carlo runs")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--seed", seed, "Seed of the first run; run k uses seed+k");
    sim_cmd->add_option("--n-quotes", scenario.n_quotes, "Quotes per run")->check(CLI::Range(2, 100000));
    sim_cmd->add_option("--spot", s_spot);
    sim_cmd->add_option("--rate", s_rate);
    sim_cmd->add_option("--div", s_div);
    sim_cmd->add_option("--tau", s_tau);
    sim_cmd->add_option("--strike-lo", scenario.strike_lo);
    sim_cmd->add_option("--strike-hi", scenario.strike_hi);
    sim_cmd->add_option("--vol-lo", scenario.vol_lo);
    sim_cmd->add_option("--vol-hi", scenario.vol_hi);
    sim_cmd->add_option("--noise-lo", scenario.noise_lo);
    sim_cmd->add_option("--noise-hi", scenario.noise_hi);
    sim_cmd->add_option("--sigma-rule", sigma_rule, "loocv | rule-of-thumb | fixed")
        ->check(CLI::IsMember({"loocv", "rule-of-thumb", "fixed"}));
    sim_cmd->add_option("--sigma-floor", sim_sigma, "Atom scale for --sigma-rule fixed");
    sim_cmd->add_option("--newton-iters", sim_newton, "Weight/mean alternations per fit");
    sim_cmd->add_option("--weights", sim_weights, "unit | inverse-price (default inverse-price)")
        ->check(CLI::IsMember({"unit", "inverse-price"}));
    sim_cmd->add_option("--grid-points", grid_points, "Evaluation grid size")->check(CLI::Range(2, 100000));
    sim_cmd->add_option("--threads", threads, "Worker threads (default: THREADS env or 1)");
    sim_cmd->add_option("--out", sim_out, "Report JSON path ('-' for stdout)")->required();

    // parity
    auto* parity_cmd = app.add_subcommand("parity", "Dividend yield implied by put-call parity");
    double call = 0.0, put = 0.0, p_spot = 0.0, p_rate = 0.0, p_tau = 0.0, p_strike = 0.0;
    parity_cmd->add_option("--call", call)->required();
    parity_cmd->add_option("--put", put)->required();
    parity_cmd->add_option("--spot", p_spot)->required();
    parity_cmd->add_option("--rate", p_rate)->required();
    parity_cmd->add_option("--tau", p_tau)->required();
    parity_cmd->add_option("--strike", p_strike)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "ERROR usage: " << e.what() << '\n';
        return 1;
    }

    try {
        if (*fit_cmd) {
            const auto rows = parse_quote_rows(std::filesystem::path(quotes_path));
            const auto quotes = to_quotes(rows);
            const MarketContext ctx = market_for(market, rows);
            FitConfig cfg;
            cfg.weight_mode = kWeightModes.at(weight_name);
            cfg.n_components = components;
            cfg.newton_iters = newton_iters;
            cfg.mu_bound = mu_bound;
            if (forward_constraint) cfg.forward_constraint = ctx.forward();
            std::optional<CvResult> cv;
            if (use_cv) {
                cv = loocv_select_sigma(quotes, ctx, cfg, cv_grid);
                cfg.sigma_floor = cv->sigma_floor;
            } else if (sigma_floor) {
                cfg.sigma_floor = *sigma_floor;
            } else {
                cfg.sigma_floor = default_sigma_grid(quotes, ctx, cfg.weight_mode)[2];
            }
            const auto result = fit(quotes, ctx, cfg);
            write_output(out_path, serialize(ModelDocument::from_fit(result, cfg.sigma_floor, cv)));
            std::cerr << "fit: " << result.model.size() << " atoms, sigma_floor=" << std::setprecision(10)
                      << cfg.sigma_floor << ", objective=" << result.objective << '\n';
        } else if (*eval_cmd) {
            if (price_grid.empty() && density_grid.empty())
                throw Error(ErrorCode::InvalidArgument, "eval needs --price-grid or --density-grid");
            const auto doc = parse_model(read_file(model_path));
            const auto& ctx = doc.model.context();
            std::ostringstream csv;
            if (!price_grid.empty()) {
                const auto x = parse_grid(price_grid).points();
                write_grid_csv(csv, "strike", "call_price", x, mixture_call_prices(doc.model, x));
            } else if (x_axis == "price") {
                const auto x = parse_grid(density_grid).points();
                write_grid_csv(csv, "price", "density", x, mixture_densities(doc.model, x));
            } else {
                // Density of y = ln(S_T/S_t) - r tau is s * f(s) at s = S_t e^{y + r tau}.
                const auto y = parse_grid(density_grid).points();
                std::vector<double> v;
                for (double yi : y) {
                    const double s = ctx.spot() * std::exp(yi + ctx.rate() * ctx.tau());
                    v.push_back(s * mixture_density(doc.model, s));
                }
                write_grid_csv(csv, "excess_log_return", "density", y, v);
            }
            write_output(eval_out, csv.str());
        } else if (*bs_cmd) {
            const auto rows = parse_quote_rows(std::filesystem::path(bs_quotes));
            const auto ctx = market_for(bs_market, rows);
            const auto res = fit_black_scholes(to_quotes(rows), ctx, kWeightModes.at(bs_weights));
            std::cout << std::setprecision(12) << "vol=" << res.vol << " objective=" << res.objective << '\n';
            if (!bs_out.empty())
                write_output(bs_out, nlohmann::json{{"vol", res.vol}, {"objective", res.objective}}.dump(2) + "\n");
        } else if (*naive_cmd) {
            const auto rows = parse_quote_rows(std::filesystem::path(naive_quotes));
            const auto ctx = market_for(naive_market, rows);
            const auto res = naive_second_difference_spd(to_quotes(rows), ctx);
            std::vector<double> interior(res.grid.begin() + 1, res.grid.end() - 1);
            std::ostringstream csv;
            write_grid_csv(csv, "strike", "density", interior, res.values);
            write_output(naive_out, csv.str());
        } else if (*sim_cmd) {
            scenario.ctx = MarketContext(s_spot, s_rate, s_div, s_tau);
            StudyOptions opts;
            opts.n_runs = runs;
            opts.seed0 = seed;
            opts.fit_config.newton_iters = sim_newton;
            opts.fit_config.weight_mode = kWeightModes.at(sim_weights);
            if (sigma_rule == "fixed") {
                if (!sim_sigma) throw Error(ErrorCode::InvalidArgument, "--sigma-rule fixed needs --sigma-floor");
                opts.sigma_rule = SigmaRule::Fixed;
                opts.fit_config.sigma_floor = *sim_sigma;
            } else {
                opts.sigma_rule = sigma_rule == "loocv" ? SigmaRule::Loocv : SigmaRule::RuleOfThumb;
            }
            unsigned n_threads = 1;
            if (threads) {
                n_threads = *threads;
            } else if (const char* env = std::getenv("THREADS")) {
                n_threads = static_cast<unsigned>(std::max(1, std::atoi(env)));
            }
            opts.threads = n_threads;
            scenario.validate();
            std::vector<double> grid(static_cast<std::size_t>(grid_points));
            for (int i = 0; i < grid_points; ++i)
                grid[static_cast<std::size_t>(i)] =
                    scenario.strike_lo + (scenario.strike_hi - scenario.strike_lo) * i / (grid_points - 1);
            opts.strike_grid = grid;
            opts.density_grid = grid;
            const auto report = monte_carlo_study(scenario, opts);
            write_output(sim_out, to_json(report).dump(2) + "\n");
            std::cerr << "simulate: " << report.seeds.size() << " runs ok, " << report.failed_seeds.size()
                      << " failed\n";
        } else if (*parity_cmd) {
            const MarketContext ctx(p_spot, p_rate, 0.0, p_tau);
            std::cout << std::setprecision(17) << implied_dividend_from_parity(call, put, ctx, p_strike) << '\n';
        }
    } catch (const Error& e) {
        std::cerr << "ERROR " << to_string(e.code()) << ": " << e.what() << '\n';
        return exit_status(e.code());
    } catch (const std::exception& e) {
        std::cerr << "ERROR internal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
