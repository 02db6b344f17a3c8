#include "spd/error.hpp"
#include "spd/estimator.hpp"
#include "spd/io.hpp"
#include "spd/pricing.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

using namespace spd;
namespace fs = std::filesystem;

namespace {

struct Run {
    int status;
    std::string out;
};

// Runs spdfit with stderr folded into stdout.
Run spdfit(const std::string& args) {
    const std::string cmd = std::string(SPDFIT_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return {-1, {}};
    std::string out;
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
    const int raw = pclose(pipe);
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("spdfit_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

const MarketContext kMarket(1365.0, 0.045, 0.025, 30.0 / 365.0);
const char* kMarketArgs = "--spot 1365 --rate 0.045 --div 0.025 --tau 0.0821917808219178";

std::string bs_csv(bool with_puts = false) {
    std::ostringstream s;
    s << std::setprecision(17) << (with_puts ? "strike,price,put_price\n" : "strike,price\n");
    for (int i = 0; i < 25; ++i) {
        const double x = 1000.0 + 700.0 * i / 24.0;
        const double c = bs_call_price(kMarket, x, 0.2);
        s << x << ',' << c;
        if (with_puts)
            s << ',' << c - kMarket.spot() * std::exp(-kMarket.dividend_yield() * kMarket.tau()) + x * kMarket.discount();
        s << '\n';
    }
    return s.str();
}

}  // namespace

TEST_F(CliTest, FitThenEvalReproducesPrices) {
    write_file(path("q.csv"), bs_csv());
    const double sigma = 0.2 * std::sqrt(kMarket.tau());
    std::ostringstream fit_args;
    fit_args << std::setprecision(17) << "fit --quotes " << path("q.csv") << ' ' << kMarketArgs
             << " --sigma-floor " << sigma << " --newton-iters 50 --out " << path("m.json");
    const auto fit_run = spdfit(fit_args.str());
    ASSERT_EQ(fit_run.status, 0) << fit_run.out;

    const auto eval_run = spdfit("eval --model " + path("m.json") + " --price-grid 1000:1700:25 --out -");
    ASSERT_EQ(eval_run.status, 0) << eval_run.out;
    std::istringstream in(eval_run.out);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "strike,call_price");
    int rows = 0;
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        const double x = std::stod(line.substr(0, comma));
        const double p = std::stod(line.substr(comma + 1));
        EXPECT_NEAR(p, bs_call_price(kMarket, x, 0.2), 1e-6) << x;
        ++rows;
    }
    EXPECT_EQ(rows, 25);

    const auto dens = spdfit("eval --model " + path("m.json") +
                             " --density-grid -0.1:0.1:5 --x-axis excess-log-return --out -");
    ASSERT_EQ(dens.status, 0) << dens.out;
    EXPECT_EQ(dens.out.substr(0, dens.out.find('\n')), "excess_log_return,density");
}

TEST_F(CliTest, FitInfersDividendFromParity) {
    write_file(path("q.csv"), bs_csv(true));
    const auto run = spdfit("fit --quotes " + path("q.csv") +
                            " --spot 1365 --rate 0.045 --tau 0.0821917808219178 --sigma-floor 0.05 --out " +
                            path("m.json"));
    ASSERT_EQ(run.status, 0) << run.out;
    const auto doc = parse_model(read_file(path("m.json")));
    EXPECT_NEAR(doc.model.context().dividend_yield(), 0.025, 1e-10);
}

TEST_F(CliTest, CvGridMatchesLibraryDefault) {
    write_file(path("q.csv"), bs_csv());
    const auto run = spdfit("fit --quotes " + path("q.csv") + ' ' + kMarketArgs + " --cv --out " + path("m.json"));
    ASSERT_EQ(run.status, 0) << run.out;
    const auto doc = parse_model(read_file(path("m.json")));
    ASSERT_TRUE(doc.cv.has_value());
    const auto quotes = parse_quotes_csv(fs::path(path("q.csv")));
    const auto expected = default_sigma_grid(quotes, doc.model.context(), WeightMode::Unit);
    ASSERT_EQ(doc.cv->sigma_grid.size(), expected.size());
    for (std::size_t k = 0; k < expected.size(); ++k) EXPECT_NEAR(doc.cv->sigma_grid[k], expected[k], 1e-15);
    EXPECT_EQ(doc.sigma_floor, doc.cv->sigma_floor);
}

TEST_F(CliTest, SimulateIsReproducible) {
    const auto a = spdfit("simulate --runs 1 --seed 7 --sigma-rule rule-of-thumb --out " + path("a.json"));
    const auto b = spdfit("simulate --runs 1 --seed 7 --sigma-rule rule-of-thumb --threads 2 --out " + path("b.json"));
    ASSERT_EQ(a.status, 0) << a.out;
    ASSERT_EQ(b.status, 0) << b.out;
    const auto ta = read_file(path("a.json"));
    EXPECT_EQ(ta, read_file(path("b.json")));
    const auto j = nlohmann::json::parse(ta);
    EXPECT_EQ(j["runs"]["seeds"], nlohmann::json::array({7}));
    EXPECT_EQ(j["price"]["q025"], j["price"]["q975"]);
}

TEST_F(CliTest, BaselinesAndParity) {
    write_file(path("q.csv"), bs_csv());
    const auto bs = spdfit("baseline-bs --quotes " + path("q.csv") + ' ' + kMarketArgs);
    ASSERT_EQ(bs.status, 0) << bs.out;
    EXPECT_EQ(bs.out.rfind("vol=0.2", 0), 0u) << bs.out;

    const auto naive = spdfit("baseline-naive --quotes " + path("q.csv") + ' ' + kMarketArgs + " --out -");
    ASSERT_EQ(naive.status, 0) << naive.out;
    EXPECT_EQ(naive.out.substr(0, naive.out.find('\n')), "strike,density");

    const double x = 1350.0;
    const double c = 40.0;
    const double p = c - 1365.0 * std::exp(-0.025 * 0.5) + x * std::exp(-0.045 * 0.5);
    std::ostringstream args;
    args << std::setprecision(17) << "parity --call " << c << " --put " << p
         << " --spot 1365 --rate 0.045 --tau 0.5 --strike " << x;
    const auto par = spdfit(args.str());
    ASSERT_EQ(par.status, 0) << par.out;
    EXPECT_NEAR(std::stod(par.out), 0.025, 1e-12);
}

TEST_F(CliTest, ErrorsUseCodesAndStatuses) {
    const auto missing = spdfit("fit --quotes " + path("none.csv") + ' ' + kMarketArgs +
                                " --sigma-floor 0.05 --out " + path("m.json"));
    EXPECT_EQ(missing.status, 2 + static_cast<int>(ErrorCode::Io));
    EXPECT_EQ(missing.out.rfind("ERROR io: ", 0), 0u) << missing.out;

    write_file(path("bad.csv"), "strike,price\n100,x\n");
    const auto bad = spdfit("fit --quotes " + path("bad.csv") + ' ' + kMarketArgs + " --sigma-floor 0.05 --out -");
    EXPECT_EQ(bad.status, 2 + static_cast<int>(ErrorCode::Parse));
    EXPECT_NE(bad.out.find("line 2"), std::string::npos) << bad.out;

    write_file(path("empty.csv"), "strike,price\n");
    const auto empty = spdfit("fit --quotes " + path("empty.csv") + ' ' + kMarketArgs + " --sigma-floor 0.05 --out -");
    EXPECT_EQ(empty.status, 2 + static_cast<int>(ErrorCode::EmptyQuotes));

    const auto parity = spdfit("parity --call 1 --put 5000 --spot 100 --rate 0 --tau 1 --strike 100");
    EXPECT_EQ(parity.status, 2 + static_cast<int>(ErrorCode::InconsistentParity));
    EXPECT_EQ(parity.out.rfind("ERROR inconsistent-parity: ", 0), 0u) << parity.out;

    const auto usage = spdfit("fit --bogus");
    EXPECT_EQ(usage.status, 1);
    EXPECT_EQ(usage.out.rfind("ERROR usage:", 0), 0u) << usage.out;
}
