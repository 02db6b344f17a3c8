#pragma once

#include "spd/estimator.hpp"
#include "spd/pricing.hpp"
#include "spd/simulation.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace spd {

/// One row of a quote CSV. Columns: strike, price, optional weight and
/// optional put_price (used for parity-implied dividends).
struct QuoteFileRow {
    double strike;
    double price;
    std::optional<double> weight;
    std::optional<double> put_price;

    Quote to_quote() const { return {strike, price, weight.value_or(1.0)}; }
};

/// Header names are matched case-sensitively in any order; '#' lines and
/// blank lines are skipped. Errors name the 1-based line number.
std::vector<QuoteFileRow> parse_quote_rows(std::istream& in);
std::vector<QuoteFileRow> parse_quote_rows(const std::filesystem::path& path);

std::vector<Quote> parse_quotes_csv(std::istream& in);
std::vector<Quote> parse_quotes_csv(const std::filesystem::path& path);

inline constexpr int kModelFormatVersion = 1;

struct ModelDocument {
    int format_version = kModelFormatVersion;
    MixtureModel model;
    double sigma_floor;
    double objective = 0.0;
    double kkt_residual = 0.0;
    int iterations_used = 0;
    std::optional<CvResult> cv;

    static ModelDocument from_fit(const FitResult& fit, double sigma_floor,
                                  std::optional<CvResult> cv = std::nullopt);
};

nlohmann::json to_json(const ModelDocument& doc);
ModelDocument model_from_json(const nlohmann::json& j);

/// Canonical text form (2-space indent, trailing newline).
std::string serialize(const ModelDocument& doc);
ModelDocument parse_model(const std::string& text);

nlohmann::json to_json(const StudyReport& report);

/// Two-column `header_x,header_y` CSV with 17 significant digits.
void write_grid_csv(std::ostream& out, const std::string& header_x, const std::string& header_y,
                    std::span<const double> x, std::span<const double> y);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace spd
