#include "spd/io.hpp"

#include "spd/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace spd {

namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
    throw Error(ErrorCode::Parse, "line " + std::to_string(line) + ": " + what);
}

double parse_number(std::string_view field, std::size_t line, std::string_view column) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (!field.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (field.empty() || ec != std::errc() || ptr != last || !std::isfinite(value))
        parse_fail(line, "malformed " + std::string(column) + " value '" + std::string(field) + "'");
    return value;
}

enum class Column { Strike, Price, Weight, PutPrice };

// JSON has no infinity; failed CV candidates are stored as null.
json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double null_as_infinity(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

std::vector<QuoteFileRow> parse_quote_rows(std::istream& in) {
    static const std::map<std::string_view, Column> known{
        {"strike", Column::Strike}, {"price", Column::Price}, {"weight", Column::Weight},
        {"put_price", Column::PutPrice}};

    std::vector<Column> columns;
    std::vector<QuoteFileRow> rows;
    std::string raw;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = trim(raw);
        if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
        if (line.empty() || line.front() == '#') continue;
        const auto fields = split(line);
        if (!have_header) {
            for (auto name : fields) {
                const auto it = known.find(name);
                if (it == known.end()) parse_fail(line_no, "unknown column '" + std::string(name) + "'");
                if (std::find(columns.begin(), columns.end(), it->second) != columns.end())
                    parse_fail(line_no, "duplicate column '" + std::string(name) + "'");
                columns.push_back(it->second);
            }
            for (auto required : {Column::Strike, Column::Price})
                if (std::find(columns.begin(), columns.end(), required) == columns.end())
                    parse_fail(line_no, std::string("missing required column '") +
                                            (required == Column::Strike ? "strike" : "price") + "'");
            have_header = true;
            continue;
        }
        if (fields.size() != columns.size())
            parse_fail(line_no, "expected " + std::to_string(columns.size()) + " fields, found " +
                                    std::to_string(fields.size()));
        QuoteFileRow row{0.0, 0.0, std::nullopt, std::nullopt};
        for (std::size_t c = 0; c < columns.size(); ++c) {
            switch (columns[c]) {
                case Column::Strike: row.strike = parse_number(fields[c], line_no, "strike"); break;
                case Column::Price: row.price = parse_number(fields[c], line_no, "price"); break;
                case Column::Weight:
                    if (!fields[c].empty()) row.weight = parse_number(fields[c], line_no, "weight");
                    break;
                case Column::PutPrice:
                    if (!fields[c].empty()) row.put_price = parse_number(fields[c], line_no, "put_price");
                    break;
            }
        }
        if (!(row.strike > 0.0)) parse_fail(line_no, "strike must be positive");
        if (!(row.price >= 0.0)) parse_fail(line_no, "price must be nonnegative");
        if (row.weight && !(*row.weight >= 0.0)) parse_fail(line_no, "weight must be nonnegative");
        rows.push_back(row);
    }
    if (!have_header) throw Error(ErrorCode::Parse, "empty quote file");
    if (rows.empty()) throw Error(ErrorCode::EmptyQuotes, "quote file has a header but no rows");
    return rows;
}

std::vector<QuoteFileRow> parse_quote_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return parse_quote_rows(in);
}

std::vector<Quote> parse_quotes_csv(std::istream& in) {
    std::vector<Quote> out;
    for (const auto& row : parse_quote_rows(in)) out.push_back(row.to_quote());
    return out;
}

std::vector<Quote> parse_quotes_csv(const std::filesystem::path& path) {
    std::vector<Quote> out;
    for (const auto& row : parse_quote_rows(path)) out.push_back(row.to_quote());
    return out;
}

ModelDocument ModelDocument::from_fit(const FitResult& fit, double sigma_floor, std::optional<CvResult> cv) {
    return {kModelFormatVersion, fit.model, sigma_floor, fit.objective, fit.kkt_residual,
            fit.iterations_used, std::move(cv)};
}

json to_json(const ModelDocument& doc) {
    const auto& ctx = doc.model.context();
    json components = json::array();
    for (std::size_t j = 0; j < doc.model.size(); ++j)
        components.push_back({{"mu", doc.model.components()[j].mu}, {"pi", doc.model.weights()[j]}});
    json diagnostics = {{"objective", doc.objective},
                        {"kkt_residual", doc.kkt_residual},
                        {"iterations_used", doc.iterations_used}};
    if (doc.cv) {
        json scores = json::array();
        for (double s : doc.cv->scores) scores.push_back(finite_or_null(s));
        diagnostics["cv"] = {{"selected_sigma", doc.cv->sigma_floor},
                             {"sigma_grid", doc.cv->sigma_grid},
                             {"scores", scores}};
    }
    return {{"format_version", doc.format_version},
            {"market",
             {{"spot", ctx.spot()}, {"rate", ctx.rate()}, {"dividend_yield", ctx.dividend_yield()},
              {"tau", ctx.tau()}}},
            {"sigma_floor", doc.sigma_floor},
            {"components", components},
            {"diagnostics", diagnostics}};
}

ModelDocument model_from_json(const json& j) {
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kModelFormatVersion)
            throw Error(ErrorCode::Parse, "unsupported model format_version " + std::to_string(version));
        const auto& m = j.at("market");
        MarketContext ctx(m.at("spot").get<double>(), m.at("rate").get<double>(),
                          m.at("dividend_yield").get<double>(), m.at("tau").get<double>());
        const double sigma = j.at("sigma_floor").get<double>();
        std::vector<MixtureComponent> comps;
        std::vector<double> weights;
        for (const auto& c : j.at("components")) {
            comps.push_back({c.at("mu").get<double>(), sigma});
            weights.push_back(c.at("pi").get<double>());
        }
        const auto& d = j.at("diagnostics");
        std::optional<CvResult> cv;
        if (d.contains("cv")) {
            const auto& c = d.at("cv");
            CvResult r{c.at("selected_sigma").get<double>(), c.at("sigma_grid").get<std::vector<double>>(), {}};
            for (const auto& s : c.at("scores")) r.scores.push_back(null_as_infinity(s));
            cv = std::move(r);
        }
        return {version,
                MixtureModel(ctx, std::move(comps), std::move(weights)),
                sigma,
                d.at("objective").get<double>(),
                d.at("kkt_residual").get<double>(),
                d.at("iterations_used").get<int>(),
                std::move(cv)};
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("malformed model document: ") + e.what());
    }
}

std::string serialize(const ModelDocument& doc) { return to_json(doc).dump(2) + "\n"; }

ModelDocument parse_model(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("model is not valid JSON: ") + e.what());
    }
    return model_from_json(j);
}

json to_json(const StudyReport& r) {
    return {{"format_version", 1},
            {"strike_grid", r.strike_grid},
            {"density_grid", r.density_grid},
            {"price",
             {{"true", r.true_price}, {"mean", r.price_mean}, {"q025", r.price_lo}, {"q975", r.price_hi}}},
            {"density",
             {{"true", r.true_density},
              {"mean", r.density_mean},
              {"q025", r.density_lo},
              {"q975", r.density_hi}}},
            {"runs",
             {{"seeds", r.seeds},
              {"sigma_floor", r.sigma_floor},
              {"price_ise", r.price_ise},
              {"density_ise", r.density_ise},
              {"failed_seeds", r.failed_seeds}}}};
}

void write_grid_csv(std::ostream& out, const std::string& header_x, const std::string& header_y,
                    std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "grid columns differ in length");
    out << header_x << ',' << header_y << '\n';
    out << std::setprecision(17);
    for (std::size_t i = 0; i < x.size(); ++i) out << x[i] << ',' << y[i] << '\n';
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << contents;
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace spd
