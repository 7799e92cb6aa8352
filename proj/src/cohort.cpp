#include "nonunion/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "nonunion/error.hpp"
#include "nonunion/random.hpp"

namespace nonunion {

namespace {

constexpr std::string_view kKindNames[] = {"boolean", "categorical", "multi_categorical", "ordinal",
                                           "interval", "continuous",  "date"};

bool needs_vocabulary(FeatureKind kind) {
    return kind == FeatureKind::Categorical || kind == FeatureKind::MultiCategorical || kind == FeatureKind::Ordinal;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    fields.push_back(std::move(current));
    return fields;
}

std::string quote_if_needed(const std::string& text) {
    if (text.find_first_of(",\"\n") == std::string::npos) return text;
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::optional<double> parse_number(std::string_view text) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
    return value;
}

std::string format_number(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

bool cell_matches_kind(const Cell& cell, const FeatureSpec& spec) {
    switch (spec.kind) {
        case FeatureKind::Boolean: return std::holds_alternative<bool>(cell);
        case FeatureKind::Categorical:
        case FeatureKind::Ordinal: {
            const auto* c = std::get_if<Category>(&cell);
            return c && spec.category_index(c->name).has_value();
        }
        case FeatureKind::MultiCategorical: {
            const auto* s = std::get_if<CategorySet>(&cell);
            if (!s) return false;
            return std::all_of(s->names.begin(), s->names.end(),
                               [&](const std::string& n) { return spec.category_index(n).has_value(); });
        }
        case FeatureKind::Interval:
        case FeatureKind::Continuous: {
            const auto* d = std::get_if<double>(&cell);
            return d && std::isfinite(*d);
        }
        case FeatureKind::Date: return std::holds_alternative<Date>(cell);
    }
    return false;
}

}  // namespace

std::string_view to_string(FeatureKind kind) { return kKindNames[static_cast<int>(kind)]; }

std::optional<FeatureKind> parse_feature_kind(std::string_view text) {
    for (std::size_t i = 0; i < std::size(kKindNames); ++i)
        if (kKindNames[i] == text) return static_cast<FeatureKind>(i);
    return std::nullopt;
}

std::optional<std::size_t> FeatureSpec::category_index(std::string_view category) const {
    auto it = std::find(categories.begin(), categories.end(), category);
    if (it == categories.end()) return std::nullopt;
    return static_cast<std::size_t>(it - categories.begin());
}

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features, std::string outcome_name, std::string fracture_date_name)
    : features_(std::move(features)),
      outcome_name_(std::move(outcome_name)),
      fracture_date_name_(std::move(fracture_date_name)) {
    std::set<std::string> seen;
    for (const auto& f : features_) {
        if (f.name.empty()) fail(ErrorKind::InvalidSchema, "feature with empty name");
        if (!seen.insert(f.name).second) fail(ErrorKind::InvalidSchema, "duplicate feature name '" + f.name + "'");
        if (needs_vocabulary(f.kind)) {
            if (f.categories.empty())
                fail(ErrorKind::InvalidSchema, "feature '" + f.name + "' needs a non-empty category list");
            std::set<std::string> cats(f.categories.begin(), f.categories.end());
            if (cats.size() != f.categories.size())
                fail(ErrorKind::InvalidSchema, "feature '" + f.name + "' has duplicate categories");
            for (const auto& c : f.categories)
                if (c.empty() || c.find_first_of(";,\"\n") != std::string::npos)
                    fail(ErrorKind::InvalidSchema, "feature '" + f.name + "' has an unrepresentable category '" + c + "'");
        }
    }
    auto outcome = index_of(outcome_name_);
    if (!outcome) fail(ErrorKind::InvalidSchema, "outcome '" + outcome_name_ + "' is not a feature");
    if (features_[*outcome].kind != FeatureKind::Boolean)
        fail(ErrorKind::InvalidSchema, "outcome '" + outcome_name_ + "' must be boolean");
    auto fracture = index_of(fracture_date_name_);
    if (!fracture) fail(ErrorKind::InvalidSchema, "fracture date '" + fracture_date_name_ + "' is not a feature");
    if (features_[*fracture].kind != FeatureKind::Date)
        fail(ErrorKind::InvalidSchema, "fracture date '" + fracture_date_name_ + "' must be a date");
    outcome_index_ = *outcome;
    fracture_date_index_ = *fracture;
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < features_.size(); ++i)
        if (features_[i].name == name) return i;
    return std::nullopt;
}

nlohmann::json FeatureSchema::to_json() const {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& f : features_) {
        nlohmann::json entry{{"name", f.name}, {"kind", std::string(to_string(f.kind))}};
        if (f.kind == FeatureKind::Ordinal)
            entry["levels"] = f.categories;
        else if (needs_vocabulary(f.kind))
            entry["categories"] = f.categories;
        features.push_back(std::move(entry));
    }
    return {{"features", features}, {"outcome", outcome_name_}, {"fracture_date", fracture_date_name_}};
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& doc) {
    try {
        std::vector<FeatureSpec> specs;
        for (const auto& entry : doc.at("features")) {
            FeatureSpec spec;
            spec.name = entry.at("name").get<std::string>();
            auto kind = parse_feature_kind(entry.at("kind").get<std::string>());
            if (!kind) fail(ErrorKind::InvalidSchema, "unknown kind for feature '" + spec.name + "'");
            spec.kind = *kind;
            if (entry.contains("levels")) spec.categories = entry.at("levels").get<std::vector<std::string>>();
            if (entry.contains("categories")) spec.categories = entry.at("categories").get<std::vector<std::string>>();
            specs.push_back(std::move(spec));
        }
        return FeatureSchema(std::move(specs), doc.at("outcome").get<std::string>(),
                             doc.at("fracture_date").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidSchema, e.what());
    }
}

FeatureSchema FeatureSchema::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open schema " + path.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::InvalidSchema, path.string() + ": " + e.what());
    }
}

void FeatureSchema::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write schema " + path.string());
    out << to_json().dump(2) << '\n';
}

std::optional<Date> Date::parse_iso(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    int y = 0;
    unsigned m = 0, d = 0;
    auto digits = [&](std::size_t pos, std::size_t len, auto& out) {
        auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
        return ec == std::errc{} && ptr == text.data() + pos + len;
    };
    if (!digits(0, 4, y) || !digits(5, 2, m) || !digits(8, 2, d)) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return Date{std::chrono::sys_days{ymd}};
}

Date Date::from_ymd(int year, unsigned month, unsigned day) {
    std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
    if (!ymd.ok()) fail(ErrorKind::InvalidDate, "invalid calendar date");
    return Date{std::chrono::sys_days{ymd}};
}

std::string Date::to_iso() const {
    std::chrono::year_month_day ymd{value};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

const Cell& PatientRecord::at(const FeatureSchema& schema, std::string_view name) const {
    auto idx = schema.index_of(name);
    if (!idx) fail(ErrorKind::UnknownColumn, std::string(name));
    return cells.at(*idx);
}

double Dataset::incidence() const {
    if (outcomes.empty()) return 0.0;
    return static_cast<double>(std::accumulate(outcomes.begin(), outcomes.end(), 0)) / static_cast<double>(outcomes.size());
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out{schema, {}, {}};
    out.records.reserve(indices.size());
    out.outcomes.reserve(indices.size());
    for (auto i : indices) {
        out.records.push_back(records.at(i));
        out.outcomes.push_back(outcomes.at(i));
    }
    return out;
}

void Dataset::validate() const {
    if (records.size() != outcomes.size()) fail(ErrorKind::InvalidConfig, "records and outcomes differ in length");
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& cells = records[r].cells;
        if (cells.size() != schema.size())
            fail(ErrorKind::SchemaMismatch, "record " + std::to_string(r) + " has the wrong number of cells");
        for (std::size_t f = 0; f < cells.size(); ++f) {
            if (is_missing(cells[f])) continue;
            if (!cell_matches_kind(cells[f], schema.feature(f)))
                throw CellError(ErrorKind::TypeMismatch, r + 1, schema.feature(f).name, "cell does not match feature kind");
        }
        if (outcomes[r] != 0 && outcomes[r] != 1)
            throw CellError(ErrorKind::TypeMismatch, r + 1, schema.outcome_name(), "outcome must be 0 or 1");
    }
}

double Dataset::missing_fraction() const {
    std::size_t total = 0, missing = 0;
    for (const auto& rec : records) {
        total += rec.cells.size();
        missing += static_cast<std::size_t>(std::count_if(rec.cells.begin(), rec.cells.end(), is_missing));
    }
    return total == 0 ? 0.0 : static_cast<double>(missing) / static_cast<double>(total);
}

Cell parse_cell(const FeatureSpec& spec, std::string_view text, std::size_t row) {
    if (text.empty()) return Missing{};
    switch (spec.kind) {
        case FeatureKind::Boolean:
            if (text == "true" || text == "1") return true;
            if (text == "false" || text == "0") return false;
            throw CellError(ErrorKind::TypeMismatch, row, spec.name, "expected boolean, got '" + std::string(text) + "'");
        case FeatureKind::Categorical:
        case FeatureKind::Ordinal:
            if (!spec.category_index(text))
                throw CellError(ErrorKind::UnknownCategory, row, spec.name, "unknown category '" + std::string(text) + "'");
            return Category{std::string(text)};
        case FeatureKind::MultiCategorical: {
            std::vector<bool> present(spec.categories.size(), false);
            std::size_t start = 0;
            while (start <= text.size()) {
                auto end = text.find(';', start);
                if (end == std::string_view::npos) end = text.size();
                auto item = text.substr(start, end - start);
                auto idx = spec.category_index(item);
                if (!idx)
                    throw CellError(ErrorKind::UnknownCategory, row, spec.name, "unknown category '" + std::string(item) + "'");
                present[*idx] = true;
                start = end + 1;
            }
            CategorySet set;
            for (std::size_t i = 0; i < present.size(); ++i)
                if (present[i]) set.names.push_back(spec.categories[i]);
            return set;
        }
        case FeatureKind::Interval:
        case FeatureKind::Continuous: {
            auto v = parse_number(text);
            if (!v) throw CellError(ErrorKind::TypeMismatch, row, spec.name, "expected number, got '" + std::string(text) + "'");
            return *v;
        }
        case FeatureKind::Date: {
            auto d = Date::parse_iso(text);
            if (!d) throw CellError(ErrorKind::InvalidDate, row, spec.name, "invalid date '" + std::string(text) + "'");
            return *d;
        }
    }
    return Missing{};
}

std::string format_cell(const Cell& cell) {
    struct Visitor {
        std::string operator()(const Missing&) const { return {}; }
        std::string operator()(bool b) const { return b ? "true" : "false"; }
        std::string operator()(const Category& c) const { return c.name; }
        std::string operator()(const CategorySet& s) const {
            std::string out;
            for (std::size_t i = 0; i < s.names.size(); ++i) {
                if (i) out.push_back(';');
                out += s.names[i];
            }
            return out;
        }
        std::string operator()(double d) const { return format_number(d); }
        std::string operator()(const Date& d) const { return d.to_iso(); }
    };
    return std::visit(Visitor{}, cell);
}

Dataset read_dataset(std::istream& in, const FeatureSchema& schema) {
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::Io, "empty CSV: missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

    auto header = split_csv_line(line);
    std::vector<std::size_t> column_to_feature(header.size());
    std::vector<bool> covered(schema.size(), false);
    for (std::size_t c = 0; c < header.size(); ++c) {
        auto idx = schema.index_of(header[c]);
        if (!idx) fail(ErrorKind::UnknownColumn, "column '" + header[c] + "' is not in the schema");
        if (covered[*idx]) fail(ErrorKind::UnknownColumn, "column '" + header[c] + "' appears twice");
        covered[*idx] = true;
        column_to_feature[c] = *idx;
    }
    for (std::size_t f = 0; f < schema.size(); ++f)
        if (!covered[f]) fail(ErrorKind::MissingColumn, "column '" + schema.feature(f).name + "' is absent");

    Dataset data{schema, {}, {}};
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw CellError(ErrorKind::TypeMismatch, row, "*",
                            "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
        PatientRecord rec;
        rec.cells.resize(schema.size());
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const auto f = column_to_feature[c];
            rec.cells[f] = parse_cell(schema.feature(f), fields[c], row);
        }
        const auto& outcome = rec.cells[schema.outcome_index()];
        if (!std::holds_alternative<bool>(outcome))
            throw CellError(ErrorKind::TypeMismatch, row, schema.outcome_name(), "outcome must not be missing");
        if (is_missing(rec.cells[schema.fracture_date_index()]))
            throw CellError(ErrorKind::InvalidDate, row, schema.fracture_date_name(), "fracture date must not be missing");
        data.outcomes.push_back(std::get<bool>(outcome) ? 1 : 0);
        data.records.push_back(std::move(rec));
    }
    return data;
}

Dataset load_dataset(const std::filesystem::path& csv_path, const FeatureSchema& schema) {
    std::ifstream in(csv_path);
    if (!in) fail(ErrorKind::Io, "cannot open " + csv_path.string());
    return read_dataset(in, schema);
}

void write_dataset(std::ostream& out, const Dataset& data) {
    const auto& features = data.schema.features();
    for (std::size_t f = 0; f < features.size(); ++f) out << (f ? "," : "") << quote_if_needed(features[f].name);
    out << '\n';
    for (const auto& rec : data.records) {
        for (std::size_t f = 0; f < rec.cells.size(); ++f) out << (f ? "," : "") << quote_if_needed(format_cell(rec.cells[f]));
        out << '\n';
    }
}

void save_dataset(const std::filesystem::path& csv_path, const Dataset& data) {
    std::ofstream out(csv_path);
    if (!out) fail(ErrorKind::Io, "cannot write " + csv_path.string());
    write_dataset(out, data);
}

std::size_t test_count(std::size_t n, double test_fraction) {
    const double raw = test_fraction * static_cast<double>(n);
    // 0.2 * 15 evaluates to 3.0000000000000004; snap products within rounding noise.
    const double nearest = std::round(raw);
    const double value = std::abs(raw - nearest) <= 1e-9 * std::max(1.0, raw) ? nearest : std::ceil(raw);
    return static_cast<std::size_t>(value);
}

SplitIndices split_labels(std::span<const int> labels, double test_fraction, std::uint64_t seed, bool stratified) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        fail(ErrorKind::InvalidConfig, "test_fraction must lie in (0, 1)");
    const std::size_t n = labels.size();
    if (n == 0) fail(ErrorKind::DegenerateSplit, "empty dataset");
    const std::size_t n_test = test_count(n, test_fraction);
    if (n_test == 0 || n_test >= n) fail(ErrorKind::DegenerateSplit, "a side of the split would be empty");

    Rng rng(seed);
    SplitIndices split{{}, {}, seed, stratified};
    if (!stratified) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(std::span(order));
        split.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
        split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    } else {
        std::vector<std::size_t> by_class[2];
        for (std::size_t i = 0; i < n; ++i) by_class[labels[i] != 0 ? 1 : 0].push_back(i);
        if (by_class[0].empty() || by_class[1].empty())
            fail(ErrorKind::DegenerateSplit, "stratified split needs both classes");
        // Largest-remainder apportionment of n_test across classes.
        std::size_t quota[2], remainder[2];
        for (int c = 0; c < 2; ++c) {
            quota[c] = n_test * by_class[c].size() / n;
            remainder[c] = n_test * by_class[c].size() % n;
        }
        std::size_t leftover = n_test - quota[0] - quota[1];
        int first = remainder[1] > remainder[0] ? 1 : 0;
        for (int k = 0; k < 2 && leftover > 0; ++k, --leftover) ++quota[k == 0 ? first : 1 - first];
        for (int c = 0; c < 2; ++c) {
            if (quota[c] == 0 || quota[c] >= by_class[c].size())
                fail(ErrorKind::DegenerateSplit, "class " + std::to_string(c) + " cannot be represented on both sides");
            rng.shuffle(std::span(by_class[c]));
            split.test.insert(split.test.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
            split.train.insert(split.train.end(), by_class[c].begin() + static_cast<std::ptrdiff_t>(quota[c]), by_class[c].end());
        }
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

SplitIndices split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed, bool stratified) {
    return split_labels(data.outcomes, test_fraction, seed, stratified);
}

}  // namespace nonunion
