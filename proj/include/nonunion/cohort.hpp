#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace nonunion {

enum class FeatureKind { Boolean, Categorical, MultiCategorical, Ordinal, Interval, Continuous, Date };

std::string_view to_string(FeatureKind kind);
std::optional<FeatureKind> parse_feature_kind(std::string_view text);

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::Continuous;
    /// Vocabulary for (multi-)categorical features; ordered levels for ordinal ones.
    std::vector<std::string> categories;

    bool operator==(const FeatureSpec&) const = default;

    /// Position of `category` in the vocabulary, if present.
    std::optional<std::size_t> category_index(std::string_view category) const;
};

/// Declarative description of every raw column. The outcome and the fracture
/// date are ordinary entries designated by name.
class FeatureSchema {
public:
    FeatureSchema() = default;
    FeatureSchema(std::vector<FeatureSpec> features, std::string outcome_name, std::string fracture_date_name);

    const std::vector<FeatureSpec>& features() const { return features_; }
    const FeatureSpec& feature(std::size_t i) const { return features_.at(i); }
    std::size_t size() const { return features_.size(); }
    const std::string& outcome_name() const { return outcome_name_; }
    const std::string& fracture_date_name() const { return fracture_date_name_; }
    std::size_t outcome_index() const { return outcome_index_; }
    std::size_t fracture_date_index() const { return fracture_date_index_; }
    std::optional<std::size_t> index_of(std::string_view name) const;

    bool operator==(const FeatureSchema& other) const {
        return features_ == other.features_ && outcome_name_ == other.outcome_name_ &&
               fracture_date_name_ == other.fracture_date_name_;
    }

    nlohmann::json to_json() const;
    static FeatureSchema from_json(const nlohmann::json& doc);
    static FeatureSchema load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::vector<FeatureSpec> features_;
    std::string outcome_name_;
    std::string fracture_date_name_;
    std::size_t outcome_index_ = 0;
    std::size_t fracture_date_index_ = 0;
};

struct Date {
    std::chrono::sys_days value{};

    static std::optional<Date> parse_iso(std::string_view text);
    static Date from_ymd(int year, unsigned month, unsigned day);
    std::string to_iso() const;
    /// Signed calendar-day count from `origin` to this date.
    std::int64_t days_since(const Date& origin) const { return (value - origin.value).count(); }

    bool operator==(const Date&) const = default;
    auto operator<=>(const Date&) const = default;
};

struct Missing {
    bool operator==(const Missing&) const = default;
};
struct Category {
    std::string name;
    bool operator==(const Category&) const = default;
};
/// Multi-select value; names kept in vocabulary order.
struct CategorySet {
    std::vector<std::string> names;
    bool operator==(const CategorySet&) const = default;
};

using Cell = std::variant<Missing, bool, Category, CategorySet, double, Date>;

inline bool is_missing(const Cell& cell) { return std::holds_alternative<Missing>(cell); }

struct PatientRecord {
    /// One cell per schema feature, in schema order.
    std::vector<Cell> cells;

    const Cell& at(const FeatureSchema& schema, std::string_view name) const;
    bool operator==(const PatientRecord&) const = default;
};

struct Dataset {
    FeatureSchema schema;
    std::vector<PatientRecord> records;
    /// 1 = failed healing.
    std::vector<int> outcomes;

    std::size_t size() const { return records.size(); }
    double incidence() const;
    /// Rows at `indices`, in the given order (duplicates allowed).
    Dataset subset(std::span<const std::size_t> indices) const;
    /// Checks record/outcome alignment and cell/kind agreement.
    void validate() const;
    /// Fraction of Missing cells over all records and features.
    double missing_fraction() const;
};

/// Parses one CSV cell for `spec`. Empty text yields Missing.
Cell parse_cell(const FeatureSpec& spec, std::string_view text, std::size_t row);
std::string format_cell(const Cell& cell);

Dataset read_dataset(std::istream& in, const FeatureSchema& schema);
Dataset load_dataset(const std::filesystem::path& csv_path, const FeatureSchema& schema);
void write_dataset(std::ostream& out, const Dataset& data);
void save_dataset(const std::filesystem::path& csv_path, const Dataset& data);

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
    bool stratified = true;
};

/// ceil(fraction * n), computed without floating-point drift at exact products.
std::size_t test_count(std::size_t n, double test_fraction);

SplitIndices split_labels(std::span<const int> labels, double test_fraction, std::uint64_t seed, bool stratified = true);
SplitIndices split_dataset(const Dataset& data, double test_fraction, std::uint64_t seed, bool stratified = true);

}  // namespace nonunion
