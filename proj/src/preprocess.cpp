#include "nonunion/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "nonunion/error.hpp"

namespace nonunion {

namespace {

Encoding encoding_for(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::Boolean: return Encoding::Boolean;
        case FeatureKind::Categorical: return Encoding::OneHot;
        case FeatureKind::MultiCategorical: return Encoding::MultiHot;
        default: return Encoding::Scaled;
    }
}

std::string_view encoding_name(Encoding e) {
    switch (e) {
        case Encoding::Boolean: return "boolean";
        case Encoding::OneHot: return "one_hot";
        case Encoding::MultiHot: return "multi_hot";
        case Encoding::Scaled: return "scaled";
    }
    return "scaled";
}

Encoding parse_encoding(const std::string& text) {
    for (auto e : {Encoding::Boolean, Encoding::OneHot, Encoding::MultiHot, Encoding::Scaled})
        if (encoding_name(e) == text) return e;
    fail(ErrorKind::InvalidArtifact, "unknown encoding '" + text + "'");
}

/// Raw numeric value for scaled kinds; nullopt when missing or not representable.
std::optional<double> numeric_value(const FeatureSchema& schema, const PatientRecord& rec, std::size_t f,
                                    const ColumnPlan& plan) {
    const Cell& cell = rec.cells[f];
    switch (plan.kind) {
        case FeatureKind::Interval:
        case FeatureKind::Continuous:
            if (const auto* d = std::get_if<double>(&cell)) return *d;
            return std::nullopt;
        case FeatureKind::Ordinal:
            if (const auto* c = std::get_if<Category>(&cell)) {
                auto it = std::find(plan.vocabulary.begin(), plan.vocabulary.end(), c->name);
                if (it != plan.vocabulary.end()) return static_cast<double>(it - plan.vocabulary.begin());
            }
            return std::nullopt;
        case FeatureKind::Date: {
            const auto* event = std::get_if<Date>(&cell);
            const auto* origin = std::get_if<Date>(&rec.cells[schema.fracture_date_index()]);
            if (event && origin) return static_cast<double>(date_offset_days(*event, *origin));
            return std::nullopt;
        }
        default: return std::nullopt;
    }
}

std::size_t mode_index(const std::vector<std::size_t>& counts) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < counts.size(); ++i)
        if (counts[i] > counts[best]) best = i;
    return best;
}

void check_compatible(const FeatureSchema& fitted, const FeatureSchema& data) {
    if (fitted.size() != data.size()) fail(ErrorKind::SchemaMismatch, "feature count differs from fit-time schema");
    for (std::size_t f = 0; f < fitted.size(); ++f) {
        if (fitted.feature(f).name != data.feature(f).name || fitted.feature(f).kind != data.feature(f).kind)
            fail(ErrorKind::SchemaMismatch, "feature '" + data.feature(f).name + "' differs from fit-time schema");
    }
    if (fitted.outcome_name() != data.outcome_name() || fitted.fracture_date_name() != data.fracture_date_name())
        fail(ErrorKind::SchemaMismatch, "outcome or fracture-date designation differs from fit-time schema");
}

}  // namespace

std::size_t ColumnPlan::width() const {
    return (encoding == Encoding::OneHot || encoding == Encoding::MultiHot) ? vocabulary.size() : 1;
}

DesignMatrix DesignMatrix::subset(std::span<const std::size_t> indices) const {
    DesignMatrix out;
    out.values.resize(static_cast<Eigen::Index>(indices.size()), values.cols());
    out.column_names = column_names;
    for (std::size_t r = 0; r < indices.size(); ++r) {
        out.values.row(static_cast<Eigen::Index>(r)) = values.row(static_cast<Eigen::Index>(indices[r]));
        out.labels.push_back(labels.at(indices[r]));
        out.sample_weights.push_back(sample_weights.at(indices[r]));
    }
    return out;
}

std::int64_t date_offset_days(const Date& event, const Date& fracture) { return event.days_since(fracture); }

FittedTransformer fit_transformer(const Dataset& train) {
    if (train.size() == 0) fail(ErrorKind::EmptyInput, "cannot fit a transformer on an empty dataset");
    const auto& schema = train.schema;
    FittedTransformer t;
    t.schema_ = schema;
    std::size_t column = 0;
    for (std::size_t f = 0; f < schema.size(); ++f) {
        if (f == schema.outcome_index()) continue;
        const auto& spec = schema.feature(f);
        ColumnPlan plan;
        plan.feature = spec.name;
        plan.kind = spec.kind;
        plan.encoding = encoding_for(spec.kind);
        plan.vocabulary = spec.categories;
        plan.first_column = column;

        std::size_t observed = 0;
        switch (plan.encoding) {
            case Encoding::Boolean: {
                std::vector<std::size_t> counts(2, 0);  // false, true
                for (const auto& rec : train.records)
                    if (const auto* b = std::get_if<bool>(&rec.cells[f])) ++counts[*b ? 1 : 0], ++observed;
                plan.impute_value = static_cast<double>(mode_index(counts));
                t.column_names_.push_back(spec.name);
                break;
            }
            case Encoding::OneHot: {
                std::vector<std::size_t> counts(plan.vocabulary.size(), 0);
                for (const auto& rec : train.records)
                    if (const auto* c = std::get_if<Category>(&rec.cells[f]))
                        if (auto idx = spec.category_index(c->name)) ++counts[*idx], ++observed;
                plan.impute_category = mode_index(counts);
                for (const auto& cat : plan.vocabulary) t.column_names_.push_back(spec.name + "=" + cat);
                break;
            }
            case Encoding::MultiHot: {
                std::vector<std::size_t> present(plan.vocabulary.size(), 0);
                for (const auto& rec : train.records)
                    if (const auto* s = std::get_if<CategorySet>(&rec.cells[f])) {
                        ++observed;
                        for (const auto& name : s->names)
                            if (auto idx = spec.category_index(name)) ++present[*idx];
                    }
                plan.impute_flags.resize(plan.vocabulary.size());
                for (std::size_t c = 0; c < present.size(); ++c) plan.impute_flags[c] = 2 * present[c] > observed ? 1 : 0;
                for (const auto& cat : plan.vocabulary) t.column_names_.push_back(spec.name + "=" + cat);
                break;
            }
            case Encoding::Scaled: {
                std::vector<double> xs;
                xs.reserve(train.size());
                for (const auto& rec : train.records)
                    if (auto v = numeric_value(schema, rec, f, plan)) xs.push_back(*v);
                observed = xs.size();
                if (observed == 0) break;
                double sum = 0.0;
                for (double x : xs) sum += x;
                plan.mean = sum / static_cast<double>(xs.size());
                double ss = 0.0;
                for (double x : xs) ss += (x - plan.mean) * (x - plan.mean);
                plan.sd = std::sqrt(ss / static_cast<double>(xs.size()));
                plan.constant = plan.sd <= 1e-12 * std::max(1.0, std::abs(plan.mean));
                if (plan.constant) plan.sd = 0.0;
                plan.impute_value = plan.mean;
                t.column_names_.push_back(spec.name);
                break;
            }
        }
        if (observed == 0) throw Error(ErrorKind::AllMissingColumn, spec.name);
        column += plan.width();
        t.plans_.push_back(std::move(plan));
    }
    return t;
}

DesignMatrix FittedTransformer::transform(const Dataset& data) const {
    check_compatible(schema_, data.schema);
    if (data.outcomes.size() != data.records.size())
        fail(ErrorKind::SchemaMismatch, "records and outcomes differ in length");
    DesignMatrix out;
    const auto n = static_cast<Eigen::Index>(data.size());
    out.values = Matrix::Zero(n, static_cast<Eigen::Index>(width()));
    out.column_names = column_names_;
    out.labels = data.outcomes;
    out.sample_weights.assign(data.size(), 1.0);

    const auto& dschema = data.schema;
    for (const auto& plan : plans_) {
        const std::size_t f = *dschema.index_of(plan.feature);
        const auto col0 = static_cast<Eigen::Index>(plan.first_column);
        for (Eigen::Index r = 0; r < n; ++r) {
            const auto& rec = data.records[static_cast<std::size_t>(r)];
            const Cell& cell = rec.cells[f];
            switch (plan.encoding) {
                case Encoding::Boolean:
                    if (const auto* b = std::get_if<bool>(&cell))
                        out.values(r, col0) = *b ? 1.0 : 0.0;
                    else
                        out.values(r, col0) = plan.impute_value;
                    break;
                case Encoding::OneHot:
                    if (const auto* c = std::get_if<Category>(&cell)) {
                        auto it = std::find(plan.vocabulary.begin(), plan.vocabulary.end(), c->name);
                        if (it != plan.vocabulary.end())
                            out.values(r, col0 + (it - plan.vocabulary.begin())) = 1.0;
                        else
                            ++out.unseen_categories;
                    } else {
                        out.values(r, col0 + static_cast<Eigen::Index>(plan.impute_category)) = 1.0;
                    }
                    break;
                case Encoding::MultiHot:
                    if (const auto* s = std::get_if<CategorySet>(&cell)) {
                        for (const auto& name : s->names) {
                            auto it = std::find(plan.vocabulary.begin(), plan.vocabulary.end(), name);
                            if (it != plan.vocabulary.end())
                                out.values(r, col0 + (it - plan.vocabulary.begin())) = 1.0;
                            else
                                ++out.unseen_categories;
                        }
                    } else {
                        for (std::size_t c = 0; c < plan.impute_flags.size(); ++c)
                            out.values(r, col0 + static_cast<Eigen::Index>(c)) = plan.impute_flags[c];
                    }
                    break;
                case Encoding::Scaled: {
                    auto v = numeric_value(dschema, rec, f, plan);
                    if (!v && plan.kind == FeatureKind::Ordinal && std::holds_alternative<Category>(cell))
                        ++out.unseen_categories;
                    const double raw = v.value_or(plan.impute_value);
                    out.values(r, col0) = plan.constant ? 0.0 : (raw - plan.mean) / plan.sd;
                    break;
                }
            }
        }
    }
    return out;
}

DesignMatrix transform(const FittedTransformer& transformer, const Dataset& data) { return transformer.transform(data); }

nlohmann::json FittedTransformer::to_json() const {
    nlohmann::json plans = nlohmann::json::array();
    for (const auto& p : plans_) {
        nlohmann::json j{{"feature", p.feature},
                         {"kind", std::string(to_string(p.kind))},
                         {"encoding", std::string(encoding_name(p.encoding))},
                         {"first_column", p.first_column}};
        switch (p.encoding) {
            case Encoding::Boolean: j["impute"] = p.impute_value; break;
            case Encoding::OneHot:
                j["vocabulary"] = p.vocabulary;
                j["impute_category"] = p.impute_category;
                break;
            case Encoding::MultiHot:
                j["vocabulary"] = p.vocabulary;
                j["impute_flags"] = p.impute_flags;
                break;
            case Encoding::Scaled:
                if (p.kind == FeatureKind::Ordinal) j["vocabulary"] = p.vocabulary;
                j["mean"] = p.mean;
                j["sd"] = p.sd;
                j["constant"] = p.constant;
                break;
        }
        plans.push_back(std::move(j));
    }
    return {{"format", "nonunion.transformer"},
            {"version", kVersion},
            {"schema", schema_.to_json()},
            {"date_reference", schema_.fracture_date_name()},
            {"columns", column_names_},
            {"plans", plans}};
}

FittedTransformer FittedTransformer::from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format") != "nonunion.transformer" || doc.at("version").get<int>() != kVersion)
            fail(ErrorKind::InvalidArtifact, "not a version-1 transformer artifact");
        FittedTransformer t;
        t.schema_ = FeatureSchema::from_json(doc.at("schema"));
        t.column_names_ = doc.at("columns").get<std::vector<std::string>>();
        for (const auto& j : doc.at("plans")) {
            ColumnPlan p;
            p.feature = j.at("feature").get<std::string>();
            p.kind = *parse_feature_kind(j.at("kind").get<std::string>());
            p.encoding = parse_encoding(j.at("encoding").get<std::string>());
            p.first_column = j.at("first_column").get<std::size_t>();
            p.vocabulary = j.value("vocabulary", std::vector<std::string>{});
            p.impute_value = j.value("impute", 0.0);
            p.impute_category = j.value("impute_category", std::size_t{0});
            p.impute_flags = j.value("impute_flags", std::vector<int>{});
            p.mean = j.value("mean", 0.0);
            p.sd = j.value("sd", 0.0);
            p.constant = j.value("constant", false);
            if (p.encoding == Encoding::Scaled) p.impute_value = p.mean;
            t.plans_.push_back(std::move(p));
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidArtifact, std::string("transformer: ") + e.what());
    }
}

std::vector<double> compute_class_weights(std::span<const int> labels) {
    std::size_t pos = 0, neg = 0;
    for (int y : labels) (y ? pos : neg)++;
    if (pos == 0 || neg == 0) fail(ErrorKind::SingleClass, "class weights need both classes");
    const double ratio = static_cast<double>(neg) / static_cast<double>(pos);
    std::vector<double> w(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) w[i] = labels[i] ? ratio : 1.0;
    return w;
}

std::vector<double> effective_sample_weights(const DesignMatrix& x, bool class_weighting) {
    std::vector<double> w = x.sample_weights.size() == x.rows() ? x.sample_weights : std::vector<double>(x.rows(), 1.0);
    if (class_weighting) {
        const auto cw = compute_class_weights(x.labels);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] *= cw[i];
    }
    return w;
}

}  // namespace nonunion
