#include "nonunion/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nonunion/error.hpp"
#include "nonunion/random.hpp"

namespace nonunion {

namespace {

SyntheticFeature boolean(std::string name, double p_true) {
    SyntheticFeature f;
    f.spec = {std::move(name), FeatureKind::Boolean, {}};
    f.p_true = p_true;
    return f;
}

SyntheticFeature categorical(std::string name, FeatureKind kind, std::vector<std::string> cats, std::vector<double> weights) {
    SyntheticFeature f;
    f.spec = {std::move(name), kind, std::move(cats)};
    f.weights = std::move(weights);
    return f;
}

SyntheticFeature continuous(std::string name, double mean, double sd, double lower, double upper) {
    SyntheticFeature f;
    f.spec = {std::move(name), FeatureKind::Continuous, {}};
    f.mean = mean;
    f.sd = sd;
    f.lower = lower;
    f.upper = upper;
    return f;
}

SyntheticFeature interval(std::string name, double mean) {
    SyntheticFeature f;
    f.spec = {std::move(name), FeatureKind::Interval, {}};
    f.mean = mean;
    return f;
}

SyntheticFeature date(std::string name, double mean_days, double sd_days, double min_days) {
    SyntheticFeature f;
    f.spec = {std::move(name), FeatureKind::Date, {}};
    f.mean = mean_days;
    f.sd = sd_days;
    f.lower = min_days;
    return f;
}

RiskTerm linear(std::string feature, double coefficient, std::string category = {}) {
    return {RiskTerm::Kind::Linear, std::move(feature), std::move(category), {}, {}, coefficient, 0.0};
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::size_t draw_weighted(Rng& rng, const std::vector<double>& weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (u < weights[i]) return i;
        u -= weights[i];
    }
    return weights.size() - 1;
}

std::string_view kind_name(RiskTerm::Kind kind) {
    switch (kind) {
        case RiskTerm::Kind::Linear: return "linear";
        case RiskTerm::Kind::Interaction: return "interaction";
        case RiskTerm::Kind::Threshold: return "threshold";
    }
    return "linear";
}

RiskTerm::Kind parse_kind(const std::string& text) {
    if (text == "linear") return RiskTerm::Kind::Linear;
    if (text == "interaction") return RiskTerm::Kind::Interaction;
    if (text == "threshold") return RiskTerm::Kind::Threshold;
    fail(ErrorKind::InvalidConfig, "unknown risk term kind '" + text + "'");
}

struct ResolvedTerm {
    const RiskTerm* term;
    std::size_t feature;
    std::size_t other = 0;
};

}  // namespace

SyntheticConfig SyntheticConfig::defaults() {
    SyntheticConfig c;
    c.features = {
        date("fracture_date", 0, 0, 0),
        date("primary_surgery_date", 4, 5, 0),
        date("nonunion_diagnosis_date", 250, 90, 120),
        date("revision_surgery_date", 300, 110, 150),
        continuous("age", 52, 17, 18, 95),
        categorical("sex", FeatureKind::Categorical, {"female", "male"}, {0.35, 0.65}),
        continuous("bmi", 27, 5, 15, 55),
        boolean("smoker", 0.35),
        categorical("comorbidities", FeatureKind::MultiCategorical,
                    {"none", "diabetes", "lung_disease", "renal_disease", "cardiovascular", "osteoporosis"},
                    {0.0, 0.15, 0.10, 0.06, 0.18, 0.08}),
        categorical("fracture_location", FeatureKind::Categorical, {"femur", "tibia", "humerus", "forearm", "clavicle"},
                    {0.30, 0.35, 0.15, 0.12, 0.08}),
        boolean("open_fracture", 0.25),
        categorical("injury_severity", FeatureKind::Ordinal, {"low", "moderate", "high"}, {0.4, 0.4, 0.2}),
        categorical("primary_fixation", FeatureKind::Categorical,
                    {"plate", "intramedullary_nail", "external_fixator", "screws"}, {0.45, 0.35, 0.12, 0.08}),
        categorical("weber_cech", FeatureKind::Ordinal, {"hypertrophic", "oligotrophic", "atrophic"}, {0.3, 0.3, 0.4}),
        boolean("biomechanically_stable", 0.55),
        categorical("soft_tissue_status", FeatureKind::Ordinal, {"intact", "compromised", "defect"}, {0.6, 0.3, 0.1}),
        boolean("infection", 0.30),
        interval("previous_surgeries", 1.8),
        continuous("hemoglobin", 13.2, 1.7, 6, 19),
        continuous("crp", 12, 15, 0.1, 250),
        continuous("leukocytes", 8, 2.5, 1, 30),
        continuous("albumin", 40, 5, 15, 60),
        continuous("vitamin_d", 22, 10, 2, 80),
        continuous("creatinine", 0.9, 0.3, 0.3, 5),
        boolean("nsaid_use", 0.20),
        boolean("steroid_use", 0.08),
        categorical("revision_fixation", FeatureKind::Categorical, {"plate", "nail", "external_fixator", "other"},
                    {0.45, 0.35, 0.12, 0.08}),
        boolean("autologous_bone_graft", 0.60),
        boolean("growth_factors", 0.15),
        boolean("antibiotic_treatment", 0.35),
        boolean("failed_healing", 0.5),
    };
    c.features[8].empty_category = "none";

    c.risk_terms = {
        linear("infection", 0.9),
        linear("smoker", 0.5),
        linear("weber_cech", 0.7, "atrophic"),
        linear("comorbidities", 0.5, "diabetes"),
        linear("age", 0.3),
        linear("biomechanically_stable", -0.7),
        linear("autologous_bone_graft", -0.5),
        linear("hemoglobin", -0.3),
        linear("steroid_use", 0.6),
        {RiskTerm::Kind::Interaction, "open_fracture", {}, "infection", {}, 1.0, 0.0},
        {RiskTerm::Kind::Threshold, "previous_surgeries", {}, {}, {}, 1.3, 0.9},
        {RiskTerm::Kind::Threshold, "crp", {}, {}, {}, 0.7, 1.0},
    };
    return c;
}

FeatureSchema SyntheticConfig::schema() const {
    std::vector<FeatureSpec> specs;
    specs.reserve(features.size());
    for (const auto& f : features) specs.push_back(f.spec);
    return FeatureSchema(std::move(specs), outcome_name, fracture_date_name);
}

void SyntheticConfig::validate() const {
    if (!(target_incidence > 0.0 && target_incidence < 1.0))
        fail(ErrorKind::InvalidConfig, "target incidence must lie in (0, 1)");
    if (!(missing_fraction >= 0.0 && missing_fraction < 1.0))
        fail(ErrorKind::InvalidConfig, "missing fraction must lie in [0, 1)");
    if (!Date::parse_iso(origin_start) || !Date::parse_iso(origin_end) ||
        *Date::parse_iso(origin_end) < *Date::parse_iso(origin_start))
        fail(ErrorKind::InvalidConfig, "invalid fracture date range");
    FeatureSchema s;
    try {
        s = schema();
    } catch (const Error& e) {
        fail(ErrorKind::InvalidConfig, e.what());
    }
    if (s.size() <= 2) fail(ErrorKind::InvalidConfig, "need at least one predictor besides outcome and fracture date");
    const double eligible = static_cast<double>(s.size() - 2);
    if (missing_fraction * static_cast<double>(s.size()) / eligible >= 1.0)
        fail(ErrorKind::InvalidConfig, "missing fraction unreachable with outcome and fracture date always observed");
    for (const auto& f : features) {
        const auto k = f.spec.kind;
        if ((k == FeatureKind::Categorical || k == FeatureKind::Ordinal || k == FeatureKind::MultiCategorical) &&
            f.weights.size() != f.spec.categories.size())
            fail(ErrorKind::InvalidConfig, "feature '" + f.spec.name + "' needs one weight per category");
        if (k == FeatureKind::Boolean && !(f.p_true >= 0.0 && f.p_true <= 1.0))
            fail(ErrorKind::InvalidConfig, "feature '" + f.spec.name + "' has p_true outside [0, 1]");
        if ((k == FeatureKind::Continuous) && !(f.sd > 0.0))
            fail(ErrorKind::InvalidConfig, "feature '" + f.spec.name + "' needs sd > 0");
        if (k == FeatureKind::MultiCategorical && !f.empty_category.empty() && !f.spec.category_index(f.empty_category))
            fail(ErrorKind::InvalidConfig, "feature '" + f.spec.name + "' has an unknown empty_category");
    }
    for (const auto& t : risk_terms) {
        for (const auto* name : {&t.feature, t.kind == RiskTerm::Kind::Interaction ? &t.other_feature : nullptr}) {
            if (!name) continue;
            auto idx = s.index_of(*name);
            if (!idx || *idx == s.outcome_index())
                fail(ErrorKind::InvalidConfig, "risk term references unknown feature '" + *name + "'");
        }
    }
}

nlohmann::json SyntheticConfig::to_json() const {
    nlohmann::json feats = nlohmann::json::array();
    for (const auto& f : features) {
        nlohmann::json j{{"name", f.spec.name}, {"kind", std::string(to_string(f.spec.kind))}};
        switch (f.spec.kind) {
            case FeatureKind::Boolean: j["p_true"] = f.p_true; break;
            case FeatureKind::Categorical:
            case FeatureKind::Ordinal:
            case FeatureKind::MultiCategorical:
                j[f.spec.kind == FeatureKind::Ordinal ? "levels" : "categories"] = f.spec.categories;
                j["weights"] = f.weights;
                if (!f.empty_category.empty()) j["empty_category"] = f.empty_category;
                break;
            case FeatureKind::Continuous:
            case FeatureKind::Interval:
            case FeatureKind::Date:
                j["mean"] = f.mean;
                j["sd"] = f.sd;
                if (std::isfinite(f.lower)) j["lower"] = f.lower;
                if (std::isfinite(f.upper)) j["upper"] = f.upper;
                break;
        }
        feats.push_back(std::move(j));
    }
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : risk_terms) {
        nlohmann::json j{{"kind", std::string(kind_name(t.kind))}, {"feature", t.feature}, {"coefficient", t.coefficient}};
        if (!t.category.empty()) j["category"] = t.category;
        if (t.kind == RiskTerm::Kind::Interaction) {
            j["other_feature"] = t.other_feature;
            if (!t.other_category.empty()) j["other_category"] = t.other_category;
        }
        if (t.kind == RiskTerm::Kind::Threshold) j["cutoff"] = t.cutoff;
        terms.push_back(std::move(j));
    }
    return {{"features", feats},
            {"risk_terms", terms},
            {"outcome", outcome_name},
            {"fracture_date", fracture_date_name},
            {"origin_start", origin_start},
            {"origin_end", origin_end},
            {"target_incidence", target_incidence},
            {"missing_fraction", missing_fraction}};
}

SyntheticConfig SyntheticConfig::from_json(const nlohmann::json& doc) {
    SyntheticConfig c = defaults();
    try {
        if (doc.contains("features")) {
            c.features.clear();
            for (const auto& j : doc.at("features")) {
                SyntheticFeature f;
                f.spec.name = j.at("name").get<std::string>();
                auto kind = parse_feature_kind(j.at("kind").get<std::string>());
                if (!kind) fail(ErrorKind::InvalidConfig, "unknown kind for feature '" + f.spec.name + "'");
                f.spec.kind = *kind;
                if (j.contains("levels")) f.spec.categories = j.at("levels").get<std::vector<std::string>>();
                if (j.contains("categories")) f.spec.categories = j.at("categories").get<std::vector<std::string>>();
                f.p_true = j.value("p_true", 0.5);
                f.weights = j.value("weights", std::vector<double>{});
                f.empty_category = j.value("empty_category", std::string{});
                f.mean = j.value("mean", 0.0);
                f.sd = j.value("sd", 1.0);
                if (j.contains("lower")) f.lower = j.at("lower").get<double>();
                if (j.contains("upper")) f.upper = j.at("upper").get<double>();
                c.features.push_back(std::move(f));
            }
        }
        if (doc.contains("risk_terms")) {
            c.risk_terms.clear();
            for (const auto& j : doc.at("risk_terms")) {
                RiskTerm t;
                t.kind = parse_kind(j.at("kind").get<std::string>());
                t.feature = j.at("feature").get<std::string>();
                t.category = j.value("category", std::string{});
                t.other_feature = j.value("other_feature", std::string{});
                t.other_category = j.value("other_category", std::string{});
                t.coefficient = j.at("coefficient").get<double>();
                t.cutoff = j.value("cutoff", 0.0);
                c.risk_terms.push_back(std::move(t));
            }
        }
        c.outcome_name = doc.value("outcome", c.outcome_name);
        c.fracture_date_name = doc.value("fracture_date", c.fracture_date_name);
        c.origin_start = doc.value("origin_start", c.origin_start);
        c.origin_end = doc.value("origin_end", c.origin_end);
        c.target_incidence = doc.value("target_incidence", c.target_incidence);
        c.missing_fraction = doc.value("missing_fraction", c.missing_fraction);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidConfig, std::string("synthetic config: ") + e.what());
    }
    return c;
}

SyntheticCohort generate_synthetic_cohort(std::size_t n, std::uint64_t seed, const SyntheticConfig& config) {
    if (n < 20) fail(ErrorKind::InvalidConfig, "synthetic cohort needs n >= 20");
    config.validate();
    const FeatureSchema schema = config.schema();
    const std::size_t nf = schema.size();
    const std::size_t outcome = schema.outcome_index();
    const std::size_t origin = schema.fracture_date_index();
    const Date start = *Date::parse_iso(config.origin_start);
    const Date end = *Date::parse_iso(config.origin_end);
    const auto span_days = static_cast<std::size_t>(end.days_since(start)) + 1;

    Rng rng(derive_seed(seed, 0));
    std::vector<PatientRecord> records(n);
    for (auto& rec : records) {
        rec.cells.assign(nf, Missing{});
        const Date fracture{start.value + std::chrono::days(static_cast<long>(rng.index(span_days)))};
        rec.cells[origin] = fracture;
        for (std::size_t f = 0; f < nf; ++f) {
            if (f == origin || f == outcome) continue;
            const auto& feat = config.features[f];
            switch (feat.spec.kind) {
                case FeatureKind::Boolean: rec.cells[f] = rng.bernoulli(feat.p_true); break;
                case FeatureKind::Categorical:
                case FeatureKind::Ordinal:
                    rec.cells[f] = Category{feat.spec.categories[draw_weighted(rng, feat.weights)]};
                    break;
                case FeatureKind::MultiCategorical: {
                    CategorySet set;
                    for (std::size_t c = 0; c < feat.spec.categories.size(); ++c)
                        if (rng.bernoulli(feat.weights[c])) set.names.push_back(feat.spec.categories[c]);
                    if (set.names.empty()) {
                        const auto& fallback =
                            feat.empty_category.empty() ? feat.spec.categories[draw_weighted(rng, feat.weights)] : feat.empty_category;
                        set.names.push_back(fallback);
                    }
                    rec.cells[f] = std::move(set);
                    break;
                }
                case FeatureKind::Continuous: {
                    // Rounded to 2 decimals like recorded lab values.
                    double v = std::clamp(rng.normal(feat.mean, feat.sd), feat.lower, feat.upper);
                    rec.cells[f] = std::round(v * 100.0) / 100.0;
                    break;
                }
                case FeatureKind::Interval: rec.cells[f] = static_cast<double>(rng.poisson(feat.mean)); break;
                case FeatureKind::Date: {
                    double offset = std::max(feat.lower, std::round(rng.normal(feat.mean, feat.sd)));
                    rec.cells[f] = Date{fracture.value + std::chrono::days(static_cast<long>(offset))};
                    break;
                }
            }
        }
    }

    // Ground-truth linear predictor (without intercept).
    std::vector<ResolvedTerm> terms;
    for (const auto& t : config.risk_terms) {
        ResolvedTerm r{&t, *schema.index_of(t.feature)};
        if (t.kind == RiskTerm::Kind::Interaction) r.other = *schema.index_of(t.other_feature);
        terms.push_back(r);
    }
    auto risk_input = [&](const PatientRecord& rec, std::size_t f, const std::string& category) -> double {
        const auto& feat = config.features[f];
        const Cell& cell = rec.cells[f];
        switch (feat.spec.kind) {
            case FeatureKind::Boolean: return std::get<bool>(cell) ? 1.0 : 0.0;
            case FeatureKind::Categorical:
            case FeatureKind::Ordinal: {
                const auto& name = std::get<Category>(cell).name;
                if (!category.empty()) return name == category ? 1.0 : 0.0;
                return static_cast<double>(*feat.spec.category_index(name));
            }
            case FeatureKind::MultiCategorical: {
                const auto& names = std::get<CategorySet>(cell).names;
                if (category.empty()) return static_cast<double>(names.size());
                return std::find(names.begin(), names.end(), category) != names.end() ? 1.0 : 0.0;
            }
            case FeatureKind::Continuous: return (std::get<double>(cell) - feat.mean) / feat.sd;
            case FeatureKind::Interval: return (std::get<double>(cell) - feat.mean) / std::sqrt(std::max(feat.mean, 1e-12));
            case FeatureKind::Date:
                return static_cast<double>(std::get<Date>(cell).days_since(std::get<Date>(rec.cells[origin]))) / 365.0;
        }
        return 0.0;
    };
    std::vector<double> eta(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& r : terms) {
            const double a = risk_input(records[i], r.feature, r.term->category);
            switch (r.term->kind) {
                case RiskTerm::Kind::Linear: eta[i] += r.term->coefficient * a; break;
                case RiskTerm::Kind::Interaction:
                    eta[i] += r.term->coefficient * a * risk_input(records[i], r.other, r.term->other_category);
                    break;
                case RiskTerm::Kind::Threshold: eta[i] += a > r.term->cutoff ? r.term->coefficient : 0.0; break;
            }
        }
    }

    // Intercept so the mean true risk equals the target incidence (mean risk is increasing in it).
    auto mean_risk = [&](double b) {
        double s = 0.0;
        for (double e : eta) s += sigmoid(b + e);
        return s / static_cast<double>(n);
    };
    double lo = -30.0, hi = 30.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        (mean_risk(mid) < config.target_incidence ? lo : hi) = mid;
    }
    const double intercept = 0.5 * (lo + hi);

    SyntheticCohort out{Dataset{schema, {}, {}}, std::vector<double>(n), intercept};
    Rng outcome_rng(derive_seed(seed, 1));
    out.data.outcomes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.true_risk[i] = sigmoid(intercept + eta[i]);
        out.data.outcomes[i] = outcome_rng.bernoulli(out.true_risk[i]) ? 1 : 0;
        records[i].cells[outcome] = out.data.outcomes[i] == 1;
    }

    // Missing completely at random, never on outcome or fracture date.
    const double per_cell = config.missing_fraction * static_cast<double>(nf) / static_cast<double>(nf - 2);
    if (per_cell > 0.0) {
        Rng missing_rng(derive_seed(seed, 2));
        for (auto& rec : records)
            for (std::size_t f = 0; f < nf; ++f) {
                if (f == origin || f == outcome) continue;
                if (missing_rng.bernoulli(per_cell)) rec.cells[f] = Missing{};
            }
    }
    out.data.records = std::move(records);
    return out;
}

}  // namespace nonunion
