#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "nonunion/cohort.hpp"

namespace nonunion {

/// Sampling distribution for one synthetic column. Which fields apply depends on
/// `spec.kind`:
///   boolean            p_true
///   categorical/ordinal weights (one per category, normalized on use)
///   multi_categorical  weights are per-category inclusion probabilities; `empty_category`
///                      (if set) is emitted alone when nothing else was drawn
///   continuous         Normal(mean, sd) clipped to [lower, upper]
///   interval           Poisson(mean)
///   date               fracture date: uniform over [origin_start, origin_end];
///                      others: fracture date + max(lower, round(Normal(mean, sd))) days
struct SyntheticFeature {
    FeatureSpec spec;
    double p_true = 0.5;
    std::vector<double> weights;
    std::string empty_category;
    double mean = 0.0;
    double sd = 1.0;
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
};

/// One additive contribution to the ground-truth log-odds.
///
/// A term reads a feature's "risk input": 0/1 for booleans and for category
/// indicators (when `category` is set), the level index for ordinals, the
/// standardized value for continuous/interval columns, and years since the
/// fracture for dates.
struct RiskTerm {
    enum class Kind { Linear, Interaction, Threshold };
    Kind kind = Kind::Linear;
    std::string feature;
    std::string category;
    std::string other_feature;
    std::string other_category;
    double coefficient = 0.0;
    /// Threshold terms contribute `coefficient` when input > cutoff.
    double cutoff = 0.0;
};

struct SyntheticConfig {
    std::vector<SyntheticFeature> features;
    std::vector<RiskTerm> risk_terms;
    std::string outcome_name = "failed_healing";
    std::string fracture_date_name = "fracture_date";
    std::string origin_start = "2009-01-01";
    std::string origin_end = "2023-05-31";
    double target_incidence = 0.3877;
    /// Target fraction of Missing cells over the whole table. Outcome and fracture
    /// date are never missing, so the per-cell rate on other columns is scaled up.
    double missing_fraction = 0.166;

    static SyntheticConfig defaults();
    FeatureSchema schema() const;
    void validate() const;

    nlohmann::json to_json() const;
    static SyntheticConfig from_json(const nlohmann::json& doc);
};

struct SyntheticCohort {
    Dataset data;
    std::vector<double> true_risk;
    double intercept = 0.0;
};

SyntheticCohort generate_synthetic_cohort(std::size_t n, std::uint64_t seed, const SyntheticConfig& config);

}  // namespace nonunion
