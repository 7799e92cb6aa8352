#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nonunion/calibration.hpp"
#include "nonunion/classifier.hpp"
#include "nonunion/cohort.hpp"
#include "nonunion/compare.hpp"
#include "nonunion/metrics.hpp"
#include "nonunion/synthetic.hpp"

namespace nonunion {

enum class ThresholdPolicy { Fixed, SensitivityFloor, SpecificityFloor };

struct ThresholdRule {
    ThresholdPolicy policy = ThresholdPolicy::SensitivityFloor;
    double value = 0.70;

    /// Threshold chosen on (labels, probabilities) under this rule.
    double choose(std::span<const int> labels, std::span<const double> probabilities) const;
    nlohmann::json to_json() const;
    static ThresholdRule from_json(const nlohmann::json& doc);
};

struct DataSource {
    // Exactly one of: synthetic cohort, single CSV (split by seed), or train/test CSVs.
    std::optional<std::size_t> synthetic_n;
    SyntheticConfig synthetic;
    std::filesystem::path csv;
    std::filesystem::path train_csv;
    std::filesystem::path test_csv;
    std::filesystem::path schema;
};

struct ComparisonSettings {
    bool enabled = true;
    ResamplePlan plan;            // master_seed is derived from the experiment seed
    double threshold = 0.5;
    double alpha = 0.05;
    /// Also compare `control_model` against a label-shuffled twin of itself.
    bool shuffled_control = true;
    std::string control_model = "gbt";
};

struct AblationSettings {
    bool enabled = true;
    std::vector<double> fractions = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::size_t repeats = 25;
    double threshold = 0.26;
    std::string model = "gbt";
    std::size_t min_rows = 10;
};

struct ExperimentConfig {
    std::uint64_t seed = 7;
    DataSource data;
    double test_fraction = 0.2;
    double holdout_fraction = 0.2;
    bool stratified = true;
    std::vector<ModelSpec> models;
    ThresholdRule threshold;
    ComparisonSettings comparison;
    AblationSettings ablation;
    LowessConfig lowess;
    bool parallel = true;

    /// Synthetic n=797, three models, sensitivity floor 0.70, 300 resamples, 10x25 ablation.
    static ExperimentConfig defaults();
    const ModelSpec& model(const std::string& name) const;
    Execution execution() const { return parallel ? Execution::Parallel : Execution::Serial; }

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& doc);
};

/// Applies "a.b.c=value" to a JSON document. Numeric path segments index arrays;
/// the value is parsed as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Reads a config file (or the defaults when `path` is empty) and applies overrides.
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

/// FNV-1a 64 of the canonical config dump, hex encoded.
std::string config_hash(const nlohmann::json& resolved);

struct Partition {
    Dataset train;    // full training set
    Dataset test;     // untouched until final reporting
    Dataset fit;      // train minus holdout: transformer + model fitting
    Dataset holdout;  // threshold selection
    SplitIndices split;
    SplitIndices inner;
};

/// Training seed of the i-th configured model.
std::uint64_t model_seed(const ExperimentConfig& config, std::size_t index);

Dataset load_source(const ExperimentConfig& config);
Partition prepare_data(const ExperimentConfig& config);

struct ModelResult {
    std::string name;
    Pipeline pipeline;
    double threshold = 0.5;
    MetricReport holdout;
    ConfusionMatrix confusion;
    MetricReport test;
    std::vector<double> test_probabilities;
    std::vector<SweepPoint> sweep;
    std::optional<CalibrationReport> calibration;
    std::string calibration_error;
};

struct FullRun {
    std::vector<ModelResult> models;
    ConfusionMatrix baseline_confusion;
    MetricReport baseline;
};

FullRun run_full_pipeline(const ExperimentConfig& config, const Partition& data);

struct PairwiseTest {
    std::string first;
    std::string second;
    std::size_t usable_pairs = 0;
    std::optional<WilcoxonResult> result;
    std::string error;
    bool significant = false;
};

struct ComparisonRun {
    std::vector<std::string> names;
    std::vector<PairedScores> scores;
    std::vector<PairwiseTest> tests;  // every unordered pair of configured models
    std::optional<PairwiseTest> control;
    std::optional<PairedScores> control_scores;
    double alpha = 0.05;
    std::size_t family_size = 0;

    nlohmann::json to_json() const;
};

ComparisonRun run_comparison(const ExperimentConfig& config, const Partition& data);

struct AblationRow {
    double fraction = 0.0;
    std::size_t repeat = 0;
    std::size_t rows = 0;
    Metric upm;
    Metric sensitivity;
    Metric specificity;
    std::string skipped;
};

struct AblationRun {
    std::vector<AblationRow> rows;
    std::vector<double> fractions;
    std::vector<std::optional<double>> mean_upm;
    std::optional<double> spearman;

    nlohmann::json to_json() const;
    void write_csv(std::ostream& out) const;
};

AblationRun run_ablation(const ExperimentConfig& config, const Partition& data);

/// Spearman rank correlation with average ranks for ties; nullopt when either side is constant.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

using Logger = std::function<void(const std::string&)>;

struct RunAllOptions {
    bool comparison = true;
    bool ablation = true;
};

/// Full study: writes config.json, models/, reports/report.json and plots/ under
/// `out`. Returns the report.
nlohmann::json run_all(const ExperimentConfig& config, const std::filesystem::path& out, const RunAllOptions& options = {},
                       const Logger& log = {});

/// Report fields that carry wall-clock time; excluded when comparing runs.
nlohmann::json strip_timestamps(nlohmann::json report);

}  // namespace nonunion
