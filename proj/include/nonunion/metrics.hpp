#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <json.hpp>

namespace nonunion {

/// Positive class = failed healing.
struct ConfusionMatrix {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;
    double threshold = 0.5;

    std::uint64_t total() const { return tp + fp + tn + fn; }
    nlohmann::json to_json() const;
};

/// nullopt encodes Undefined (a 0/0 ratio).
using Metric = std::optional<double>;

struct MetricReport {
    Metric upm;
    Metric mcc;
    Metric sensitivity;
    Metric specificity;
    Metric precision;
    Metric npv;

    nlohmann::json to_json() const;
};

/// Predicted positive iff p > threshold.
ConfusionMatrix confusion(std::span<const int> labels, std::span<const double> probabilities, double threshold);

/// 4 TP TN / (4 TP TN + (TP + TN)(FP + FN)).
Metric upm(const ConfusionMatrix& cm);
/// 4 / (1/precision + 1/sensitivity + 1/specificity + 1/npv); Undefined unless all four are positive.
Metric upm_harmonic(const ConfusionMatrix& cm);

MetricReport companion_metrics(const ConfusionMatrix& cm);

/// 0.00, 0.01, ..., 1.00 (exact hundredths).
std::vector<double> default_threshold_grid();

struct SweepPoint {
    double threshold = 0.0;
    ConfusionMatrix cm;
    MetricReport metrics;
};

std::vector<SweepPoint> sweep_thresholds(std::span<const int> labels, std::span<const double> probabilities,
                                         std::span<const double> grid);
std::vector<SweepPoint> sweep_thresholds(std::span<const int> labels, std::span<const double> probabilities);

/// Largest candidate in {0} ∪ {distinct p} whose sensitivity is >= target.
/// Throws Unachievable when no candidate qualifies.
double min_threshold_for_sensitivity(std::span<const int> labels, std::span<const double> probabilities,
                                     double target = 0.70);
/// Smallest candidate in {distinct p} ∪ {1} whose specificity is >= target.
double threshold_for_specificity(std::span<const int> labels, std::span<const double> probabilities,
                                 double target = 0.70);

/// threshold,upm,sensitivity,specificity,precision,npv; Undefined cells are empty.
void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> sweep);

}  // namespace nonunion
