#pragma once

#include <ostream>
#include <span>
#include <vector>

#include <json.hpp>

#include "nonunion/parallel.hpp"

namespace nonunion {

struct LowessConfig {
    double frac = 2.0 / 3.0;
    int robust_iters = 3;
};

/// Smoothed y at each x, in input order. Neighbourhoods hold the ceil(frac * n)
/// nearest points plus any further points tied with the k-th distance.
std::vector<double> lowess(std::span<const double> x, std::span<const double> y, const LowessConfig& config = {},
                           Execution exec = Execution::Serial);

/// odds(mean p) / odds(mean y).
double calibration_odds_ratio(std::span<const int> labels, std::span<const double> probabilities);

struct CalibrationPoint {
    double predicted = 0.0;
    int outcome = 0;
    double smoothed_raw = 0.0;
    double smoothed = 0.0;  // clamped to [0, 1]
};

struct CalibrationReport {
    std::vector<CalibrationPoint> points;  // sorted by predicted probability
    double odds_ratio = 1.0;
    double mean_predicted = 0.0;
    double mean_observed = 0.0;

    nlohmann::json summary_json() const;
    void write_csv(std::ostream& out) const;
};

CalibrationReport calibration_report(std::span<const int> labels, std::span<const double> probabilities,
                                     const LowessConfig& config = {}, Execution exec = Execution::Serial);

}  // namespace nonunion
