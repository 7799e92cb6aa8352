#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nonunion/cohort.hpp"
#include "nonunion/preprocess.hpp"
#include "nonunion/random.hpp"

namespace testing {

using namespace nonunion;

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("nonunion_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Design matrix from raw rows, unit sample weights.
inline DesignMatrix design(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels) {
    DesignMatrix x;
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto d = rows.empty() ? Eigen::Index{0} : static_cast<Eigen::Index>(rows[0].size());
    x.values.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) x.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    x.labels = labels;
    x.sample_weights.assign(rows.size(), 1.0);
    for (Eigen::Index j = 0; j < d; ++j) x.column_names.push_back("x" + std::to_string(j));
    return x;
}

/// n x d standard-normal features; label from a noisy linear score so both classes appear.
inline DesignMatrix random_design(Rng& rng, std::size_t n, std::size_t d) {
    std::vector<std::vector<double>> rows(n, std::vector<double>(d));
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        double score = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            rows[i][j] = rng.normal();
            score += (j % 2 ? -0.7 : 1.0) * rows[i][j];
        }
        labels[i] = score + rng.normal() > 0.0 ? 1 : 0;
    }
    labels[0] = 0;
    labels[1] = 1;
    return design(rows, labels);
}

/// Small mixed-kind schema used by cohort and preprocessing tests.
inline FeatureSchema toy_schema() {
    return FeatureSchema(
        {
            {"fracture_date", FeatureKind::Date, {}},
            {"revision_date", FeatureKind::Date, {}},
            {"age", FeatureKind::Continuous, {}},
            {"smoker", FeatureKind::Boolean, {}},
            {"colour", FeatureKind::Categorical, {"red", "green", "blue"}},
            {"comorbidities", FeatureKind::MultiCategorical, {"diabetes", "lung_disease", "renal"}},
            {"grade", FeatureKind::Ordinal, {"low", "mid", "high"}},
            {"surgeries", FeatureKind::Interval, {}},
            {"failed", FeatureKind::Boolean, {}},
        },
        "failed", "fracture_date");
}

}  // namespace testing
