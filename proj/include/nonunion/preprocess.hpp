#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nonunion/cohort.hpp"

namespace nonunion {

/// Row-major so that per-sample access (kernels, tree routing) is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct DesignMatrix {
    Matrix values;
    std::vector<int> labels;
    std::vector<std::string> column_names;
    std::vector<double> sample_weights;
    /// Category cells outside the fit-time vocabulary (encoded as an all-zero block).
    std::size_t unseen_categories = 0;

    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
    DesignMatrix subset(std::span<const std::size_t> indices) const;
};

enum class Encoding { Boolean, OneHot, MultiHot, Scaled };

/// How one schema feature maps to encoded columns.
struct ColumnPlan {
    std::string feature;
    FeatureKind kind = FeatureKind::Continuous;
    Encoding encoding = Encoding::Scaled;
    std::size_t first_column = 0;
    std::vector<std::string> vocabulary;

    // Scaled columns: raw-scale mean (also the imputation value) and population sd.
    double mean = 0.0;
    double sd = 0.0;
    bool constant = false;

    /// Boolean mode as 0/1; one-hot mode index; unused otherwise.
    double impute_value = 0.0;
    std::size_t impute_category = 0;
    /// Multi-hot: per-category modal indicator.
    std::vector<int> impute_flags;

    std::size_t width() const;
};

/// Encoding, imputation and scaling parameters learned from a training set.
/// Immutable once fitted.
class FittedTransformer {
public:
    static constexpr int kVersion = 1;

    const FeatureSchema& schema() const { return schema_; }
    const std::vector<ColumnPlan>& plans() const { return plans_; }
    const std::vector<std::string>& column_names() const { return column_names_; }
    std::size_t width() const { return column_names_.size(); }

    DesignMatrix transform(const Dataset& data) const;

    nlohmann::json to_json() const;
    static FittedTransformer from_json(const nlohmann::json& doc);

    friend FittedTransformer fit_transformer(const Dataset& train);

private:
    FeatureSchema schema_;
    std::vector<ColumnPlan> plans_;
    std::vector<std::string> column_names_;
};

FittedTransformer fit_transformer(const Dataset& train);
DesignMatrix transform(const FittedTransformer& transformer, const Dataset& data);

/// Calendar-day offset of `event` from the record's fracture date.
std::int64_t date_offset_days(const Date& event, const Date& fracture);

/// (#negatives / #positives) for positives, 1 for negatives.
std::vector<double> compute_class_weights(std::span<const int> labels);

/// Sample weights used for fitting: DesignMatrix weights, multiplied by the class
/// weights of `x.labels` when `class_weighting` is set.
std::vector<double> effective_sample_weights(const DesignMatrix& x, bool class_weighting);

}  // namespace nonunion
