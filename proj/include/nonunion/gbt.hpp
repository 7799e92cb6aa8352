#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nonunion/parallel.hpp"
#include "nonunion/preprocess.hpp"

namespace nonunion {

struct GbtConfig {
    int n_rounds = 100;
    double eta = 0.3;
    int max_depth = 5;
    double lambda = 1.0;
    double min_child_weight = 1.0;
    /// Weight positives by #negatives / #positives of the matrix being fitted.
    bool class_weighting = true;
    /// Column-parallel split search (results identical to serial).
    Execution split_search = Execution::Serial;
};

struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    bool missing_goes_left = true;
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
};

/// Binary regression tree stored in preorder; `x < threshold` routes left.
struct RegressionTree {
    std::vector<TreeNode> nodes;

    template <typename Row>
    std::size_t leaf_index(const Row& row) const {
        std::size_t i = 0;
        while (!nodes[i].is_leaf()) {
            const auto& nd = nodes[i];
            const double v = row[nd.feature];
            const bool left = std::isnan(v) ? nd.missing_goes_left : v < nd.threshold;
            i = static_cast<std::size_t>(left ? nd.left : nd.right);
        }
        return i;
    }
    template <typename Row>
    double predict(const Row& row) const {
        return nodes[leaf_index(row)].value;
    }
    int depth() const;
};

struct GbtModel {
    static constexpr int kVersion = 1;

    std::vector<RegressionTree> trees;
    double eta = 0.3;
    double base_score = 0.0;
    double lambda = 1.0;
    int n_rounds = 0;
    int max_depth = 5;
    double min_child_weight = 1.0;
    std::size_t n_features = 0;
    std::vector<std::string> column_names;

    nlohmann::json to_json() const;
    static GbtModel from_json(const nlohmann::json& doc);
};

/// 1/2 [G_L^2/(H_L+l) + G_R^2/(H_R+l) - (G_L+G_R)^2/(H_L+H_R+l)]
double split_gain(double g_left, double h_left, double g_right, double h_right, double lambda);

struct SplitCandidate {
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
};

/// Exact greedy search over `rows`: every boundary between consecutive distinct
/// values of every column. Returns nullopt when no split has positive gain with
/// both children meeting min_child_weight. Ties keep the lowest column, then the
/// lowest threshold.
std::optional<SplitCandidate> find_best_split(const Matrix& x, std::span<const std::size_t> rows,
                                              std::span<const double> grad, std::span<const double> hess,
                                              double lambda, double min_child_weight);

GbtModel train_gbt(const DesignMatrix& x, const GbtConfig& config = {});

/// base_score + eta * sum of the first `tree_count` trees (all when nullopt).
std::vector<double> predict_margin_gbt(const GbtModel& model, const Matrix& x, std::optional<std::size_t> tree_count = {},
                                       Execution exec = Execution::Serial);
std::vector<double> predict_proba_gbt(const GbtModel& model, const Matrix& x, Execution exec = Execution::Serial);

}  // namespace nonunion
