#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nonunion/preprocess.hpp"

namespace nonunion {

struct LogisticConfig {
    double lambda = 1.0;
    double tol = 1e-8;
    int max_iter = 200;
    /// Weight positives by #negatives / #positives (on top of DesignMatrix sample weights).
    bool class_weighting = false;
};

struct LinearModel {
    static constexpr int kVersion = 1;

    Vector weights;
    double intercept = 0.0;
    double lambda = 1.0;
    int iterations = 0;
    double gradient_norm = 0.0;
    bool converged = false;
    std::vector<std::string> column_names;

    nlohmann::json to_json() const;
    static LinearModel from_json(const nlohmann::json& doc);
};

/// Penalized weighted negative log-likelihood and its gradient with respect to
/// (weights, intercept); the intercept is the last gradient entry.
struct LossAndGradient {
    double loss = 0.0;
    Vector gradient;
};

LossAndGradient logistic_objective(const Matrix& x, std::span<const int> labels, std::span<const double> sample_weights,
                                   const Vector& weights, double intercept, double lambda);

/// Newton/IRLS with step halving from zero initialization. Throws Diverged on a
/// non-finite loss; hitting max_iter returns the best iterate with converged = false.
LinearModel train_logistic(const DesignMatrix& x, const LogisticConfig& config = {});

std::vector<double> predict_proba_linear(const LinearModel& model, const Matrix& x);

}  // namespace nonunion
