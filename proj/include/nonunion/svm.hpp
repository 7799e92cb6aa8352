#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nonunion/parallel.hpp"
#include "nonunion/preprocess.hpp"

namespace nonunion {

enum class KernelKind { Linear, Rbf };

struct Kernel {
    KernelKind kind = KernelKind::Rbf;
    double gamma = 1.0;

    template <typename A, typename B>
    double operator()(const A& a, const B& b) const {
        if (kind == KernelKind::Linear) return a.dot(b);
        return std::exp(-gamma * (a - b).squaredNorm());
    }
};

/// 1 / (d * Var(X)) with Var the population variance over all entries.
double gamma_scale(const Matrix& x);

struct SvmConfig {
    double C = 1.0;
    KernelKind kernel = KernelKind::Rbf;
    /// nullopt resolves to gamma_scale() of the training matrix.
    std::optional<double> gamma;
    double tol = 1e-3;
    /// Upper bound on SMO pair updates; 0 means max(10^7, 100 n).
    std::int64_t max_iter = 0;
    /// Per-sample box constraints C * w_i, w_i the (optionally class-weighted) sample weight.
    bool class_weighting = false;
    /// Fit Platt parameters on out-of-fold decision values.
    bool probability = true;
    int platt_folds = 3;
    std::uint64_t seed = 0;
};

struct PlattParams {
    double a = 0.0;
    double b = 0.0;
};

struct SvmModel {
    static constexpr int kVersion = 1;

    Matrix support_vectors;
    /// alpha_i * y_i with y in {-1, +1}.
    std::vector<double> dual_coef;
    /// Box bound C * w_i of each retained vector.
    std::vector<double> box;
    double bias = 0.0;
    Kernel kernel;
    double C = 1.0;
    PlattParams platt;
    bool converged = false;
    std::int64_t iterations = 0;
    /// max_{I_up} -y G - min_{I_low} -y G at termination.
    double kkt_gap = 0.0;
    std::vector<std::string> column_names;

    nlohmann::json to_json() const;
    static SvmModel from_json(const nlohmann::json& doc);
};

/// Soft-margin dual solved by SMO with maximal-violating-pair selection
/// (lowest index on ties). Platt parameters are fitted when config.probability.
SvmModel train_svm(const DesignMatrix& x, const SvmConfig& config = {});

std::vector<double> decision_function(const SvmModel& model, const Matrix& x, Execution exec = Execution::Parallel);

/// Minimizes the smoothed-target cross-entropy of 1 / (1 + exp(A f + B)).
PlattParams fit_platt(std::span<const double> decision_values, std::span<const int> labels);
double platt_probability(const PlattParams& params, double decision_value);

std::vector<double> predict_proba_svm(const SvmModel& model, const Matrix& x, Execution exec = Execution::Parallel);

}  // namespace nonunion
