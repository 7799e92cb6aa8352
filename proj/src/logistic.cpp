#include "nonunion/logistic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nonunion/error.hpp"

namespace nonunion {

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

LossAndGradient logistic_objective(const Matrix& x, std::span<const int> labels, std::span<const double> sample_weights,
                                   const Vector& weights, double intercept, double lambda) {
    const auto n = x.rows();
    const auto d = x.cols();
    const Vector z = (x * weights).array() + intercept;
    LossAndGradient out;
    out.gradient = Vector::Zero(d + 1);
    Vector residual(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = sample_weights[static_cast<std::size_t>(i)];
        const double y = labels[static_cast<std::size_t>(i)];
        out.loss += s * (softplus(z[i]) - y * z[i]);
        residual[i] = s * (logistic(z[i]) - y);
    }
    out.loss += 0.5 * lambda * weights.squaredNorm();
    out.gradient.head(d) = x.transpose() * residual + lambda * weights;
    out.gradient[d] = residual.sum();
    return out;
}

LinearModel train_logistic(const DesignMatrix& x, const LogisticConfig& config) {
    const auto n = static_cast<Eigen::Index>(x.rows());
    const auto d = static_cast<Eigen::Index>(x.cols());
    if (n < 2) fail(ErrorKind::SingleClass, "logistic regression needs at least 2 rows");
    if (x.labels.size() != x.rows()) fail(ErrorKind::LengthMismatch, "labels do not match rows");
    std::size_t pos = 0;
    for (int y : x.labels) pos += y ? 1 : 0;
    if (pos == 0 || pos == x.rows()) fail(ErrorKind::SingleClass, "logistic regression needs both classes");
    if (!(config.lambda >= 0.0) || !(config.tol > 0.0) || config.max_iter < 1)
        fail(ErrorKind::InvalidConfig, "invalid logistic regression config");
    const auto weights_s = effective_sample_weights(x, config.class_weighting);
    for (double w : weights_s)
        if (!(w > 0.0) || !std::isfinite(w)) fail(ErrorKind::InvalidConfig, "sample weights must be positive");

    Matrix augmented(n, d + 1);
    augmented.leftCols(d) = x.values;
    augmented.col(d).setOnes();
    Vector penalty = Vector::Constant(d + 1, config.lambda);
    penalty[d] = 0.0;

    Vector w = Vector::Zero(d);
    double b = 0.0;
    auto current = logistic_objective(x.values, x.labels, weights_s, w, b, config.lambda);

    LinearModel model;
    model.lambda = config.lambda;
    model.column_names = x.column_names;
    int iter = 0;
    double gnorm = current.gradient.norm();
    while (gnorm > config.tol && iter < config.max_iter) {
        const Vector z = (x.values * w).array() + b;
        Vector curvature(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double p = logistic(z[i]);
            curvature[i] = weights_s[static_cast<std::size_t>(i)] * p * (1.0 - p);
        }
        Matrix hessian = augmented.transpose() * curvature.asDiagonal() * augmented;
        hessian.diagonal() += penalty;

        Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
        Vector step = ldlt.solve(current.gradient);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            // Unpenalized and separable: regularize the solve only.
            Eigen::MatrixXd jittered = hessian;
            jittered.diagonal().array() += 1e-8 * (1.0 + hessian.diagonal().cwiseAbs().maxCoeff());
            step = jittered.ldlt().solve(current.gradient);
        }

        bool accepted = false;
        double t = 1.0;
        for (int halving = 0; halving < 50; ++halving, t *= 0.5) {
            Vector w_new = w - t * step.head(d);
            double b_new = b - t * step[d];
            auto trial = logistic_objective(x.values, x.labels, weights_s, w_new, b_new, config.lambda);
            if (!std::isfinite(trial.loss)) continue;
            if (trial.loss <= current.loss) {
                w = std::move(w_new);
                b = b_new;
                current = std::move(trial);
                accepted = true;
                break;
            }
        }
        ++iter;
        if (!std::isfinite(current.loss)) fail(ErrorKind::Diverged, "non-finite logistic loss");
        gnorm = current.gradient.norm();
        if (!accepted) break;
    }

    if (!std::isfinite(current.loss) || !w.allFinite()) fail(ErrorKind::Diverged, "non-finite logistic loss");
    model.weights = std::move(w);
    model.intercept = b;
    model.iterations = iter;
    model.gradient_norm = gnorm;
    model.converged = gnorm <= config.tol;
    return model;
}

std::vector<double> predict_proba_linear(const LinearModel& model, const Matrix& x) {
    if (x.cols() != model.weights.size())
        fail(ErrorKind::DimensionMismatch, "expected " + std::to_string(model.weights.size()) + " columns, got " +
                                               std::to_string(x.cols()));
    const Vector z = (x * model.weights).array() + model.intercept;
    std::vector<double> p(static_cast<std::size_t>(z.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        // Keep outputs strictly inside (0, 1).
        p[static_cast<std::size_t>(i)] = std::clamp(logistic(z[i]), std::numeric_limits<double>::min(),
                                                    1.0 - std::numeric_limits<double>::epsilon() / 2);
    }
    return p;
}

nlohmann::json LinearModel::to_json() const {
    return {{"format", "nonunion.logistic"},
            {"version", kVersion},
            {"weights", std::vector<double>(weights.data(), weights.data() + weights.size())},
            {"intercept", intercept},
            {"lambda", lambda},
            {"iterations", iterations},
            {"gradient_norm", gradient_norm},
            {"converged", converged},
            {"columns", column_names}};
}

LinearModel LinearModel::from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format") != "nonunion.logistic" || doc.at("version").get<int>() != kVersion)
            fail(ErrorKind::InvalidArtifact, "not a version-1 logistic model");
        LinearModel m;
        auto w = doc.at("weights").get<std::vector<double>>();
        m.weights = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
        m.intercept = doc.at("intercept").get<double>();
        m.lambda = doc.at("lambda").get<double>();
        m.iterations = doc.value("iterations", 0);
        m.gradient_norm = doc.value("gradient_norm", 0.0);
        m.converged = doc.value("converged", true);
        m.column_names = doc.value("columns", std::vector<std::string>{});
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidArtifact, std::string("logistic model: ") + e.what());
    }
}

}  // namespace nonunion
