#include "nonunion/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nonunion/error.hpp"
#include "nonunion/random.hpp"

namespace nonunion {

namespace {

constexpr double kTau = 1e-12;
constexpr std::size_t kFullGramLimit = 3000;

/// Q_ij = y_i y_j K(x_i, x_j), either fully precomputed or evaluated on demand.
class KernelMatrix {
    Matrix::ConstRowXpr row(std::size_t i) const { return x_.row(static_cast<Eigen::Index>(i)); }

public:
    KernelMatrix(const Matrix& x, const std::vector<double>& y, Kernel kernel) : x_(x), y_(y), kernel_(kernel) {
        const auto n = static_cast<std::size_t>(x.rows());
        diag_.resize(n);
        for (std::size_t i = 0; i < n; ++i) diag_[i] = kernel_(row(i), row(i));
        if (n <= kFullGramLimit) {
            full_.resize(n * n);
            for_each_index(n, Execution::Parallel, [&](std::size_t i) {
                for (std::size_t j = 0; j < n; ++j) full_[i * n + j] = y_[i] * y_[j] * kernel_(row(i), row(j));
            });
        } else {
            scratch_[0].resize(n);
            scratch_[1].resize(n);
        }
    }

    double diag(std::size_t i) const { return diag_[i]; }

    /// Column i of Q. `slot` selects which scratch buffer backs an on-demand column.
    const double* column(std::size_t i, int slot) {
        const std::size_t n = diag_.size();
        if (!full_.empty()) return full_.data() + i * n;
        auto& buf = scratch_[slot];
        for (std::size_t j = 0; j < n; ++j) buf[j] = y_[i] * y_[j] * kernel_(row(i), row(j));
        return buf.data();
    }

private:
    const Matrix& x_;
    const std::vector<double>& y_;
    Kernel kernel_;
    std::vector<double> diag_;
    std::vector<double> full_;
    std::vector<double> scratch_[2];
};

struct SmoResult {
    std::vector<double> alpha;
    double rho = 0.0;
    std::int64_t iterations = 0;
    double gap = 0.0;
    bool converged = false;
};

bool in_up(double y, double a, double c) { return (y > 0 && a < c) || (y < 0 && a > 0); }
bool in_low(double y, double a, double c) { return (y > 0 && a > 0) || (y < 0 && a < c); }

SmoResult solve_smo(const Matrix& x, const std::vector<double>& y, const std::vector<double>& upper, Kernel kernel,
                    double tol, std::int64_t max_iter) {
    const std::size_t n = y.size();
    KernelMatrix q(x, y, kernel);
    SmoResult r;
    r.alpha.assign(n, 0.0);
    std::vector<double> grad(n, -1.0);
    auto& alpha = r.alpha;

    while (true) {
        // Maximal violating pair; strict comparisons keep the lowest index on ties.
        double gmax = -std::numeric_limits<double>::infinity();
        double gmin = std::numeric_limits<double>::infinity();
        std::size_t i = n, j = n;
        for (std::size_t t = 0; t < n; ++t) {
            const double v = -y[t] * grad[t];
            if (in_up(y[t], alpha[t], upper[t]) && v > gmax) gmax = v, i = t;
            if (in_low(y[t], alpha[t], upper[t]) && v < gmin) gmin = v, j = t;
        }
        r.gap = (i == n || j == n) ? 0.0 : gmax - gmin;
        if (i == n || j == n || gmax - gmin < tol) {
            r.converged = true;
            break;
        }
        if (r.iterations >= max_iter) break;
        ++r.iterations;

        const double* qi = q.column(i, 0);
        const double* qj = q.column(j, 1);
        const double ci = upper[i], cj = upper[j];
        const double old_ai = alpha[i], old_aj = alpha[j];
        double& ai = alpha[i];
        double& aj = alpha[j];

        if (y[i] != y[j]) {
            double quad = q.diag(i) + q.diag(j) + 2.0 * qi[j];
            if (quad <= 0) quad = kTau;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = ai - aj;
            ai += delta;
            aj += delta;
            if (diff > 0) {
                if (aj < 0) aj = 0, ai = diff;
            } else {
                if (ai < 0) ai = 0, aj = -diff;
            }
            if (diff > ci - cj) {
                if (ai > ci) ai = ci, aj = ci - diff;
            } else {
                if (aj > cj) aj = cj, ai = cj + diff;
            }
        } else {
            double quad = q.diag(i) + q.diag(j) - 2.0 * qi[j];
            if (quad <= 0) quad = kTau;
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = ai + aj;
            ai -= delta;
            aj += delta;
            if (sum > ci) {
                if (ai > ci) ai = ci, aj = sum - ci;
            } else {
                if (aj < 0) aj = 0, ai = sum;
            }
            if (sum > cj) {
                if (aj > cj) aj = cj, ai = sum - cj;
            } else {
                if (ai < 0) ai = 0, aj = sum;
            }
        }

        const double dai = ai - old_ai, daj = aj - old_aj;
        for (std::size_t t = 0; t < n; ++t) grad[t] += qi[t] * dai + qj[t] * daj;
    }

    // Offset: average over free vectors, else midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * grad[t];
        if (alpha[t] >= upper[t]) {
            if (y[t] < 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (alpha[t] <= 0) {
            if (y[t] > 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    r.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
    return r;
}

void check_classes(std::span<const int> labels) {
    std::size_t pos = 0;
    for (int v : labels) pos += v ? 1 : 0;
    if (pos == 0 || pos == labels.size()) fail(ErrorKind::SingleClass, "both classes are required");
}

SvmModel train_core(const Matrix& x, std::span<const int> labels, std::span<const double> sample_weights,
                    const SvmConfig& config, Kernel kernel) {
    const std::size_t n = labels.size();
    std::vector<double> y(n), upper(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = labels[i] ? 1.0 : -1.0;
        upper[i] = config.C * sample_weights[i];
    }
    const std::int64_t max_iter =
        config.max_iter > 0 ? config.max_iter : std::max<std::int64_t>(10'000'000, 100 * static_cast<std::int64_t>(n));
    auto smo = solve_smo(x, y, upper, kernel, config.tol, max_iter);

    SvmModel m;
    m.kernel = kernel;
    m.C = config.C;
    m.bias = -smo.rho;
    m.converged = smo.converged;
    m.iterations = smo.iterations;
    m.kkt_gap = smo.gap;
    std::vector<std::size_t> sv;
    for (std::size_t i = 0; i < n; ++i)
        if (smo.alpha[i] > 0.0) sv.push_back(i);
    m.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
    for (std::size_t k = 0; k < sv.size(); ++k) {
        m.support_vectors.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(sv[k]));
        m.dual_coef.push_back(smo.alpha[sv[k]] * y[sv[k]]);
        m.box.push_back(upper[sv[k]]);
    }
    return m;
}

}  // namespace

double gamma_scale(const Matrix& x) {
    const double count = static_cast<double>(x.size());
    if (count == 0) fail(ErrorKind::DegenerateKernel, "empty matrix");
    const double mean = x.sum() / count;
    const double var = (x.array() - mean).square().sum() / count;
    const double g = 1.0 / (static_cast<double>(x.cols()) * var);
    if (!std::isfinite(g) || !(g > 0.0)) fail(ErrorKind::DegenerateKernel, "gamma=scale is not finite (zero variance)");
    return g;
}

SvmModel train_svm(const DesignMatrix& x, const SvmConfig& config) {
    if (x.labels.size() != x.rows()) fail(ErrorKind::LengthMismatch, "labels do not match rows");
    check_classes(x.labels);
    if (!(config.C > 0.0) || !(config.tol > 0.0)) fail(ErrorKind::InvalidConfig, "C and tol must be positive");
    const auto weights = effective_sample_weights(x, config.class_weighting);
    for (double w : weights)
        if (!(w > 0.0) || !std::isfinite(w)) fail(ErrorKind::InvalidConfig, "sample weights must be positive");

    Kernel kernel{config.kernel, 1.0};
    if (config.kernel == KernelKind::Rbf) {
        kernel.gamma = config.gamma ? *config.gamma : gamma_scale(x.values);
        if (!std::isfinite(kernel.gamma) || !(kernel.gamma > 0.0))
            fail(ErrorKind::DegenerateKernel, "gamma must be positive and finite");
    }

    SvmModel model = train_core(x.values, x.labels, weights, config, kernel);
    model.column_names = x.column_names;
    if (!config.probability) return model;

    // Out-of-fold decision values from a stratified, seeded split.
    const std::size_t n = x.rows();
    const int folds = std::max(2, config.platt_folds);
    std::vector<int> fold_of(n);
    {
        Rng rng(config.seed);
        std::vector<std::size_t> by_class[2];
        for (std::size_t i = 0; i < n; ++i) by_class[x.labels[i] ? 1 : 0].push_back(i);
        std::size_t k = 0;
        for (auto& members : by_class) {
            rng.shuffle(std::span(members));
            for (auto i : members) fold_of[i] = static_cast<int>(k++ % static_cast<std::size_t>(folds));
        }
    }
    std::vector<double> oof(n, 0.0);
    bool usable = true;
    SvmConfig inner = config;
    inner.probability = false;
    for (int f = 0; f < folds && usable; ++f) {
        std::vector<std::size_t> fit_rows, held_rows;
        for (std::size_t i = 0; i < n; ++i) (fold_of[i] == f ? held_rows : fit_rows).push_back(i);
        DesignMatrix part = x.subset(fit_rows);
        std::size_t pos = 0;
        for (int v : part.labels) pos += v ? 1 : 0;
        if (held_rows.empty() || pos == 0 || pos == part.labels.size()) {
            usable = false;
            break;
        }
        std::vector<double> part_weights;
        for (auto i : fit_rows) part_weights.push_back(weights[i]);
        SvmModel fold_model = train_core(part.values, part.labels, part_weights, inner, kernel);
        Matrix held(static_cast<Eigen::Index>(held_rows.size()), x.values.cols());
        for (std::size_t k = 0; k < held_rows.size(); ++k)
            held.row(static_cast<Eigen::Index>(k)) = x.values.row(static_cast<Eigen::Index>(held_rows[k]));
        auto dec = decision_function(fold_model, held, Execution::Serial);
        for (std::size_t k = 0; k < held_rows.size(); ++k) oof[held_rows[k]] = dec[k];
    }
    if (!usable) oof = decision_function(model, x.values, Execution::Serial);
    model.platt = fit_platt(oof, x.labels);
    return model;
}

std::vector<double> decision_function(const SvmModel& model, const Matrix& x, Execution exec) {
    if (x.cols() != model.support_vectors.cols())
        fail(ErrorKind::DimensionMismatch, "expected " + std::to_string(model.support_vectors.cols()) + " columns, got " +
                                               std::to_string(x.cols()));
    std::vector<double> out(static_cast<std::size_t>(x.rows()));
    for_each_index(out.size(), exec, [&](std::size_t r) {
        const auto row = x.row(static_cast<Eigen::Index>(r));
        double f = model.bias;
        for (std::size_t k = 0; k < model.dual_coef.size(); ++k)
            f += model.dual_coef[k] * model.kernel(model.support_vectors.row(static_cast<Eigen::Index>(k)), row);
        out[r] = f;
    });
    return out;
}

namespace {

/// Cross-entropy of the smoothed targets under 1 / (1 + exp(A f + B)), computed stably.
double platt_objective(std::span<const double> f, std::span<const double> t, double a, double b) {
    double value = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double z = f[i] * a + b;
        value += z >= 0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return value;
}

}  // namespace

PlattParams fit_platt(std::span<const double> decision_values, std::span<const int> labels) {
    if (decision_values.size() != labels.size()) fail(ErrorKind::LengthMismatch, "decision values and labels differ");
    check_classes(labels);
    double n_pos = 0, n_neg = 0;
    for (int v : labels) (v ? n_pos : n_neg) += 1.0;
    const double hi = (n_pos + 1.0) / (n_pos + 2.0);
    const double lo = 1.0 / (n_neg + 2.0);
    std::vector<double> t(labels.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = labels[i] ? hi : lo;

    constexpr int kMaxIter = 100;
    constexpr double kMinStep = 1e-10, kSigma = 1e-12, kEps = 1e-5;
    double a = 0.0;
    double b = std::log((n_neg + 1.0) / (n_pos + 1.0));
    double fval = platt_objective(decision_values, t, a, b);
    for (int iter = 0; iter < kMaxIter; ++iter) {
        double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double f = decision_values[i];
            const double z = f * a + b;
            double p, q;
            if (z >= 0) {
                p = std::exp(-z) / (1.0 + std::exp(-z));
                q = 1.0 / (1.0 + std::exp(-z));
            } else {
                p = 1.0 / (1.0 + std::exp(z));
                q = std::exp(z) / (1.0 + std::exp(z));
            }
            const double d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            const double d1 = t[i] - p;
            g1 += f * d1;
            g2 += d1;
        }
        if (std::abs(g1) < kEps && std::abs(g2) < kEps) break;
        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * da + g2 * db;
        double step = 1.0;
        while (step >= kMinStep) {
            const double na = a + step * da, nb = b + step * db;
            const double nf = platt_objective(decision_values, t, na, nb);
            if (nf < fval + 1e-4 * step * gd) {
                a = na, b = nb, fval = nf;
                break;
            }
            step /= 2.0;
        }
        if (step < kMinStep) break;
    }
    return {a, b};
}

double platt_probability(const PlattParams& params, double decision_value) {
    const double z = decision_value * params.a + params.b;
    return z >= 0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
}

std::vector<double> predict_proba_svm(const SvmModel& model, const Matrix& x, Execution exec) {
    auto dec = decision_function(model, x, exec);
    for (auto& v : dec)
        v = std::clamp(platt_probability(model.platt, v), std::numeric_limits<double>::min(),
                       1.0 - std::numeric_limits<double>::epsilon() / 2);
    return dec;
}

nlohmann::json SvmModel::to_json() const {
    nlohmann::json sv = nlohmann::json::array();
    for (Eigen::Index r = 0; r < support_vectors.rows(); ++r) {
        std::vector<double> row(support_vectors.cols());
        for (Eigen::Index c = 0; c < support_vectors.cols(); ++c) row[static_cast<std::size_t>(c)] = support_vectors(r, c);
        sv.push_back(std::move(row));
    }
    return {{"format", "nonunion.svm"},
            {"version", kVersion},
            {"kernel", kernel.kind == KernelKind::Rbf ? "rbf" : "linear"},
            {"gamma", kernel.gamma},
            {"C", C},
            {"bias", bias},
            {"dual_coef", dual_coef},
            {"box", box},
            {"support_vectors", sv},
            {"n_features", support_vectors.cols()},
            {"platt", {{"A", platt.a}, {"B", platt.b}}},
            {"converged", converged},
            {"iterations", iterations},
            {"kkt_gap", kkt_gap},
            {"columns", column_names}};
}

SvmModel SvmModel::from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format") != "nonunion.svm" || doc.at("version").get<int>() != kVersion)
            fail(ErrorKind::InvalidArtifact, "not a version-1 SVM model");
        SvmModel m;
        m.kernel.kind = doc.at("kernel") == "rbf" ? KernelKind::Rbf : KernelKind::Linear;
        m.kernel.gamma = doc.at("gamma").get<double>();
        m.C = doc.at("C").get<double>();
        m.bias = doc.at("bias").get<double>();
        m.dual_coef = doc.at("dual_coef").get<std::vector<double>>();
        m.box = doc.value("box", std::vector<double>{});
        const auto& sv = doc.at("support_vectors");
        const auto cols = doc.at("n_features").get<Eigen::Index>();
        m.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), cols);
        for (std::size_t r = 0; r < sv.size(); ++r) {
            auto row = sv[r].get<std::vector<double>>();
            if (static_cast<Eigen::Index>(row.size()) != cols) fail(ErrorKind::InvalidArtifact, "ragged support vectors");
            for (Eigen::Index c = 0; c < cols; ++c) m.support_vectors(static_cast<Eigen::Index>(r), c) = row[static_cast<std::size_t>(c)];
        }
        if (m.dual_coef.size() != sv.size()) fail(ErrorKind::InvalidArtifact, "coefficient count mismatch");
        m.platt = {doc.at("platt").at("A").get<double>(), doc.at("platt").at("B").get<double>()};
        m.converged = doc.value("converged", true);
        m.iterations = doc.value("iterations", std::int64_t{0});
        m.kkt_gap = doc.value("kkt_gap", 0.0);
        m.column_names = doc.value("columns", std::vector<std::string>{});
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidArtifact, std::string("svm model: ") + e.what());
    }
}

}  // namespace nonunion
