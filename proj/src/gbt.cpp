#include "nonunion/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "nonunion/error.hpp"

namespace nonunion {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double leaf_value(double g, double h, double lambda) {
    const double denom = h + lambda;
    return denom > 0.0 ? -g / denom : 0.0;
}

double split_threshold(double below, double above) {
    double mid = below + (above - below) / 2.0;
    if (!(mid > below)) mid = above;
    return mid;
}

using RowList = std::vector<std::uint32_t>;

/// Best split of one column over rows pre-sorted by that column.
std::optional<SplitCandidate> scan_column(const Matrix& x, std::size_t feature, const RowList& sorted,
                                          std::span<const double> grad, std::span<const double> hess, double g_total,
                                          double h_total, double lambda, double min_child_weight) {
    std::optional<SplitCandidate> best;
    double g_left = 0.0, h_left = 0.0;
    const auto col = static_cast<Eigen::Index>(feature);
    for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
        const auto r = sorted[k];
        g_left += grad[r];
        h_left += hess[r];
        const double here = x(r, col);
        const double next = x(sorted[k + 1], col);
        if (!(here < next)) continue;
        const double g_right = g_total - g_left;
        const double h_right = h_total - h_left;
        if (h_left < min_child_weight || h_right < min_child_weight) continue;
        const double gain = split_gain(g_left, h_left, g_right, h_right, lambda);
        if (gain > 0.0 && (!best || gain > best->gain)) best = SplitCandidate{feature, split_threshold(here, next), gain};
    }
    return best;
}

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, std::span<const double> grad, std::span<const double> hess, const GbtConfig& config)
        : x_(x), grad_(grad), hess_(hess), config_(config), goes_left_(static_cast<std::size_t>(x.rows()), 0) {}

    RegressionTree build(std::vector<RowList> sorted) {
        RegressionTree tree;
        grow(tree, std::move(sorted), 0);
        return tree;
    }

private:
    int grow(RegressionTree& tree, std::vector<RowList> sorted, int depth) {
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        const RowList& rows = sorted.front();
        double g = 0.0, h = 0.0;
        for (auto r : rows) g += grad_[r], h += hess_[r];

        std::optional<SplitCandidate> best;
        if (depth < config_.max_depth && rows.size() >= 2) {
            const std::size_t d = sorted.size();
            std::vector<std::optional<SplitCandidate>> per_column(d);
            const auto exec = rows.size() * d >= 20000 ? config_.split_search : Execution::Serial;
            for_each_index(d, exec, [&](std::size_t f) {
                per_column[f] = scan_column(x_, f, sorted[f], grad_, hess_, g, h, config_.lambda, config_.min_child_weight);
            });
            for (const auto& c : per_column)
                if (c && (!best || c->gain > best->gain)) best = c;
        }
        if (!best) {
            tree.nodes[static_cast<std::size_t>(id)].value = leaf_value(g, h, config_.lambda);
            return id;
        }

        const auto col = static_cast<Eigen::Index>(best->feature);
        double h_left = 0.0, h_right = 0.0;
        for (auto r : rows) {
            goes_left_[r] = x_(r, col) < best->threshold ? 1 : 0;
            (goes_left_[r] ? h_left : h_right) += hess_[r];
        }
        std::vector<RowList> left(sorted.size()), right(sorted.size());
        for (std::size_t f = 0; f < sorted.size(); ++f) {
            for (auto r : sorted[f]) (goes_left_[r] ? left[f] : right[f]).push_back(r);
            RowList().swap(sorted[f]);
        }
        {
            auto& node = tree.nodes[static_cast<std::size_t>(id)];
            node.feature = static_cast<int>(best->feature);
            node.threshold = best->threshold;
            node.missing_goes_left = h_left >= h_right;
        }
        const int l = grow(tree, std::move(left), depth + 1);
        const int r = grow(tree, std::move(right), depth + 1);
        tree.nodes[static_cast<std::size_t>(id)].left = l;
        tree.nodes[static_cast<std::size_t>(id)].right = r;
        return id;
    }

    const Matrix& x_;
    std::span<const double> grad_;
    std::span<const double> hess_;
    const GbtConfig& config_;
    std::vector<std::uint8_t> goes_left_;
};

void check_config(const GbtConfig& c) {
    if (c.n_rounds < 0 || c.max_depth < 0 || !(c.eta > 0.0) || !std::isfinite(c.eta) || !(c.lambda >= 0.0) ||
        !(c.min_child_weight >= 0.0))
        fail(ErrorKind::InvalidConfig, "invalid gradient-boosting config");
}

nlohmann::json node_to_json(const RegressionTree& tree, std::size_t i) {
    const auto& nd = tree.nodes[i];
    if (nd.is_leaf()) return {{"leaf", nd.value}};
    return {{"split", {{"feature", nd.feature}, {"threshold", nd.threshold}, {"missing_goes_left", nd.missing_goes_left}}},
            {"left", node_to_json(tree, static_cast<std::size_t>(nd.left))},
            {"right", node_to_json(tree, static_cast<std::size_t>(nd.right))}};
}

int node_from_json(RegressionTree& tree, const nlohmann::json& j, std::size_t n_features) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (j.contains("leaf")) {
        tree.nodes.back().value = j.at("leaf").get<double>();
        return id;
    }
    const auto& s = j.at("split");
    TreeNode nd;
    nd.feature = s.at("feature").get<int>();
    if (nd.feature < 0 || static_cast<std::size_t>(nd.feature) >= n_features)
        fail(ErrorKind::InvalidArtifact, "split feature out of range");
    nd.threshold = s.at("threshold").get<double>();
    nd.missing_goes_left = s.value("missing_goes_left", true);
    nd.left = node_from_json(tree, j.at("left"), n_features);
    nd.right = node_from_json(tree, j.at("right"), n_features);
    tree.nodes[static_cast<std::size_t>(id)] = nd;
    return id;
}

}  // namespace

int RegressionTree::depth() const {
    if (nodes.empty()) return 0;
    std::vector<int> depth_of(nodes.size(), 0);
    int max_depth = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        max_depth = std::max(max_depth, depth_of[i]);
        if (!nodes[i].is_leaf()) {
            depth_of[static_cast<std::size_t>(nodes[i].left)] = depth_of[i] + 1;
            depth_of[static_cast<std::size_t>(nodes[i].right)] = depth_of[i] + 1;
        }
    }
    return max_depth;
}

double split_gain(double g_left, double h_left, double g_right, double h_right, double lambda) {
    const double g = g_left + g_right, h = h_left + h_right;
    return 0.5 * (g_left * g_left / (h_left + lambda) + g_right * g_right / (h_right + lambda) - g * g / (h + lambda));
}

std::optional<SplitCandidate> find_best_split(const Matrix& x, std::span<const std::size_t> rows,
                                              std::span<const double> grad, std::span<const double> hess,
                                              double lambda, double min_child_weight) {
    double g = 0.0, h = 0.0;
    for (auto r : rows) g += grad[r], h += hess[r];
    std::optional<SplitCandidate> best;
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
        RowList sorted(rows.begin(), rows.end());
        std::stable_sort(sorted.begin(), sorted.end(), [&](auto a, auto b) { return x(a, f) < x(b, f); });
        auto c = scan_column(x, static_cast<std::size_t>(f), sorted, grad, hess, g, h, lambda, min_child_weight);
        if (c && (!best || c->gain > best->gain)) best = c;
    }
    return best;
}

GbtModel train_gbt(const DesignMatrix& x, const GbtConfig& config) {
    check_config(config);
    const std::size_t n = x.rows();
    if (x.labels.size() != n) fail(ErrorKind::LengthMismatch, "labels do not match rows");
    std::size_t pos = 0;
    for (int y : x.labels) pos += y ? 1 : 0;
    if (n == 0 || pos == 0 || pos == n) fail(ErrorKind::SingleClass, "gradient boosting needs both classes");
    if (!x.values.allFinite()) fail(ErrorKind::InvalidConfig, "design matrix has non-finite entries");

    const auto weights = effective_sample_weights(x, config.class_weighting);
    double wy = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) wy += weights[i] * x.labels[i], wsum += weights[i];
    const double base_rate = wy / wsum;

    GbtModel model;
    model.eta = config.eta;
    model.base_score = std::log(base_rate / (1.0 - base_rate));
    model.lambda = config.lambda;
    model.n_rounds = config.n_rounds;
    model.max_depth = config.max_depth;
    model.min_child_weight = config.min_child_weight;
    model.n_features = x.cols();
    model.column_names = x.column_names;

    // Column orderings are computed once; nodes partition them stably.
    std::vector<RowList> sorted(x.cols());
    for (std::size_t f = 0; f < x.cols(); ++f) {
        auto& order = sorted[f];
        order.resize(n);
        std::iota(order.begin(), order.end(), 0u);
        const auto col = static_cast<Eigen::Index>(f);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x.values(a, col) < x.values(b, col); });
    }
    if (sorted.empty()) sorted.emplace_back(RowList(n)), std::iota(sorted[0].begin(), sorted[0].end(), 0u);

    std::vector<double> margin(n, model.base_score), grad(n), hess(n);
    for (int round = 0; round < config.n_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(margin[i]);
            grad[i] = weights[i] * (p - x.labels[i]);
            hess[i] = weights[i] * p * (1.0 - p);
        }
        TreeBuilder builder(x.values, grad, hess, config);
        RegressionTree tree = builder.build(x.cols() > 0 ? sorted : std::vector<RowList>{sorted[0]});
        for (std::size_t i = 0; i < n; ++i) margin[i] += config.eta * tree.predict(x.values.row(static_cast<Eigen::Index>(i)));
        model.trees.push_back(std::move(tree));
    }
    return model;
}

std::vector<double> predict_margin_gbt(const GbtModel& model, const Matrix& x, std::optional<std::size_t> tree_count,
                                       Execution exec) {
    if (static_cast<std::size_t>(x.cols()) != model.n_features)
        fail(ErrorKind::DimensionMismatch, "expected " + std::to_string(model.n_features) + " columns, got " +
                                               std::to_string(x.cols()));
    const std::size_t trees = std::min(tree_count.value_or(model.trees.size()), model.trees.size());
    std::vector<double> out(static_cast<std::size_t>(x.rows()));
    for_each_index(out.size(), exec, [&](std::size_t r) {
        const auto row = x.row(static_cast<Eigen::Index>(r));
        double sum = 0.0;
        for (std::size_t t = 0; t < trees; ++t) sum += model.trees[t].predict(row);
        out[r] = model.base_score + model.eta * sum;
    });
    return out;
}

std::vector<double> predict_proba_gbt(const GbtModel& model, const Matrix& x, Execution exec) {
    auto m = predict_margin_gbt(model, x, std::nullopt, exec);
    for (auto& v : m) v = std::clamp(sigmoid(v), std::numeric_limits<double>::min(), 1.0 - std::numeric_limits<double>::epsilon() / 2);
    return m;
}

nlohmann::json GbtModel::to_json() const {
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& t : trees) ts.push_back(node_to_json(t, 0));
    return {{"format", "nonunion.gbt"},
            {"version", kVersion},
            {"base_score", base_score},
            {"eta", eta},
            {"lambda", lambda},
            {"n_rounds", n_rounds},
            {"max_depth", max_depth},
            {"min_child_weight", min_child_weight},
            {"n_features", n_features},
            {"columns", column_names},
            {"trees", ts}};
}

GbtModel GbtModel::from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format") != "nonunion.gbt" || doc.at("version").get<int>() != kVersion)
            fail(ErrorKind::InvalidArtifact, "not a version-1 boosted-tree model");
        GbtModel m;
        m.base_score = doc.at("base_score").get<double>();
        m.eta = doc.at("eta").get<double>();
        m.lambda = doc.at("lambda").get<double>();
        m.n_rounds = doc.at("n_rounds").get<int>();
        m.max_depth = doc.value("max_depth", 5);
        m.min_child_weight = doc.value("min_child_weight", 1.0);
        m.n_features = doc.at("n_features").get<std::size_t>();
        m.column_names = doc.value("columns", std::vector<std::string>{});
        for (const auto& t : doc.at("trees")) {
            RegressionTree tree;
            node_from_json(tree, t, m.n_features);
            m.trees.push_back(std::move(tree));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidArtifact, std::string("boosted-tree model: ") + e.what());
    }
}

}  // namespace nonunion
