#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "nonunion/error.hpp"
#include "nonunion/gbt.hpp"
#include "support.hpp"

using namespace nonunion;
using testing::design;
using testing::random_design;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double train_loss(const GbtModel& m, const DesignMatrix& x, std::size_t trees) {
    const auto margin = predict_margin_gbt(m, x.values, trees);
    double loss = 0.0;
    for (std::size_t i = 0; i < margin.size(); ++i) {
        const double p = sigmoid(margin[i]);
        loss -= x.labels[i] ? std::log(p) : std::log(1.0 - p);
    }
    return loss;
}

// Enumerates every (column, left set) produced by a threshold between two
// distinct sorted values and scores it with the gain formula.
std::optional<SplitCandidate> brute_force_split(const Matrix& x, const std::vector<double>& g, const std::vector<double>& h,
                                                double lambda, double mcw) {
    std::optional<SplitCandidate> best;
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
        std::set<double> values;
        for (Eigen::Index i = 0; i < x.rows(); ++i) values.insert(x(i, f));
        std::vector<double> v(values.begin(), values.end());
        for (std::size_t k = 0; k + 1 < v.size(); ++k) {
            double gl = 0, hl = 0, gr = 0, hr = 0;
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                const auto ii = static_cast<std::size_t>(i);
                if (x(i, f) <= v[k])
                    gl += g[ii], hl += h[ii];
                else
                    gr += g[ii], hr += h[ii];
            }
            if (hl < mcw || hr < mcw) continue;
            const double gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) -
                                       (gl + gr) * (gl + gr) / (hl + hr + lambda));
            if (gain > 0.0 && (!best || gain > best->gain))
                best = SplitCandidate{static_cast<std::size_t>(f), 0.5 * (v[k] + v[k + 1]), gain};
        }
    }
    return best;
}

}  // namespace

TEST_SUITE("gbt") {

TEST_CASE("zero rounds predict the base rate") {
    const auto x = design({{0.0}, {1.0}, {2.0}, {3.0}, {4.0}}, {1, 0, 0, 1, 0});
    const auto m = train_gbt(x, {.n_rounds = 0, .class_weighting = false});
    for (double p : predict_proba_gbt(m, x.values)) CHECK(p == doctest::Approx(0.4).epsilon(1e-14));
    const auto w = train_gbt(x, {.n_rounds = 0, .class_weighting = true});
    for (double p : predict_proba_gbt(w, x.values)) CHECK(p == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("balanced root leaf is zero") {
    const auto x = design({{0.0}, {1.0}, {2.0}, {3.0}}, {0, 1, 0, 1});
    const auto m = train_gbt(x, {.n_rounds = 1, .max_depth = 0, .class_weighting = false});
    REQUIRE(m.trees.size() == 1);
    REQUIRE(m.trees[0].nodes.size() == 1);
    CHECK(m.trees[0].nodes[0].value == 0.0);
}

TEST_CASE("hand model") {
    GbtModel m;
    m.base_score = 0.3;
    m.n_features = 1;
    CHECK(predict_proba_gbt(m, Matrix::Zero(1, 1))[0] == doctest::Approx(0.574442517).epsilon(1e-9));
}

TEST_CASE("split gain formula") {
    CHECK(split_gain(-2.0, 2.0, 2.0, 2.0, 0.0) == doctest::Approx(2.0));
    CHECK(split_gain(1.0, 1.0, 1.0, 1.0, 1.0) == doctest::Approx(0.5 * (0.5 + 0.5 - 4.0 / 3.0)));
}

TEST_CASE("split search matches brute force on random 6x2 matrices") {
    Rng rng(404);
    for (int trial = 0; trial < 200; ++trial) {
        Matrix x(6, 2);
        std::vector<double> g(6), h(6);
        for (Eigen::Index i = 0; i < 6; ++i) {
            x(i, 0) = static_cast<double>(rng.index(4));
            x(i, 1) = rng.normal();
            g[static_cast<std::size_t>(i)] = rng.uniform(-1.0, 1.0);
            h[static_cast<std::size_t>(i)] = rng.uniform(0.05, 0.25);
        }
        const double lambda = rng.uniform(0.0, 2.0);
        const double mcw = trial % 3 == 0 ? 0.3 : 0.0;
        std::vector<std::size_t> rows = {0, 1, 2, 3, 4, 5};
        const auto got = find_best_split(x, rows, g, h, lambda, mcw);
        const auto want = brute_force_split(x, g, h, lambda, mcw);
        REQUIRE(got.has_value() == want.has_value());
        if (!want) continue;
        CHECK(got->gain == doctest::Approx(want->gain).epsilon(1e-12));
        // Ties between columns that induce the same partition may resolve either way.
        double gl = 0, hl = 0, gr = 0, hr = 0;
        for (std::size_t i = 0; i < 6; ++i) {
            if (x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(got->feature)) <= got->threshold)
                gl += g[i], hl += h[i];
            else
                gr += g[i], hr += h[i];
        }
        CHECK(hl >= mcw);
        CHECK(hr >= mcw);
        CHECK(split_gain(gl, hl, gr, hr, lambda) == doctest::Approx(want->gain).epsilon(1e-12));
        if (got->feature == want->feature) CHECK(got->threshold == doctest::Approx(want->threshold).epsilon(1e-12));
    }
}

TEST_CASE("a zero tree leaves predictions unchanged") {
    Rng rng(3);
    const auto x = random_design(rng, 60, 3);
    auto m = train_gbt(x, {.n_rounds = 5});
    const auto before = predict_proba_gbt(m, x.values);
    m.trees.push_back(RegressionTree{{TreeNode{}}});
    CHECK(predict_proba_gbt(m, x.values) == before);
}

TEST_CASE("training loss does not increase") {
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        const auto x = random_design(rng, 100, 4);
        const auto m = train_gbt(x, {.n_rounds = 20, .class_weighting = false});
        double prev = train_loss(m, x, 0);
        for (std::size_t k = 1; k <= m.trees.size(); ++k) {
            const double cur = train_loss(m, x, k);
            CHECK(cur <= prev + 1e-9);
            prev = cur;
        }
    }
}

TEST_CASE("monotone feature transforms do not change training predictions") {
    Rng rng(10);
    const auto x = random_design(rng, 80, 3);
    auto t = x;
    for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
        t.values(i, 0) = std::exp(t.values(i, 0));
        t.values(i, 1) = 3.0 * t.values(i, 1) + 1.0;
        t.values(i, 2) = std::cbrt(t.values(i, 2));
    }
    const auto a = train_gbt(x, {.n_rounds = 10});
    const auto b = train_gbt(t, {.n_rounds = 10});
    const auto pa = predict_proba_gbt(a, x.values), pb = predict_proba_gbt(b, t.values);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-12));
}

TEST_CASE("leaf values are -G/(H+lambda) of the rows they hold") {
    Rng rng(11);
    const auto x = random_design(rng, 70, 3);
    const GbtConfig cfg{.n_rounds = 1, .max_depth = 3, .lambda = 1.5, .class_weighting = true};
    const auto m = train_gbt(x, cfg);
    const auto w = effective_sample_weights(x, true);
    const double p0 = sigmoid(m.base_score);
    const auto& tree = m.trees[0];
    std::vector<double> g(tree.nodes.size(), 0.0), h(tree.nodes.size(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto leaf = tree.leaf_index(x.values.row(static_cast<Eigen::Index>(i)));
        g[leaf] += w[i] * (p0 - x.labels[i]);
        h[leaf] += w[i] * p0 * (1 - p0);
    }
    for (std::size_t k = 0; k < tree.nodes.size(); ++k)
        if (tree.nodes[k].is_leaf()) CHECK(std::abs(tree.nodes[k].value + g[k] / (h[k] + cfg.lambda)) < 1e-10);
}

TEST_CASE("depth limit, determinism and parallel split search") {
    Rng rng(12);
    const auto x = random_design(rng, 150, 6);
    for (int depth = 1; depth <= 4; ++depth) {
        const auto m = train_gbt(x, {.n_rounds = 5, .max_depth = depth});
        for (const auto& t : m.trees) CHECK(t.depth() <= depth);
    }
    const auto a = train_gbt(x, {.n_rounds = 15});
    const auto b = train_gbt(x, {.n_rounds = 15});
    const auto c = train_gbt(x, {.n_rounds = 15, .split_search = Execution::Parallel});
    CHECK(a.to_json().dump() == b.to_json().dump());
    CHECK(a.to_json().dump() == c.to_json().dump());
    CHECK(predict_proba_gbt(a, x.values, Execution::Serial) == predict_proba_gbt(a, x.values, Execution::Parallel));
}

TEST_CASE("missing values follow the stored direction") {
    RegressionTree t;
    t.nodes = {TreeNode{0, 0.5, false, 1, 2, 0.0}, TreeNode{-1, 0, true, -1, -1, -1.0}, TreeNode{-1, 0, true, -1, -1, 1.0}};
    Vector row(1);
    row << std::nan("");
    CHECK(t.predict(row) == 1.0);
    t.nodes[0].missing_goes_left = true;
    CHECK(t.predict(row) == -1.0);
    row << 0.2;
    CHECK(t.predict(row) == -1.0);
}

TEST_CASE("JSON round trip and errors") {
    Rng rng(13);
    const auto x = random_design(rng, 50, 3);
    const auto m = train_gbt(x, {.n_rounds = 8});
    const auto back = GbtModel::from_json(nlohmann::json::parse(m.to_json().dump()));
    CHECK(predict_proba_gbt(back, x.values) == predict_proba_gbt(m, x.values));
    CHECK_THROWS_AS(train_gbt(x, {.eta = 0.0}), Error);
    CHECK_THROWS_AS(train_gbt(design({{1.0}, {2.0}}, {1, 1})), Error);
    CHECK_THROWS_AS(predict_proba_gbt(m, Matrix::Zero(1, 2)), Error);
}

}
