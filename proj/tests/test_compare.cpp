#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nonunion/compare.hpp"
#include "nonunion/error.hpp"
#include "nonunion/random.hpp"
#include "nonunion/synthetic.hpp"

using namespace nonunion;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::Internal;
}

// Average ranks of |d| over the nonzero differences, plus W+.
std::pair<std::vector<double>, double> ranks_and_wplus(const std::vector<double>& d) {
    std::vector<double> nz;
    for (double v : d)
        if (v != 0.0) nz.push_back(v);
    std::vector<double> ranks(nz.size());
    double wplus = 0.0;
    for (std::size_t i = 0; i < nz.size(); ++i) {
        double below = 0, equal = 0;
        for (double v : nz) below += std::abs(v) < std::abs(nz[i]), equal += std::abs(v) == std::abs(nz[i]);
        ranks[i] = below + (equal + 1.0) / 2.0;
        if (nz[i] > 0) wplus += ranks[i];
    }
    return {ranks, wplus};
}

// Two-sided p from all 2^n sign assignments.
double brute_force_p(const std::vector<double>& ranks, double wplus) {
    const std::size_t n = ranks.size();
    double lower = 0, upper = 0;
    const std::uint64_t total = std::uint64_t{1} << n;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        double w = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1) w += ranks[i];
        lower += w <= wplus + 1e-9;
        upper += w >= wplus - 1e-9;
    }
    return std::min(1.0, 2.0 * std::min(lower, upper) / static_cast<double>(total));
}

}  // namespace

TEST_SUITE("compare") {

TEST_CASE("resample sizes and determinism") {
    ResamplePlan plan{.count = 5, .fraction = 0.8, .master_seed = 11};
    const auto r = make_resamples(10, plan);
    REQUIRE(r.size() == 5);
    for (const auto& s : r) {
        CHECK(s.size() == 8);
        CHECK(std::is_sorted(s.begin(), s.end()));
        CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
    }
    CHECK(make_resamples(637, plan)[0].size() == 509);
    CHECK(make_resamples(10, plan) == r);
    plan.master_seed = 12;
    CHECK(make_resamples(10, plan) != r);
    CHECK(kind_of([] { make_resamples(10, ResamplePlan{.count = 0}); }) == ErrorKind::InvalidPlan);
    CHECK(kind_of([] { make_resamples(10, ResamplePlan{.count = 3, .fraction = 0.0}); }) == ErrorKind::InvalidPlan);
    CHECK(kind_of([] { make_resamples(10, ResamplePlan{.count = 3, .fraction = 1.5}); }) == ErrorKind::InvalidPlan);
}

TEST_CASE("three positive differences") {
    const std::vector<double> a = {2, 4, 6}, b = {1, 2, 3};
    const auto r = wilcoxon_signed_rank(a, b, 1);
    CHECK(r.w_plus == 6.0);
    CHECK(r.w_minus == 0.0);
    REQUIRE(r.p_exact.has_value());
    CHECK(*r.p_exact == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(r.p == *r.p_exact);
    CHECK(r.z > 0.0);
    CHECK(kind_of([&] { wilcoxon_signed_rank(a, b); }) == ErrorKind::TooFewPairs);
}

TEST_CASE("zero differences") {
    const std::vector<double> a = {1, 2, 3, 4, 5, 6};
    CHECK(kind_of([&] { wilcoxon_signed_rank(a, a); }) == ErrorKind::AllZeroDifferences);
    const std::vector<double> b = {1, 2, 3, 3, 4, 5, 6, 7};
    const std::vector<double> c = {1, 2, 4, 1, 6, 2, 9, 1};
    const auto r = wilcoxon_signed_rank(b, c);
    CHECK(r.pairs == 8);
    CHECK(r.nonzero == 6);
    CHECK(r.effect_size == doctest::Approx(std::abs(r.z) / std::sqrt(8.0)));
    CHECK(kind_of([&] { wilcoxon_signed_rank(a, std::vector<double>{1.0}); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("exact p matches brute-force enumeration") {
    Rng rng(77);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.index(12);
        std::vector<double> d(n);
        for (auto& v : d) v = (rng.index(5) == 0 ? 0.0 : std::round(rng.normal() * 4.0) / 4.0);
        d[0] = 0.5;
        const auto [ranks, wplus] = ranks_and_wplus(d);
        std::vector<double> zeros(n, 0.0);
        const auto r = wilcoxon_signed_rank(d, zeros, 1);
        CHECK(r.w_plus == doctest::Approx(wplus));
        REQUIRE(r.p_exact.has_value());
        CHECK(std::abs(*r.p_exact - brute_force_p(ranks, wplus)) <= 1e-9);
        CHECK(std::abs(wilcoxon_exact_p(ranks, wplus) - brute_force_p(ranks, wplus)) <= 1e-9);
    }
}

TEST_CASE("normal approximation is close to exact for moderate n") {
    Rng rng(78);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 5 + rng.index(8);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) a[i] = rng.normal(), b[i] = rng.normal();
        const auto r = wilcoxon_signed_rank(a, b);
        CHECK(std::abs(r.p_normal - *r.p_exact) <= 0.05);
    }
}

TEST_CASE("swapping the samples mirrors the statistic") {
    Rng rng(79);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 6 + rng.index(40);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) a[i] = rng.normal(0.2, 1.0), b[i] = rng.normal();
        const auto x = wilcoxon_signed_rank(a, b), y = wilcoxon_signed_rank(b, a);
        CHECK(x.w_plus == y.w_minus);
        CHECK(x.p == doctest::Approx(y.p).epsilon(1e-12));
        CHECK(x.z == doctest::Approx(-y.z).epsilon(1e-12));
        const double m = static_cast<double>(x.nonzero);
        CHECK(x.w_plus + x.w_minus == doctest::Approx(m * (m + 1) / 2));
    }
}

TEST_CASE("a constant shift puts all rank mass on one side") {
    std::vector<double> b, a;
    for (int i = 0; i < 10; ++i) b.push_back(i * 0.125), a.push_back(i * 0.125 + 0.25);
    const auto r = wilcoxon_signed_rank(a, b);
    CHECK(r.w_plus == 55.0);
    CHECK(r.w_minus == 0.0);
    CHECK(*r.p_exact == doctest::Approx(2.0 / 1024.0));
    const std::vector<double> big_a(40, 1.0), big_b(40, 0.5);
    const auto s = wilcoxon_signed_rank(big_a, big_b);
    CHECK_FALSE(s.p_exact.has_value());
    CHECK(s.p == s.p_normal);
    CHECK(s.p < 1e-6);
}

TEST_CASE("Bonferroni") {
    CHECK(bonferroni(std::vector<double>{0.01, 0.02, 0.04}) == std::vector<bool>{true, false, false});
    CHECK(bonferroni(std::vector<double>{0.0166, 0.0167}, 0.05) == std::vector<bool>{true, true});
    CHECK(bonferroni(std::vector<double>{0.025}, 0.05) == std::vector<bool>{true});
    CHECK(bonferroni(std::vector<double>{0.05}, 0.05) == std::vector<bool>{false});
}

TEST_CASE("empirical CDF") {
    const auto e = ecdf(std::vector<double>{0.3, 0.1, 0.3, 0.7});
    REQUIRE(e.size() == 3);
    CHECK(e[0].value == 0.1);
    CHECK(e[0].fraction == 0.25);
    CHECK(e[1].value == 0.3);
    CHECK(e[1].fraction == 0.75);
    CHECK(e[2].fraction == 1.0);
    CHECK(kind_of([] { ecdf(std::vector<double>{}); }) == ErrorKind::EmptyInput);
    std::ostringstream out;
    write_ecdf_csv(out, e);
    CHECK(out.str() == "value,fraction\n0.1,0.25\n0.3,0.75\n0.7,1\n");
}

TEST_CASE("a uniformly larger sample has a dominated ECDF") {
    Rng rng(80);
    std::vector<double> lo(50), hi(50);
    for (std::size_t i = 0; i < 50; ++i) lo[i] = rng.uniform(), hi[i] = lo[i] + 0.1;
    const auto el = ecdf(lo), eh = ecdf(hi);
    auto at = [](const std::vector<EcdfStep>& e, double v) {
        double f = 0.0;
        for (const auto& s : e)
            if (s.value <= v) f = s.fraction;
        return f;
    };
    for (double v = 0.0; v <= 1.2; v += 0.01) CHECK(at(eh, v) <= at(el, v));
}

TEST_CASE("paired scores are deterministic and independent of scheduling") {
    const auto c = generate_synthetic_cohort(200, 5, SyntheticConfig::defaults());
    const auto split = split_dataset(c.data, 0.2, 5);
    const auto train = c.data.subset(split.train), test = c.data.subset(split.test);
    const ResamplePlan plan{.count = 6, .fraction = 0.8, .master_seed = 3};
    const auto resamples = make_resamples(train.size(), plan);

    ModelSpec constant;
    constant.name = "constant";
    constant.kind = ModelKind::Constant;
    const auto k = paired_scores(resamples, plan, train, test, constant, 0.5);
    for (const auto& v : k.upm) CHECK(*v == 0.0);

    ModelSpec gbt;
    gbt.name = "gbt";
    gbt.gbt.n_rounds = 10;
    const auto a = paired_scores(resamples, plan, train, test, gbt, 0.5, Execution::Serial);
    const auto b = paired_scores(resamples, plan, train, test, gbt, 0.5, Execution::Parallel);
    CHECK(a.upm == b.upm);
    CHECK(a.failures.empty());
}

}
