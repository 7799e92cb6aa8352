#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "nonunion/calibration.hpp"
#include "nonunion/error.hpp"
#include "nonunion/random.hpp"

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

}  // namespace

TEST_SUITE("calibration") {

TEST_CASE("constant data is reproduced exactly") {
    Rng rng(1);
    std::vector<double> x(40), y(40, 0.37);
    for (auto& v : x) v = rng.uniform();
    for (double s : lowess(x, y)) CHECK(s == doctest::Approx(0.37).epsilon(1e-14));
}

TEST_CASE("linear data is reproduced") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 3 + rng.index(200);
        const double a = rng.normal(), b = rng.normal();
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = trial % 2 ? rng.uniform() : std::round(rng.uniform() * 10) / 10;
            y[i] = a + b * x[i];
        }
        const LowessConfig cfg{.frac = rng.uniform(0.2, 1.0), .robust_iters = static_cast<int>(rng.index(4))};
        const auto s = lowess(x, y, cfg);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(s[i] - y[i]) <= 1e-9);
    }
}

TEST_CASE("robustness iterations downweight an outlier") {
    std::vector<double> x, y;
    for (int i = 0; i < 30; ++i) x.push_back(i), y.push_back(2.0 * i + 0.2 * std::sin(1.7 * i));
    y[15] = 500.0;
    const auto plain = lowess(x, y, {.frac = 0.5, .robust_iters = 0});
    const auto robust = lowess(x, y, {.frac = 0.5, .robust_iters = 3});
    CHECK(std::abs(robust[14] - 28.0) < std::abs(plain[14] - 28.0));
    CHECK(std::abs(robust[14] - 28.0) < 1.0);
}

TEST_CASE("input order does not matter") {
    Rng rng(3);
    std::vector<double> x(60), y(60);
    for (std::size_t i = 0; i < 60; ++i) x[i] = rng.uniform(), y[i] = std::sin(6 * x[i]) + 0.1 * rng.normal();
    const auto s = lowess(x, y);
    std::vector<std::size_t> perm(60);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span(perm));
    std::vector<double> xp(60), yp(60);
    for (std::size_t i = 0; i < 60; ++i) xp[i] = x[perm[i]], yp[i] = y[perm[i]];
    const auto sp = lowess(xp, yp);
    for (std::size_t i = 0; i < 60; ++i) CHECK(sp[i] == doctest::Approx(s[perm[i]]).epsilon(1e-12));
}

TEST_CASE("serial and parallel agree") {
    Rng rng(4);
    std::vector<double> x(500), y(500);
    for (std::size_t i = 0; i < 500; ++i) x[i] = rng.uniform(), y[i] = rng.bernoulli(x[i]);
    CHECK(lowess(x, y, {}, Execution::Serial) == lowess(x, y, {}, Execution::Parallel));
}

TEST_CASE("errors") {
    const std::vector<double> two = {0, 1};
    CHECK(kind_of([&] { lowess(two, two); }) == ErrorKind::TooFewPoints);
    const std::vector<double> three = {0, 1, 2};
    CHECK(kind_of([&] { lowess(three, two); }) == ErrorKind::LengthMismatch);
    CHECK(kind_of([&] { lowess(three, three, {.frac = 0.0}); }) == ErrorKind::InvalidFraction);
    CHECK(kind_of([&] { lowess(three, three, {.frac = 1.5}); }) == ErrorKind::InvalidFraction);
}

TEST_CASE("calibration odds ratio") {
    const std::vector<int> y = {1, 0, 1, 0};
    CHECK(calibration_odds_ratio(y, std::vector<double>{0.5, 0.5, 0.5, 0.5}) == doctest::Approx(1.0));
    // mean p 0.75 against mean y 0.5
    CHECK(calibration_odds_ratio(y, std::vector<double>{0.75, 0.75, 0.75, 0.75}) == doctest::Approx(3.0));
    CHECK(calibration_odds_ratio(y, std::vector<double>{0.25, 0.25, 0.25, 0.25}) == doctest::Approx(1.0 / 3.0));
    CHECK(kind_of([&] { calibration_odds_ratio(std::vector<int>{1, 1}, std::vector<double>{0.5, 0.5}); }) ==
          ErrorKind::DegenerateMean);
    CHECK(kind_of([&] { calibration_odds_ratio(std::vector<int>{}, std::vector<double>{}); }) == ErrorKind::EmptyInput);
}

TEST_CASE("odds ratio factors through an intermediate prediction level") {
    Rng rng(5);
    auto odds = [](double q) { return q / (1 - q); };
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<int> y(50);
        for (auto& v : y) v = rng.bernoulli(0.4);
        y[0] = 1, y[1] = 0;
        const double a = rng.uniform(0.02, 0.98), c = rng.uniform(0.02, 0.98);
        const std::vector<double> pa(50, a), pc(50, c);
        const double direct = calibration_odds_ratio(y, pa);
        const double chained = calibration_odds_ratio(y, pc) * odds(a) / odds(c);
        CHECK(direct == doctest::Approx(chained).epsilon(1e-12));
    }
}

TEST_CASE("a calibrated predictor tracks the diagonal") {
    Rng rng(6);
    const std::size_t n = 10000;
    std::vector<double> p(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = rng.uniform(0.05, 0.95), y[i] = rng.bernoulli(p[i]);
    const auto r = calibration_report(y, p, {.frac = 2.0 / 3.0, .robust_iters = 0}, Execution::Parallel);
    CHECK(std::abs(r.odds_ratio - 1.0) < 0.1);
    for (const auto& pt : r.points)
        if (pt.predicted >= 0.1 && pt.predicted <= 0.9) CHECK(std::abs(pt.smoothed - pt.predicted) < 0.05);

    std::vector<double> shifted(n);
    for (std::size_t i = 0; i < n; ++i) shifted[i] = std::min(0.99, p[i] + 0.1);
    CHECK(calibration_report(y, shifted).odds_ratio > 1.0);
}

TEST_CASE("report is sorted and clamped") {
    const std::vector<int> y = {0, 0, 1, 1, 1, 0, 1};
    const std::vector<double> p = {0.9, 0.1, 0.8, 0.3, 0.95, 0.05, 0.6};
    const auto r = calibration_report(y, p);
    for (std::size_t i = 1; i < r.points.size(); ++i) CHECK(r.points[i - 1].predicted <= r.points[i].predicted);
    for (const auto& pt : r.points) {
        CHECK(pt.smoothed >= 0.0);
        CHECK(pt.smoothed <= 1.0);
    }
    std::ostringstream out;
    r.write_csv(out);
    CHECK(out.str().rfind("predicted,outcome,smoothed_raw,smoothed_clamped\n", 0) == 0);
    CHECK(r.summary_json().contains("odds_ratio"));
}

}
