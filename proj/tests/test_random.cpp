#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "nonunion/random.hpp"

using namespace nonunion;

TEST_SUITE("random") {

TEST_CASE("derived seeds are stable and distinct across indices") {
    CHECK(derive_seed(7, 3) == derive_seed(7, 3));
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(42, i));
    CHECK(seen.size() == 1000);
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("same seed gives the same stream") {
    Rng a(99), b(99);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
}

TEST_CASE("uniform and index stay in range") {
    Rng rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const std::size_t bound = 1 + static_cast<std::size_t>(i % 17);
        CHECK(rng.index(bound) < bound);
    }
}

TEST_CASE("normal draws have roughly unit moments") {
    Rng rng(5);
    double s = 0, ss = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s += z;
        ss += z * z;
    }
    CHECK(s / n == doctest::Approx(0.0).epsilon(0.02).scale(1.0));
    CHECK(ss / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("poisson mean") {
    Rng rng(8);
    double s = 0;
    for (int i = 0; i < 100000; ++i) s += rng.poisson(1.8);
    CHECK(s / 100000 == doctest::Approx(1.8).epsilon(0.02));
}

TEST_CASE("sampling without replacement yields sorted distinct indices") {
    Rng rng(3);
    for (std::size_t n = 1; n < 60; ++n) {
        for (std::size_t k = 0; k <= n; k += 3) {
            const auto s = rng.sample_without_replacement(n, k);
            REQUIRE(s.size() == k);
            CHECK(std::is_sorted(s.begin(), s.end()));
            CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
            if (k) CHECK(s.back() < n);
        }
    }
}

TEST_CASE("shuffle is a permutation") {
    Rng rng(11);
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    auto w = v;
    rng.shuffle(std::span<int>(w));
    CHECK(w != v);
    std::sort(w.begin(), w.end());
    CHECK(w == v);
}

}
