#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "nonunion/error.hpp"
#include "nonunion/synthetic.hpp"
#include "support.hpp"

using namespace nonunion;
using testing::toy_schema;

namespace {

Dataset parse(const std::string& body) {
    std::istringstream in("fracture_date,revision_date,age,smoker,colour,comorbidities,grade,surgeries,failed\n" + body);
    return read_dataset(in, toy_schema());
}

Eigen::Index col(const FittedTransformer& t, const std::string& name) {
    const auto& names = t.column_names();
    auto it = std::find(names.begin(), names.end(), name);
    REQUIRE(it != names.end());
    return it - names.begin();
}

// Three rows: ages 1,2,3; smoker true,true,missing; colours green,green,red.
const char* kSmall =
    "2009-01-01,2009-03-02,1,true,green,diabetes;lung_disease,low,0,true\n"
    "2009-01-01,2009-01-31,2,true,green,diabetes;lung_disease,mid,1,false\n"
    "2009-01-01,2009-02-15,3,,red,renal,high,2,false\n";

template <typename Fn>
ErrorKind kind_thrown(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::Internal;
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("scaling uses population standard deviation") {
    const auto d = parse(kSmall);
    const auto t = fit_transformer(d);
    const auto& age = t.plans()[2];
    REQUIRE(age.feature == "age");
    CHECK(age.mean == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(age.sd == doctest::Approx(0.816496580927726).epsilon(1e-14));
    const auto x = t.transform(d);
    CHECK(x.values(2, col(t, "age")) == doctest::Approx(1.224744871).epsilon(1e-9));
    CHECK(x.values(0, col(t, "age")) == doctest::Approx(-1.224744871).epsilon(1e-9));
}

TEST_CASE("constant column encodes to zero") {
    const auto d = parse(
        "2009-01-01,2009-02-01,5,true,red,renal,low,1,true\n"
        "2009-01-02,2009-02-11,5,false,red,,low,1,false\n"
        "2009-01-03,2009-02-05,5,true,red,diabetes,low,1,false\n");
    const auto t = fit_transformer(d);
    const auto x = t.transform(d);
    for (Eigen::Index r = 0; r < 3; ++r) {
        CHECK(x.values(r, col(t, "age")) == 0.0);
        CHECK(std::isfinite(x.values(r, col(t, "surgeries"))));
    }
}

TEST_CASE("imputation by mode and majority") {
    const auto d = parse(kSmall);
    const auto t = fit_transformer(d);
    const auto x = t.transform(d);
    CHECK(x.values(2, col(t, "smoker")) == 1.0);

    const auto probe = parse("2009-01-01,,,,,,,,false\n");
    const auto px = t.transform(probe);
    CHECK(px.values(0, col(t, "colour=red")) == 0.0);
    CHECK(px.values(0, col(t, "colour=green")) == 1.0);
    CHECK(px.values(0, col(t, "colour=blue")) == 0.0);
    CHECK(px.values(0, col(t, "comorbidities=diabetes")) == 1.0);
    CHECK(px.values(0, col(t, "comorbidities=lung_disease")) == 1.0);
    CHECK(px.values(0, col(t, "comorbidities=renal")) == 0.0);
    CHECK(px.values(0, col(t, "age")) == 0.0);
    CHECK(px.values(0, col(t, "grade")) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("date becomes a day offset from the fracture") {
    CHECK(date_offset_days(Date::from_ymd(2009, 3, 2), Date::from_ymd(2009, 1, 1)) == 60);
    CHECK(date_offset_days(Date::from_ymd(2008, 12, 31), Date::from_ymd(2009, 1, 1)) == -1);
    const auto d = parse(kSmall);
    const auto t = fit_transformer(d);
    const auto& rev = t.plans()[1];
    REQUIRE(rev.feature == "revision_date");
    CHECK(rev.mean == doctest::Approx((60.0 + 30.0 + 45.0) / 3.0));
}

TEST_CASE("unseen category encodes as an all-zero block and is counted") {
    const auto d = parse(kSmall);
    const auto t = fit_transformer(d);
    auto probe = parse("2009-01-01,,2,true,blue,,low,1,false\n");
    // Blue is in the vocabulary but was never seen; it still has its own column.
    auto px = t.transform(probe);
    CHECK(px.values(0, col(t, "colour=blue")) == 1.0);
    CHECK(px.unseen_categories == 0);

    probe.records[0].cells[4] = Category{"purple"};
    px = t.transform(probe);
    CHECK(px.values(0, col(t, "colour=red")) == 0.0);
    CHECK(px.values(0, col(t, "colour=green")) == 0.0);
    CHECK(px.values(0, col(t, "colour=blue")) == 0.0);
    CHECK(px.unseen_categories == 1);
}

TEST_CASE("class weights") {
    const std::vector<int> y = {1, 1, 0, 0, 0};
    const auto w = compute_class_weights(y);
    CHECK(w == std::vector<double>{1.5, 1.5, 1.0, 1.0, 1.0});
    std::vector<int> big(160, 0);
    std::fill(big.begin(), big.begin() + 62, 1);
    const auto wb = compute_class_weights(big);
    CHECK(wb[0] == doctest::Approx(98.0 / 62.0).epsilon(1e-15));
    CHECK(wb[159] == 1.0);
    CHECK(kind_thrown([] { compute_class_weights(std::vector<int>{0, 0}); }) == ErrorKind::SingleClass);
}

TEST_CASE("scaled columns have zero mean and unit sd on complete training data") {
    auto cfg = SyntheticConfig::defaults();
    cfg.missing_fraction = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto c = generate_synthetic_cohort(300, seed, cfg);
        const auto t = fit_transformer(c.data);
        const auto x = t.transform(c.data);
        for (const auto& plan : t.plans()) {
            if (plan.encoding != Encoding::Scaled || plan.constant) continue;
            const auto j = static_cast<Eigen::Index>(plan.first_column);
            const double mean = x.values.col(j).mean();
            const double var = (x.values.col(j).array() - mean).square().mean();
            CHECK(std::abs(mean) < 1e-9);
            CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("transform is row-independent") {
    const auto c = generate_synthetic_cohort(200, 9, SyntheticConfig::defaults());
    const auto t = fit_transformer(c.data);
    const auto x = t.transform(c.data);
    Rng rng(3);
    std::vector<std::size_t> perm(c.data.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span(perm));
    const auto xp = t.transform(c.data.subset(perm));
    for (std::size_t i = 0; i < perm.size(); ++i)
        CHECK(xp.values.row(static_cast<Eigen::Index>(i)) == x.values.row(static_cast<Eigen::Index>(perm[i])));
}

TEST_CASE("fitted parameters depend only on the training rows") {
    const auto c = generate_synthetic_cohort(300, 4, SyntheticConfig::defaults());
    const auto split = split_dataset(c.data, 0.2, 4);
    const auto train = c.data.subset(split.train);
    auto test = c.data.subset(split.test);
    const auto t1 = fit_transformer(train);
    const auto before = t1.transform(train);
    for (auto& r : test.records) r.cells[test.schema.index_of("age").value()] = 1e6;
    (void)t1.transform(test);
    const auto t2 = fit_transformer(train);
    CHECK(t1.to_json() == t2.to_json());
    CHECK(t2.transform(train).values == before.values);
}

TEST_CASE("heavy missingness still yields a finite matrix") {
    auto cfg = SyntheticConfig::defaults();
    cfg.missing_fraction = 0.9;
    const auto c = generate_synthetic_cohort(400, 2, cfg);
    const auto t = fit_transformer(c.data);
    const auto x = t.transform(c.data);
    CHECK(x.values.allFinite());
}

TEST_CASE("JSON round trip reproduces the transform") {
    const auto c = generate_synthetic_cohort(150, 8, SyntheticConfig::defaults());
    const auto t = fit_transformer(c.data);
    const auto back = FittedTransformer::from_json(nlohmann::json::parse(t.to_json().dump()));
    CHECK(back.to_json() == t.to_json());
    CHECK(back.transform(c.data).values == t.transform(c.data).values);
    CHECK(kind_thrown([] { FittedTransformer::from_json(nlohmann::json{{"format", "x"}}); }) == ErrorKind::InvalidArtifact);
}

TEST_CASE("schema mismatch and all-missing columns") {
    const auto d = parse(kSmall);
    const auto t = fit_transformer(d);
    const auto c = generate_synthetic_cohort(50, 1, SyntheticConfig::defaults());
    CHECK(kind_thrown([&] { t.transform(c.data); }) == ErrorKind::SchemaMismatch);

    const auto empty_age = parse(
        "2009-01-01,,,true,red,,low,1,true\n"
        "2009-01-02,,,false,red,,low,1,false\n");
    CHECK(kind_thrown([&] { fit_transformer(empty_age); }) == ErrorKind::AllMissingColumn);
}

TEST_CASE("effective weights combine sample and class weights") {
    auto x = testing::design({{0.0}, {1.0}, {2.0}}, {1, 0, 0});
    x.sample_weights = {2.0, 1.0, 3.0};
    CHECK(effective_sample_weights(x, false) == std::vector<double>{2.0, 1.0, 3.0});
    CHECK(effective_sample_weights(x, true) == std::vector<double>{4.0, 1.0, 3.0});
}

}
