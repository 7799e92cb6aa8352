#include <doctest.h>

#include <cmath>
#include <functional>

#include "nonunion/classifier.hpp"
#include "nonunion/error.hpp"
#include "nonunion/synthetic.hpp"
#include "support.hpp"

using namespace nonunion;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::Internal;
}

}  // namespace

TEST_SUITE("classifier") {

TEST_CASE("model spec JSON round trip") {
    ModelSpec s;
    s.name = "svm_wide";
    s.kind = ModelKind::Svm;
    s.svm.C = 3.5;
    s.svm.gamma = 0.25;
    s.svm.class_weighting = true;
    CHECK(ModelSpec::from_json(s.to_json()).to_json() == s.to_json());

    ModelSpec g;
    g.name = "gbt";
    g.gbt.n_rounds = 42;
    g.shuffle_labels = true;
    const auto back = ModelSpec::from_json(g.to_json());
    CHECK(back.gbt.n_rounds == 42);
    CHECK(back.shuffle_labels);

    const auto scale = ModelSpec::from_json(nlohmann::json::parse(R"({"kind":"svm","params":{"gamma":"scale"}})"));
    CHECK_FALSE(scale.svm.gamma.has_value());
    CHECK(scale.name == "svm");
}

TEST_CASE("model spec rejects bad input") {
    CHECK(kind_of([] { ModelSpec::from_json(nlohmann::json::parse(R"({"kind":"forest"})")); }) == ErrorKind::InvalidConfig);
    CHECK(kind_of([] { ModelSpec::from_json(nlohmann::json::parse(R"({"kind":"gbt","depth":3})")); }) ==
          ErrorKind::InvalidConfig);
    CHECK(kind_of([] { ModelSpec::from_json(nlohmann::json::parse(R"({"kind":"gbt","params":{"rounds":3}})")); }) ==
          ErrorKind::InvalidConfig);
    CHECK(kind_of([] {
              ModelSpec::from_json(nlohmann::json::parse(R"({"kind":"constant","params":{"probability":1.5}})"));
          }) == ErrorKind::InvalidConfig);
}

TEST_CASE("pipeline round trip preserves predictions for every kind") {
    const auto c = generate_synthetic_cohort(160, 21, SyntheticConfig::defaults());
    for (auto kind : {ModelKind::Logistic, ModelKind::Svm, ModelKind::Gbt, ModelKind::Constant}) {
        ModelSpec s;
        s.kind = kind;
        s.name = std::string(to_string(kind));
        s.gbt.n_rounds = 10;
        const auto p = fit_pipeline(s, c.data, 5);
        CHECK(p.kind() == kind);
        const auto dir = testing::scratch_dir("pipeline_" + s.name);
        p.save(dir / "m.json");
        const auto back = Pipeline::load(dir / "m.json");
        CHECK(back.predict_proba(c.data) == p.predict_proba(c.data));
        CHECK(back.to_json().dump() == p.to_json().dump());
    }
}

TEST_CASE("pipeline artifacts are validated") {
    const auto dir = testing::scratch_dir("bad_pipeline");
    CHECK(kind_of([&] { Pipeline::load(dir / "absent.json"); }) == ErrorKind::Io);
    CHECK(kind_of([] { Pipeline::from_json(nlohmann::json{{"format", "nonunion.pipeline"}, {"version", 9}}); }) ==
          ErrorKind::InvalidArtifact);
}

TEST_CASE("shuffled labels remove the signal") {
    const auto c = generate_synthetic_cohort(400, 3, SyntheticConfig::defaults());
    ModelSpec real;
    real.kind = ModelKind::Logistic;
    ModelSpec control = real;
    control.shuffle_labels = true;
    const auto pr = fit_pipeline(real, c.data, 1).predict_proba(c.data);
    const auto pc = fit_pipeline(control, c.data, 1).predict_proba(c.data);
    auto corr_with_risk = [&](const std::vector<double>& p) {
        double mp = 0, mr = 0;
        for (std::size_t i = 0; i < p.size(); ++i) mp += p[i], mr += c.true_risk[i];
        mp /= p.size(), mr /= p.size();
        double sxy = 0, sxx = 0, syy = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            sxy += (p[i] - mp) * (c.true_risk[i] - mr);
            sxx += (p[i] - mp) * (p[i] - mp);
            syy += (c.true_risk[i] - mr) * (c.true_risk[i] - mr);
        }
        return sxy / std::sqrt(sxx * syy);
    };
    CHECK(corr_with_risk(pr) > corr_with_risk(pc) + 0.2);
    CHECK(fit_pipeline(control, c.data, 1).predict_proba(c.data) == pc);
}

TEST_CASE("constant model") {
    ModelSpec s;
    s.kind = ModelKind::Constant;
    s.constant = 0.3;
    const auto c = generate_synthetic_cohort(50, 2, SyntheticConfig::defaults());
    for (double p : fit_pipeline(s, c.data, 0).predict_proba(c.data)) CHECK(p == 0.3);
}

}
