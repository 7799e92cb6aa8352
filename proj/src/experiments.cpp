#include "nonunion/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "nonunion/error.hpp"
#include "nonunion/random.hpp"

namespace nonunion {

namespace {

using nlohmann::json;

constexpr std::uint64_t kInnerSplitStream = 1;
constexpr std::uint64_t kComparisonStream = 2;
constexpr std::uint64_t kAblationStream = 3;
constexpr std::uint64_t kModelStream = 16;

void reject_unknown(const json& doc, const std::set<std::string>& allowed, const std::string& where) {
    if (!doc.is_object()) fail(ErrorKind::InvalidConfig, where + " must be an object");
    for (const auto& [key, _] : doc.items())
        if (!allowed.contains(key)) fail(ErrorKind::InvalidConfig, "unknown key '" + key + "' in " + where);
}

json metric_or_null(const Metric& m) {
    return m ? json(*m) : json(nullptr);
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out << text;
}

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> rank(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    return rank;
}

std::vector<ModelSpec> default_models() {
    ModelSpec lr;
    lr.name = "logistic";
    lr.kind = ModelKind::Logistic;
    ModelSpec svm;
    svm.name = "svm";
    svm.kind = ModelKind::Svm;
    ModelSpec gbt;
    gbt.name = "gbt";
    gbt.kind = ModelKind::Gbt;
    return {lr, svm, gbt};
}

PairwiseTest pairwise(const std::string& a_name, const std::string& b_name, const PairedScores& a, const PairedScores& b) {
    PairwiseTest t;
    t.first = a_name;
    t.second = b_name;
    std::vector<double> xa, xb;
    for (std::size_t i = 0; i < std::min(a.upm.size(), b.upm.size()); ++i)
        if (a.upm[i] && b.upm[i]) xa.push_back(*a.upm[i]), xb.push_back(*b.upm[i]);
    t.usable_pairs = xa.size();
    try {
        t.result = wilcoxon_signed_rank(xa, xb);
    } catch (const Error& e) {
        t.error = std::string(to_string(e.kind())) + ": " + e.what();
    }
    return t;
}

json pairwise_json(const PairwiseTest& t) {
    json j = {{"first", t.first}, {"second", t.second}, {"usable_pairs", t.usable_pairs}, {"significant", t.significant}};
    if (t.result) j["test"] = t.result->to_json();
    else j["error"] = t.error;
    return j;
}

json scores_json(const PairedScores& s) {
    json values = json::array();
    std::vector<double> defined;
    for (const auto& v : s.upm) {
        values.push_back(metric_or_null(v));
        if (v) defined.push_back(*v);
    }
    json j = {{"upm", values}, {"failures", s.failures}, {"defined", defined.size()}};
    if (!defined.empty()) {
        std::sort(defined.begin(), defined.end());
        const std::size_t n = defined.size();
        j["median"] = n % 2 ? defined[n / 2] : (defined[n / 2 - 1] + defined[n / 2]) / 2.0;
        j["mean"] = std::accumulate(defined.begin(), defined.end(), 0.0) / static_cast<double>(n);
    }
    return j;
}

}  // namespace

double ThresholdRule::choose(std::span<const int> labels, std::span<const double> probabilities) const {
    switch (policy) {
        case ThresholdPolicy::Fixed: return value;
        case ThresholdPolicy::SensitivityFloor: return min_threshold_for_sensitivity(labels, probabilities, value);
        case ThresholdPolicy::SpecificityFloor: return threshold_for_specificity(labels, probabilities, value);
    }
    fail(ErrorKind::Internal, "unhandled threshold policy");
}

nlohmann::json ThresholdRule::to_json() const {
    switch (policy) {
        case ThresholdPolicy::Fixed: return {{"fixed", value}};
        case ThresholdPolicy::SensitivityFloor: return {{"sensitivity_floor", value}};
        case ThresholdPolicy::SpecificityFloor: return {{"specificity_floor", value}};
    }
    return {};
}

ThresholdRule ThresholdRule::from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.size() != 1)
        fail(ErrorKind::InvalidConfig, "threshold policy must be one of {fixed|sensitivity_floor|specificity_floor: value}");
    ThresholdRule r;
    const auto& [key, val] = *doc.items().begin();
    if (key == "fixed") r.policy = ThresholdPolicy::Fixed;
    else if (key == "sensitivity_floor") r.policy = ThresholdPolicy::SensitivityFloor;
    else if (key == "specificity_floor") r.policy = ThresholdPolicy::SpecificityFloor;
    else fail(ErrorKind::InvalidConfig, "unknown threshold policy '" + key + "'");
    if (!val.is_number()) fail(ErrorKind::InvalidConfig, "threshold policy value must be a number");
    r.value = val.get<double>();
    if (!(r.value >= 0.0 && r.value <= 1.0)) fail(ErrorKind::InvalidConfig, "threshold policy value must lie in [0, 1]");
    return r;
}

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig c;
    c.data.synthetic_n = 797;
    c.data.synthetic = SyntheticConfig::defaults();
    c.models = default_models();
    return c;
}

const ModelSpec& ExperimentConfig::model(const std::string& name) const {
    for (const auto& m : models)
        if (m.name == name) return m;
    fail(ErrorKind::InvalidConfig, "no model named '" + name + "' in config");
}

nlohmann::json ExperimentConfig::to_json() const {
    json data_j;
    if (data.synthetic_n) data_j = {{"synthetic", {{"n", *data.synthetic_n}, {"params", data.synthetic.to_json()}}}};
    else if (!data.csv.empty()) data_j = {{"csv", data.csv.string()}, {"schema", data.schema.string()}};
    else data_j = {{"train_csv", data.train_csv.string()}, {"test_csv", data.test_csv.string()}, {"schema", data.schema.string()}};
    json models_j = json::array();
    for (const auto& m : models) models_j.push_back(m.to_json());
    return {{"seed", seed},
            {"data", data_j},
            {"split", {{"test_fraction", test_fraction}, {"holdout_fraction", holdout_fraction}, {"stratified", stratified}}},
            {"models", models_j},
            {"threshold", threshold.to_json()},
            {"comparison",
             {{"enabled", comparison.enabled},
              {"count", comparison.plan.count},
              {"fraction", comparison.plan.fraction},
              {"threshold", comparison.threshold},
              {"alpha", comparison.alpha},
              {"shuffled_control", comparison.shuffled_control},
              {"control_model", comparison.control_model}}},
            {"ablation",
             {{"enabled", ablation.enabled},
              {"fractions", ablation.fractions},
              {"repeats", ablation.repeats},
              {"threshold", ablation.threshold},
              {"model", ablation.model},
              {"min_rows", ablation.min_rows}}},
            {"calibration", {{"frac", lowess.frac}, {"robust_iters", lowess.robust_iters}}},
            {"parallel", parallel}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
    ExperimentConfig c = defaults();
    try {
        reject_unknown(doc, {"seed", "data", "split", "models", "threshold", "comparison", "ablation", "calibration", "parallel"},
                       "config");
        if (doc.contains("seed")) {
            if (!doc.at("seed").is_number_unsigned()) fail(ErrorKind::InvalidConfig, "seed must be a non-negative integer");
            c.seed = doc.at("seed").get<std::uint64_t>();
        }
        if (doc.contains("data")) {
            const auto& d = doc.at("data");
            reject_unknown(d, {"synthetic", "csv", "train_csv", "test_csv", "schema"}, "data");
            c.data = DataSource{};
            if (d.contains("synthetic")) {
                const auto& s = d.at("synthetic");
                reject_unknown(s, {"n", "params"}, "data.synthetic");
                c.data.synthetic_n = s.value("n", std::size_t{797});
                c.data.synthetic = s.contains("params") ? SyntheticConfig::from_json(s.at("params")) : SyntheticConfig::defaults();
                if (d.size() != 1) fail(ErrorKind::InvalidConfig, "data.synthetic excludes CSV sources");
            } else if (d.contains("csv")) {
                c.data.csv = d.at("csv").get<std::string>();
                c.data.schema = d.at("schema").get<std::string>();
            } else if (d.contains("train_csv")) {
                c.data.train_csv = d.at("train_csv").get<std::string>();
                c.data.test_csv = d.at("test_csv").get<std::string>();
                c.data.schema = d.at("schema").get<std::string>();
            } else {
                fail(ErrorKind::InvalidConfig, "data needs synthetic, csv or train_csv/test_csv");
            }
        }
        if (doc.contains("split")) {
            const auto& s = doc.at("split");
            reject_unknown(s, {"test_fraction", "holdout_fraction", "stratified"}, "split");
            c.test_fraction = s.value("test_fraction", c.test_fraction);
            c.holdout_fraction = s.value("holdout_fraction", c.holdout_fraction);
            c.stratified = s.value("stratified", c.stratified);
        }
        if (doc.contains("models")) {
            c.models.clear();
            for (const auto& m : doc.at("models")) c.models.push_back(ModelSpec::from_json(m));
        }
        if (doc.contains("threshold")) c.threshold = ThresholdRule::from_json(doc.at("threshold"));
        if (doc.contains("comparison")) {
            const auto& s = doc.at("comparison");
            reject_unknown(s, {"enabled", "count", "fraction", "threshold", "alpha", "shuffled_control", "control_model"},
                           "comparison");
            c.comparison.enabled = s.value("enabled", c.comparison.enabled);
            c.comparison.plan.count = s.value("count", c.comparison.plan.count);
            c.comparison.plan.fraction = s.value("fraction", c.comparison.plan.fraction);
            c.comparison.threshold = s.value("threshold", c.comparison.threshold);
            c.comparison.alpha = s.value("alpha", c.comparison.alpha);
            c.comparison.shuffled_control = s.value("shuffled_control", c.comparison.shuffled_control);
            c.comparison.control_model = s.value("control_model", c.comparison.control_model);
        }
        if (doc.contains("ablation")) {
            const auto& s = doc.at("ablation");
            reject_unknown(s, {"enabled", "fractions", "repeats", "threshold", "model", "min_rows"}, "ablation");
            c.ablation.enabled = s.value("enabled", c.ablation.enabled);
            c.ablation.fractions = s.value("fractions", c.ablation.fractions);
            c.ablation.repeats = s.value("repeats", c.ablation.repeats);
            c.ablation.threshold = s.value("threshold", c.ablation.threshold);
            c.ablation.model = s.value("model", c.ablation.model);
            c.ablation.min_rows = s.value("min_rows", c.ablation.min_rows);
        }
        if (doc.contains("calibration")) {
            const auto& s = doc.at("calibration");
            reject_unknown(s, {"frac", "robust_iters"}, "calibration");
            c.lowess.frac = s.value("frac", c.lowess.frac);
            c.lowess.robust_iters = s.value("robust_iters", c.lowess.robust_iters);
        }
        c.parallel = doc.value("parallel", c.parallel);
    } catch (const json::exception& e) {
        fail(ErrorKind::InvalidConfig, std::string("config: ") + e.what());
    }

    if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) fail(ErrorKind::InvalidConfig, "split.test_fraction must lie in (0, 1)");
    if (!(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0))
        fail(ErrorKind::InvalidConfig, "split.holdout_fraction must lie in (0, 1)");
    if (c.models.empty()) fail(ErrorKind::InvalidConfig, "at least one model is required");
    std::set<std::string> names;
    for (const auto& m : c.models)
        if (!names.insert(m.name).second) fail(ErrorKind::InvalidConfig, "duplicate model name '" + m.name + "'");
    if (c.ablation.fractions.empty()) fail(ErrorKind::InvalidConfig, "ablation.fractions must not be empty");
    for (double f : c.ablation.fractions)
        if (!(f > 0.0 && f <= 1.0)) fail(ErrorKind::InvalidConfig, "ablation fractions must lie in (0, 1]");
    if (c.ablation.repeats < 1) fail(ErrorKind::InvalidConfig, "ablation.repeats must be at least 1");
    if (!(c.comparison.alpha > 0.0 && c.comparison.alpha < 1.0)) fail(ErrorKind::InvalidConfig, "comparison.alpha must lie in (0, 1)");
    if (c.comparison.plan.count == 0) fail(ErrorKind::InvalidPlan, "comparison.count must be positive");
    if (!(c.comparison.plan.fraction > 0.0 && c.comparison.plan.fraction <= 1.0))
        fail(ErrorKind::InvalidPlan, "comparison.fraction must lie in (0, 1]");
    if (c.comparison.enabled && c.comparison.shuffled_control) (void)c.model(c.comparison.control_model);
    if (c.ablation.enabled) (void)c.model(c.ablation.model);
    return c;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) fail(ErrorKind::InvalidConfig, "override '" + assignment + "' is not key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) fail(ErrorKind::InvalidConfig, "override '" + assignment + "' has an empty path segment");
        json* child = nullptr;
        if (node->is_array()) {
            std::size_t idx = 0;
            const auto [p, ec] = std::from_chars(key.data(), key.data() + key.size(), idx);
            if (ec != std::errc{} || p != key.data() + key.size() || idx >= node->size())
                fail(ErrorKind::InvalidConfig, "override '" + assignment + "': bad array index '" + key + "'");
            child = &(*node)[idx];
        } else {
            if (node->is_null()) *node = json::object();
            if (!node->is_object()) fail(ErrorKind::InvalidConfig, "override '" + assignment + "' descends into a scalar");
            child = &(*node)[key];
        }
        if (dot == std::string::npos) {
            *child = value;
            return;
        }
        node = child;
        start = dot + 1;
    }
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    json doc = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) fail(ErrorKind::Io, "cannot open config " + path.string());
        doc = json::parse(in, nullptr, false);
        if (doc.is_discarded()) fail(ErrorKind::InvalidConfig, path.string() + " is not valid JSON");
        // Relative data paths resolve against the config file's directory.
        if (doc.contains("data") && doc["data"].is_object()) {
            for (const char* key : {"csv", "train_csv", "test_csv", "schema"}) {
                auto& d = doc["data"];
                if (d.contains(key) && d[key].is_string()) {
                    std::filesystem::path p = d[key].get<std::string>();
                    if (p.is_relative()) d[key] = (path.parent_path() / p).lexically_normal().string();
                }
            }
        }
    } else {
        doc = ExperimentConfig::defaults().to_json();
    }
    for (const auto& o : overrides) apply_override(doc, o);
    return ExperimentConfig::from_json(doc);
}

std::string config_hash(const nlohmann::json& resolved) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : resolved.dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::uint64_t model_seed(const ExperimentConfig& config, std::size_t index) {
    return derive_seed(config.seed, kModelStream + index);
}

Dataset load_source(const ExperimentConfig& config) {
    if (config.data.synthetic_n) return generate_synthetic_cohort(*config.data.synthetic_n, config.seed, config.data.synthetic).data;
    const auto schema = FeatureSchema::load(config.data.schema);
    if (!config.data.csv.empty()) return load_dataset(config.data.csv, schema);
    fail(ErrorKind::InvalidConfig, "data source has separate train/test files");
}

Partition prepare_data(const ExperimentConfig& config) {
    Partition p;
    if (!config.data.synthetic_n && config.data.csv.empty()) {
        const auto schema = FeatureSchema::load(config.data.schema);
        p.train = load_dataset(config.data.train_csv, schema);
        p.test = load_dataset(config.data.test_csv, schema);
        p.split.seed = config.seed;
    } else {
        const Dataset all = load_source(config);
        p.split = split_dataset(all, config.test_fraction, config.seed, config.stratified);
        p.train = all.subset(p.split.train);
        p.test = all.subset(p.split.test);
    }
    p.inner = split_dataset(p.train, config.holdout_fraction, derive_seed(config.seed, kInnerSplitStream), config.stratified);
    p.fit = p.train.subset(p.inner.train);
    p.holdout = p.train.subset(p.inner.test);
    return p;
}

FullRun run_full_pipeline(const ExperimentConfig& config, const Partition& data) {
    FullRun run;
    run.models.resize(config.models.size());
    for_each_index(config.models.size(), config.execution(), [&](std::size_t i) {
        const auto& spec = config.models[i];
        ModelResult& r = run.models[i];
        r.name = spec.name;
        try {
            r.pipeline = fit_pipeline(spec, data.fit, model_seed(config, i));
            const auto holdout_p = r.pipeline.predict_proba(data.holdout);
            r.threshold = config.threshold.choose(data.holdout.outcomes, holdout_p);
            r.holdout = companion_metrics(confusion(data.holdout.outcomes, holdout_p, r.threshold));
            r.test_probabilities = r.pipeline.predict_proba(data.test);
        } catch (const Error& e) {
            throw Error(e.kind(), "model '" + spec.name + "': " + e.what());
        }
        r.confusion = confusion(data.test.outcomes, r.test_probabilities, r.threshold);
        r.test = companion_metrics(r.confusion);
        r.sweep = sweep_thresholds(data.test.outcomes, r.test_probabilities);
        try {
            r.calibration = calibration_report(data.test.outcomes, r.test_probabilities, config.lowess);
        } catch (const Error& e) {
            r.calibration_error = std::string(to_string(e.kind())) + ": " + e.what();
        }
    });

    // All-majority-class baseline: every test case gets the training majority label.
    const bool majority_positive = 2 * std::accumulate(data.fit.outcomes.begin(), data.fit.outcomes.end(), std::size_t{0}) >
                                   data.fit.outcomes.size();
    const std::vector<double> constant(data.test.size(), majority_positive ? 1.0 : 0.0);
    run.baseline_confusion = confusion(data.test.outcomes, constant, 0.5);
    run.baseline = companion_metrics(run.baseline_confusion);
    return run;
}

nlohmann::json ComparisonRun::to_json() const {
    json per_model = json::object();
    for (std::size_t i = 0; i < names.size(); ++i) per_model[names[i]] = scores_json(scores[i]);
    json tests_j = json::array();
    for (const auto& t : tests) tests_j.push_back(pairwise_json(t));
    json j = {{"alpha", alpha},
              {"family_size", family_size},
              {"corrected_alpha", alpha / static_cast<double>(std::max<std::size_t>(family_size, 1))},
              {"scores", per_model},
              {"tests", tests_j},
              {"evaluation_set", "test"}};
    if (control) {
        j["control"] = pairwise_json(*control);
        j["control"]["shuffled_scores"] = scores_json(*control_scores);
    }
    return j;
}

ComparisonRun run_comparison(const ExperimentConfig& config, const Partition& data) {
    ComparisonRun run;
    run.alpha = config.comparison.alpha;
    ResamplePlan plan = config.comparison.plan;
    plan.master_seed = derive_seed(config.seed, kComparisonStream);
    const auto resamples = make_resamples(data.train.size(), plan);

    for (const auto& m : config.models) {
        run.names.push_back(m.name);
        run.scores.push_back(paired_scores(resamples, plan, data.train, data.test, m, config.comparison.threshold,
                                           config.execution()));
    }
    for (std::size_t a = 0; a < run.names.size(); ++a)
        for (std::size_t b = a + 1; b < run.names.size(); ++b)
            run.tests.push_back(pairwise(run.names[a], run.names[b], run.scores[a], run.scores[b]));
    run.family_size = run.tests.size();

    std::vector<double> p;
    for (const auto& t : run.tests) p.push_back(t.result ? t.result->p : 1.0);
    const auto flags = bonferroni(p, run.alpha);
    for (std::size_t i = 0; i < run.tests.size(); ++i) run.tests[i].significant = run.tests[i].result && flags[i];

    if (config.comparison.shuffled_control) {
        const ModelSpec& genuine = config.model(config.comparison.control_model);
        ModelSpec twin = genuine;
        twin.name = genuine.name + "_shuffled";
        twin.shuffle_labels = true;
        run.control_scores =
            paired_scores(resamples, plan, data.train, data.test, twin, config.comparison.threshold, config.execution());
        const auto idx = static_cast<std::size_t>(
            std::find(run.names.begin(), run.names.end(), genuine.name) - run.names.begin());
        run.control = pairwise(genuine.name, twin.name, run.scores[idx], *run.control_scores);
        const double cut = run.alpha / static_cast<double>(std::max<std::size_t>(run.family_size, 1));
        run.control->significant = run.control->result && run.control->result->p < cut;
    }
    return run;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) fail(ErrorKind::LengthMismatch, "spearman inputs differ in length");
    if (x.size() < 2) return std::nullopt;
    const auto rx = average_ranks(x), ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

AblationRun run_ablation(const ExperimentConfig& config, const Partition& data) {
    const auto& s = config.ablation;
    const ModelSpec& spec = config.model(s.model);
    AblationRun run;
    run.fractions = s.fractions;
    std::sort(run.fractions.begin(), run.fractions.end());
    const std::uint64_t master = derive_seed(config.seed, kAblationStream);
    const std::size_t n = data.train.size();
    run.rows.resize(run.fractions.size() * s.repeats);

    for_each_index(run.rows.size(), config.execution(), [&](std::size_t task) {
        AblationRow& row = run.rows[task];
        row.fraction = run.fractions[task / s.repeats];
        row.repeat = task % s.repeats;
        row.rows = static_cast<std::size_t>(std::ceil(row.fraction * static_cast<double>(n) - 1e-9));
        if (row.rows < s.min_rows) {
            row.skipped = "fewer than " + std::to_string(s.min_rows) + " rows";
            return;
        }
        const std::uint64_t seed = derive_seed(master, task);
        Rng rng(seed);
        const Dataset draw = data.train.subset(rng.sample_with_replacement(n, row.rows));
        const auto pos = std::accumulate(draw.outcomes.begin(), draw.outcomes.end(), std::size_t{0});
        if (pos == 0 || pos == draw.size()) {
            row.skipped = "draw holds a single class";
            return;
        }
        try {
            const Pipeline p = fit_pipeline(spec, draw, seed);
            const auto cm = confusion(data.test.outcomes, p.predict_proba(data.test), s.threshold);
            const auto m = companion_metrics(cm);
            row.upm = m.upm;
            row.sensitivity = m.sensitivity;
            row.specificity = m.specificity;
        } catch (const Error& e) {
            row.skipped = std::string(to_string(e.kind())) + ": " + e.what();
        }
    });

    std::vector<double> xs, ys;
    for (std::size_t f = 0; f < run.fractions.size(); ++f) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t r = 0; r < s.repeats; ++r) {
            const auto& row = run.rows[f * s.repeats + r];
            if (row.upm) sum += *row.upm, ++count;
        }
        if (count) {
            run.mean_upm.push_back(sum / static_cast<double>(count));
            xs.push_back(run.fractions[f]);
            ys.push_back(run.mean_upm.back().value());
        } else {
            run.mean_upm.push_back(std::nullopt);
        }
    }
    run.spearman = spearman(xs, ys);
    return run;
}

nlohmann::json AblationRun::to_json() const {
    json curve = json::array();
    for (std::size_t f = 0; f < fractions.size(); ++f) {
        std::size_t used = 0, skipped = 0;
        double sens = 0.0, spec = 0.0;
        std::size_t ns = 0, nsp = 0;
        std::set<std::string> reasons;
        for (const auto& row : rows) {
            if (row.fraction != fractions[f]) continue;
            if (!row.skipped.empty()) ++skipped, reasons.insert(row.skipped);
            if (row.upm) ++used;
            if (row.sensitivity) sens += *row.sensitivity, ++ns;
            if (row.specificity) spec += *row.specificity, ++nsp;
        }
        curve.push_back({{"fraction", fractions[f]},
                         {"mean_upm", metric_or_null(mean_upm[f])},
                         {"mean_sensitivity", ns ? json(sens / static_cast<double>(ns)) : json(nullptr)},
                         {"mean_specificity", nsp ? json(spec / static_cast<double>(nsp)) : json(nullptr)},
                         {"repeats_scored", used},
                         {"repeats_skipped", skipped},
                         {"skip_reasons", reasons}});
    }
    return {{"curve", curve}, {"spearman_fraction_vs_mean_upm", metric_or_null(spearman)}};
}

void AblationRun::write_csv(std::ostream& out) const {
    out << "fraction,repeat,rows,upm,sensitivity,specificity,skipped\n";
    char buf[32];
    auto put = [&](const Metric& m) {
        if (!m) return;
        const auto res = std::to_chars(buf, buf + sizeof buf, *m);
        out.write(buf, res.ptr - buf);
    };
    for (const auto& r : rows) {
        put(r.fraction);
        out << ',' << r.repeat << ',' << r.rows << ',';
        put(r.upm);
        out << ',';
        put(r.sensitivity);
        out << ',';
        put(r.specificity);
        out << ',' << r.skipped << '\n';
    }
}

nlohmann::json strip_timestamps(nlohmann::json report) {
    if (report.contains("provenance")) report["provenance"].erase("generated_at");
    return report;
}

nlohmann::json run_all(const ExperimentConfig& config, const std::filesystem::path& out, const RunAllOptions& options,
                       const Logger& log) {
    auto note = [&](const std::string& msg) {
        if (log) log(msg);
    };
    namespace fs = std::filesystem;
    std::error_code ec;
    for (const char* sub : {"models", "reports", "plots"}) {
        fs::create_directories(out / sub, ec);
        if (ec) fail(ErrorKind::Io, "cannot create " + (out / sub).string() + ": " + ec.message());
    }
    const json resolved = config.to_json();
    write_text(out / "config.json", resolved.dump(2) + "\n");

    note("preparing data");
    const Partition data = prepare_data(config);
    note("training " + std::to_string(config.models.size()) + " models on " + std::to_string(data.fit.size()) + " rows");
    const FullRun full = run_full_pipeline(config, data);

    json models_j = json::object();
    for (const auto& r : full.models) {
        r.pipeline.save(out / "models" / (r.name + ".json"));
        json m = {{"threshold", r.threshold},
                  {"threshold_policy", config.threshold.to_json()},
                  {"holdout", r.holdout.to_json()},
                  {"test", r.test.to_json()},
                  {"confusion", r.confusion.to_json()}};
        if (r.calibration) m["calibration"] = r.calibration->summary_json();
        else m["calibration_error"] = r.calibration_error;
        models_j[r.name] = m;

        std::ostringstream sweep, cal, cm;
        write_sweep_csv(sweep, r.sweep);
        write_text(out / "plots" / ("upm_vs_threshold_" + r.name + ".csv"), sweep.str());
        if (r.calibration) {
            r.calibration->write_csv(cal);
            write_text(out / "plots" / ("calibration_" + r.name + ".csv"), cal.str());
        }
        cm << "actual,predicted,count\n"
           << "1,1," << r.confusion.tp << "\n1,0," << r.confusion.fn << "\n0,1," << r.confusion.fp << "\n0,0,"
           << r.confusion.tn << "\n";
        write_text(out / "plots" / ("confusion_" + r.name + ".csv"), cm.str());
    }

    json report = {
        {"provenance",
         {{"seed", config.seed},
          {"config_hash", config_hash(resolved)},
          {"split_seed", data.split.seed},
          {"holdout_seed", data.inner.seed},
          {"generated_at", iso_now()}}},
        {"data",
         {{"train", data.train.size()},
          {"test", data.test.size()},
          {"fit", data.fit.size()},
          {"holdout", data.holdout.size()},
          {"train_incidence", data.train.incidence()},
          {"test_incidence", data.test.incidence()}}},
        {"models", models_j},
        {"baseline", {{"kind", "all-majority-class"}, {"test", full.baseline.to_json()}, {"confusion", full.baseline_confusion.to_json()}}}};

    if (options.comparison && config.comparison.enabled) {
        note("comparison: " + std::to_string(config.comparison.plan.count) + " resamples x " +
             std::to_string(config.models.size() + (config.comparison.shuffled_control ? 1 : 0)) + " models");
        const ComparisonRun cmp = run_comparison(config, data);
        report["comparison"] = cmp.to_json();
        for (std::size_t i = 0; i < cmp.names.size(); ++i) {
            std::vector<double> defined;
            for (const auto& v : cmp.scores[i].upm)
                if (v) defined.push_back(*v);
            if (defined.empty()) continue;
            std::ostringstream e;
            write_ecdf_csv(e, ecdf(defined));
            write_text(out / "plots" / ("ecdf_" + cmp.names[i] + ".csv"), e.str());
        }
    }
    if (options.ablation && config.ablation.enabled) {
        note("ablation: " + std::to_string(config.ablation.fractions.size()) + " fractions x " +
             std::to_string(config.ablation.repeats) + " repeats");
        const AblationRun abl = run_ablation(config, data);
        report["ablation"] = abl.to_json();
        std::ostringstream lc;
        abl.write_csv(lc);
        write_text(out / "plots" / "learning_curve.csv", lc.str());
    }
    write_text(out / "reports" / "report.json", report.dump(2) + "\n");
    note("wrote " + out.string());
    return report;
}

}  // namespace nonunion
