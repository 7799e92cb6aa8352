#include "nonunion/classifier.hpp"

#include <fstream>
#include <set>

#include "nonunion/error.hpp"
#include "nonunion/random.hpp"

namespace nonunion {

namespace {

using nlohmann::json;

void reject_unknown(const json& doc, const std::set<std::string>& allowed, const std::string& where) {
    if (!doc.is_object()) fail(ErrorKind::InvalidConfig, where + " must be an object");
    for (const auto& [key, _] : doc.items())
        if (!allowed.contains(key)) fail(ErrorKind::InvalidConfig, "unknown key '" + key + "' in " + where);
}

json logistic_to_json(const LogisticConfig& c) {
    return {{"lambda", c.lambda}, {"tol", c.tol}, {"max_iter", c.max_iter}, {"class_weighting", c.class_weighting}};
}

LogisticConfig logistic_from_json(const json& j) {
    reject_unknown(j, {"lambda", "tol", "max_iter", "class_weighting"}, "logistic config");
    LogisticConfig c;
    c.lambda = j.value("lambda", c.lambda);
    c.tol = j.value("tol", c.tol);
    c.max_iter = j.value("max_iter", c.max_iter);
    c.class_weighting = j.value("class_weighting", c.class_weighting);
    return c;
}

json svm_to_json(const SvmConfig& c) {
    return {{"C", c.C},
            {"kernel", c.kernel == KernelKind::Rbf ? "rbf" : "linear"},
            {"gamma", c.gamma ? json(*c.gamma) : json("scale")},
            {"tol", c.tol},
            {"max_iter", c.max_iter},
            {"class_weighting", c.class_weighting},
            {"probability", c.probability},
            {"platt_folds", c.platt_folds}};
}

SvmConfig svm_from_json(const json& j) {
    reject_unknown(j, {"C", "kernel", "gamma", "tol", "max_iter", "class_weighting", "probability", "platt_folds"},
                   "svm config");
    SvmConfig c;
    c.C = j.value("C", c.C);
    const auto kernel = j.value("kernel", std::string("rbf"));
    if (kernel == "rbf") c.kernel = KernelKind::Rbf;
    else if (kernel == "linear") c.kernel = KernelKind::Linear;
    else fail(ErrorKind::InvalidConfig, "unknown kernel '" + kernel + "'");
    if (j.contains("gamma")) {
        const auto& g = j.at("gamma");
        if (g.is_number()) c.gamma = g.get<double>();
        else if (g != "scale") fail(ErrorKind::InvalidConfig, "gamma must be a number or \"scale\"");
    }
    c.tol = j.value("tol", c.tol);
    c.max_iter = j.value("max_iter", c.max_iter);
    c.class_weighting = j.value("class_weighting", c.class_weighting);
    c.probability = j.value("probability", c.probability);
    c.platt_folds = j.value("platt_folds", c.platt_folds);
    return c;
}

json gbt_to_json(const GbtConfig& c) {
    return {{"n_rounds", c.n_rounds},   {"eta", c.eta}, {"max_depth", c.max_depth}, {"lambda", c.lambda},
            {"min_child_weight", c.min_child_weight}, {"class_weighting", c.class_weighting}};
}

GbtConfig gbt_from_json(const json& j) {
    reject_unknown(j, {"n_rounds", "eta", "max_depth", "lambda", "min_child_weight", "class_weighting"}, "gbt config");
    GbtConfig c;
    c.n_rounds = j.value("n_rounds", c.n_rounds);
    c.eta = j.value("eta", c.eta);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.lambda = j.value("lambda", c.lambda);
    c.min_child_weight = j.value("min_child_weight", c.min_child_weight);
    c.class_weighting = j.value("class_weighting", c.class_weighting);
    return c;
}

}  // namespace

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::Logistic: return "logistic";
        case ModelKind::Svm: return "svm";
        case ModelKind::Gbt: return "gbt";
        case ModelKind::Constant: return "constant";
    }
    return "unknown";
}

ModelKind parse_model_kind(std::string_view text) {
    for (auto k : {ModelKind::Logistic, ModelKind::Svm, ModelKind::Gbt, ModelKind::Constant})
        if (to_string(k) == text) return k;
    fail(ErrorKind::InvalidConfig, "unknown model kind '" + std::string(text) + "'");
}

nlohmann::json ModelSpec::to_json() const {
    json j = {{"name", name}, {"kind", to_string(kind)}, {"shuffle_labels", shuffle_labels}};
    switch (kind) {
        case ModelKind::Logistic: j["params"] = logistic_to_json(logistic); break;
        case ModelKind::Svm: j["params"] = svm_to_json(svm); break;
        case ModelKind::Gbt: j["params"] = gbt_to_json(gbt); break;
        case ModelKind::Constant: j["params"] = {{"probability", constant}}; break;
    }
    return j;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& doc) {
    try {
        reject_unknown(doc, {"name", "kind", "shuffle_labels", "params"}, "model spec");
        ModelSpec s;
        s.kind = parse_model_kind(doc.at("kind").get<std::string>());
        s.name = doc.value("name", std::string(to_string(s.kind)));
        s.shuffle_labels = doc.value("shuffle_labels", false);
        const json params = doc.value("params", json::object());
        switch (s.kind) {
            case ModelKind::Logistic: s.logistic = logistic_from_json(params); break;
            case ModelKind::Svm: s.svm = svm_from_json(params); break;
            case ModelKind::Gbt: s.gbt = gbt_from_json(params); break;
            case ModelKind::Constant:
                reject_unknown(params, {"probability"}, "constant config");
                s.constant = params.value("probability", 0.5);
                if (!(s.constant >= 0.0 && s.constant <= 1.0))
                    fail(ErrorKind::InvalidConfig, "constant probability must lie in [0, 1]");
                break;
        }
        if (s.name.empty()) fail(ErrorKind::InvalidConfig, "model name must not be empty");
        return s;
    } catch (const json::exception& e) {
        fail(ErrorKind::InvalidConfig, std::string("model spec: ") + e.what());
    }
}

ModelVariant train_model(const ModelSpec& spec, const DesignMatrix& x, std::uint64_t seed) {
    const DesignMatrix* fit_on = &x;
    DesignMatrix shuffled;
    if (spec.shuffle_labels) {
        shuffled = x;
        Rng rng(derive_seed(seed, 1));
        rng.shuffle(std::span<int>(shuffled.labels));
        fit_on = &shuffled;
    }
    switch (spec.kind) {
        case ModelKind::Logistic: return train_logistic(*fit_on, spec.logistic);
        case ModelKind::Svm: {
            SvmConfig c = spec.svm;
            c.seed = derive_seed(seed, 2);
            return train_svm(*fit_on, c);
        }
        case ModelKind::Gbt: return train_gbt(*fit_on, spec.gbt);
        case ModelKind::Constant: return ConstantModel{spec.constant};
    }
    fail(ErrorKind::Internal, "unhandled model kind");
}

Pipeline fit_pipeline(const ModelSpec& spec, const Dataset& train, std::uint64_t seed) {
    Pipeline p;
    p.name = spec.name;
    p.transformer = fit_transformer(train);
    p.model = train_model(spec, p.transformer.transform(train), seed);
    return p;
}

ModelKind Pipeline::kind() const {
    return static_cast<ModelKind>(model.index());
}

std::vector<double> Pipeline::predict_proba(const Matrix& x) const {
    return std::visit(
        [&](const auto& m) -> std::vector<double> {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, LinearModel>) return predict_proba_linear(m, x);
            else if constexpr (std::is_same_v<T, SvmModel>) return predict_proba_svm(m, x);
            else if constexpr (std::is_same_v<T, GbtModel>) return predict_proba_gbt(m, x);
            else return std::vector<double>(static_cast<std::size_t>(x.rows()), m.probability);
        },
        model);
}

std::vector<double> Pipeline::predict_proba(const Dataset& data) const {
    return predict_proba(transformer.transform(data).values);
}

nlohmann::json Pipeline::to_json() const {
    json m = std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, ConstantModel>) return {{"format", "nonunion.constant"}, {"probability", v.probability}};
            else return v.to_json();
        },
        model);
    return {{"format", "nonunion.pipeline"},
            {"version", kVersion},
            {"name", name},
            {"kind", to_string(kind())},
            {"transformer", transformer.to_json()},
            {"model", m}};
}

Pipeline Pipeline::from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format") != "nonunion.pipeline" || doc.at("version").get<int>() != kVersion)
            fail(ErrorKind::InvalidArtifact, "not a version-1 pipeline artifact");
        Pipeline p;
        p.name = doc.at("name").get<std::string>();
        p.transformer = FittedTransformer::from_json(doc.at("transformer"));
        const auto& m = doc.at("model");
        switch (parse_model_kind(doc.at("kind").get<std::string>())) {
            case ModelKind::Logistic: p.model = LinearModel::from_json(m); break;
            case ModelKind::Svm: p.model = SvmModel::from_json(m); break;
            case ModelKind::Gbt: p.model = GbtModel::from_json(m); break;
            case ModelKind::Constant: p.model = ConstantModel{m.at("probability").get<double>()}; break;
        }
        return p;
    } catch (const json::exception& e) {
        fail(ErrorKind::InvalidArtifact, std::string("pipeline artifact: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::InvalidConfig) fail(ErrorKind::InvalidArtifact, e.what());
        throw;
    }
}

Pipeline Pipeline::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        fail(ErrorKind::InvalidArtifact, path.string() + ": " + e.what());
    }
    return from_json(doc);
}

void Pipeline::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out << to_json().dump(2) << '\n';
}

}  // namespace nonunion
