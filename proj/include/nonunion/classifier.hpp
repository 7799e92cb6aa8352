#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "nonunion/gbt.hpp"
#include "nonunion/logistic.hpp"
#include "nonunion/preprocess.hpp"
#include "nonunion/svm.hpp"

namespace nonunion {

enum class ModelKind { Logistic, Svm, Gbt, Constant };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

/// A trainable model description. `shuffle_labels` permutes the training labels
/// before fitting, giving a control with the same capacity but no signal.
struct ModelSpec {
    std::string name;
    ModelKind kind = ModelKind::Gbt;
    LogisticConfig logistic;
    SvmConfig svm;
    GbtConfig gbt;
    double constant = 0.5;
    bool shuffle_labels = false;

    nlohmann::json to_json() const;
    static ModelSpec from_json(const nlohmann::json& doc);
};

struct ConstantModel {
    double probability = 0.5;
};

using ModelVariant = std::variant<LinearModel, SvmModel, GbtModel, ConstantModel>;

/// Transformer plus trained model: everything needed to score raw records.
struct Pipeline {
    static constexpr int kVersion = 1;

    std::string name;
    FittedTransformer transformer;
    ModelVariant model;

    ModelKind kind() const;
    std::vector<double> predict_proba(const Dataset& data) const;
    std::vector<double> predict_proba(const Matrix& x) const;

    nlohmann::json to_json() const;
    static Pipeline from_json(const nlohmann::json& doc);
    static Pipeline load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

ModelVariant train_model(const ModelSpec& spec, const DesignMatrix& x, std::uint64_t seed);

/// Fits the transformer on `train` and the model on its encoding. `seed` drives the
/// label shuffle and any model-internal randomness.
Pipeline fit_pipeline(const ModelSpec& spec, const Dataset& train, std::uint64_t seed);

}  // namespace nonunion
