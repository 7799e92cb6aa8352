#include "nonunion/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "nonunion/calibration.hpp"
#include "nonunion/classifier.hpp"
#include "nonunion/cohort.hpp"
#include "nonunion/error.hpp"
#include "nonunion/experiments.hpp"
#include "nonunion/metrics.hpp"
#include "nonunion/synthetic.hpp"

namespace nonunion {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    std::string out;
    std::optional<std::uint64_t> seed;
    int verbosity = 0;
};

struct Io {
    std::ostream& out;
    std::ostream& err;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "Experiment config (JSON)");
    cmd->add_option("--set", c.overrides, "Config override key.path=value (repeatable)");
    cmd->add_option("--out", c.out, "Output directory");
    cmd->add_option("--seed", c.seed, "Master seed (overrides the config seed)");
    cmd->add_flag("-v,--verbose", c.verbosity, "Log progress to stderr (repeat for more)");
}

/// Config with --seed applied. `needs_seed` rejects runs where neither the command
/// line nor a config file fixes the seed.
ExperimentConfig resolve_config(const Common& c, bool needs_seed) {
    auto overrides = c.overrides;
    if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
    const bool explicit_seed = c.seed || !c.config.empty() ||
                               std::any_of(overrides.begin(), overrides.end(), [](const auto& o) { return o.rfind("seed=", 0) == 0; });
    if (needs_seed && !explicit_seed) fail(ErrorKind::InvalidConfig, "no seed: pass --seed or a --config that sets one");
    return load_config(c.config, overrides);
}

fs::path require_out(const Common& c) {
    if (c.out.empty()) fail(ErrorKind::InvalidConfig, "--out is required");
    std::error_code ec;
    fs::create_directories(c.out, ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + c.out + ": " + ec.message());
    return c.out;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
    f << text;
}

void write_resolved(const fs::path& dir, const ExperimentConfig& config) {
    write_file(dir / "config.json", config.to_json().dump(2) + "\n");
}

Logger make_logger(const Common& c, std::ostream& err) {
    if (c.verbosity == 0) return {};
    return [&err](const std::string& msg) { err << "[nonunion] " << msg << '\n'; };
}

Dataset load_scoring_data(const std::string& data, const std::string& schema, const Pipeline& p) {
    const FeatureSchema s = schema.empty() ? p.transformer.schema() : FeatureSchema::load(schema);
    return load_dataset(data, s);
}

int cmd_synth(const Common& c, std::optional<std::size_t> n, Io io) {
    const auto config = resolve_config(c, true);
    const fs::path out = require_out(c);
    const std::size_t rows = n.value_or(config.data.synthetic_n.value_or(797));
    const auto cohort = generate_synthetic_cohort(rows, config.seed, config.data.synthetic);
    save_dataset(out / "cohort.csv", cohort.data);
    cohort.data.schema.save(out / "schema.json");
    write_resolved(out, config);
    if (auto log = make_logger(c, io.err))
        log("wrote " + std::to_string(rows) + " rows (incidence " + std::to_string(cohort.data.incidence()) + ") to " +
            out.string());
    return 0;
}

int cmd_split(const Common& c, const std::string& data, const std::string& schema, std::optional<double> fraction, Io io) {
    auto config = resolve_config(c, true);
    const fs::path out = require_out(c);
    Dataset all;
    if (!data.empty()) {
        if (schema.empty()) fail(ErrorKind::InvalidConfig, "--schema is required with --data");
        all = load_dataset(data, FeatureSchema::load(schema));
    } else {
        all = load_source(config);
    }
    if (fraction) config.test_fraction = *fraction;
    const auto split = split_dataset(all, config.test_fraction, config.seed, config.stratified);
    save_dataset(out / "train.csv", all.subset(split.train));
    save_dataset(out / "test.csv", all.subset(split.test));
    all.schema.save(out / "schema.json");
    write_file(out / "split.json", json{{"seed", split.seed},
                                        {"stratified", split.stratified},
                                        {"test_fraction", config.test_fraction},
                                        {"train", split.train},
                                        {"test", split.test}}
                                           .dump(2) + "\n");
    write_resolved(out, config);
    if (auto log = make_logger(c, io.err))
        log("train " + std::to_string(split.train.size()) + ", test " + std::to_string(split.test.size()));
    return 0;
}

int cmd_train(const Common& c, const std::string& data, const std::string& schema, const std::string& model, Io io) {
    const auto config = resolve_config(c, true);
    const fs::path out = require_out(c);
    fs::create_directories(out / "models");
    Dataset train;
    if (!data.empty()) {
        if (schema.empty()) fail(ErrorKind::InvalidConfig, "--schema is required with --data");
        train = load_dataset(data, FeatureSchema::load(schema));
    } else {
        train = prepare_data(config).fit;
    }
    const auto log = make_logger(c, io.err);
    for (std::size_t i = 0; i < config.models.size(); ++i) {
        const auto& spec = config.models[i];
        if (!model.empty() && spec.name != model) continue;
        if (log) log("training " + spec.name + " on " + std::to_string(train.size()) + " rows");
        fit_pipeline(spec, train, model_seed(config, i)).save(out / "models" / (spec.name + ".json"));
    }
    if (!model.empty()) (void)config.model(model);
    write_resolved(out, config);
    return 0;
}

int cmd_evaluate(const std::string& model, const std::string& data, const std::string& schema, double threshold, Io io) {
    const Pipeline p = Pipeline::load(model);
    const Dataset d = load_scoring_data(data, schema, p);
    const auto proba = p.predict_proba(d);
    const auto cm = confusion(d.outcomes, proba, threshold);
    const json doc = {{"model", p.name}, {"kind", to_string(p.kind())}, {"rows", d.size()}, {"threshold", threshold},
                      {"confusion", cm.to_json()}, {"metrics", companion_metrics(cm).to_json()}};
    io.out << doc.dump(2) << '\n';
    return 0;
}

int cmd_sweep(const Common& c, const std::string& model, const std::string& data, const std::string& schema, Io io) {
    const Pipeline p = Pipeline::load(model);
    const Dataset d = load_scoring_data(data, schema, p);
    const auto sweep = sweep_thresholds(d.outcomes, p.predict_proba(d));
    if (c.out.empty()) {
        write_sweep_csv(io.out, sweep);
    } else {
        const fs::path out = require_out(c);
        std::ostringstream s;
        write_sweep_csv(s, sweep);
        write_file(out / ("upm_vs_threshold_" + p.name + ".csv"), s.str());
    }
    return 0;
}

int cmd_calibrate(const Common& c, const std::string& model, const std::string& data, const std::string& schema, Io io) {
    const auto config = resolve_config(c, false);
    const Pipeline p = Pipeline::load(model);
    const Dataset d = load_scoring_data(data, schema, p);
    const auto report = calibration_report(d.outcomes, p.predict_proba(d), config.lowess, config.execution());
    json doc = report.summary_json();
    doc["model"] = p.name;
    if (!c.out.empty()) {
        const fs::path out = require_out(c);
        std::ostringstream s;
        report.write_csv(s);
        write_file(out / ("calibration_" + p.name + ".csv"), s.str());
    }
    io.out << doc.dump(2) << '\n';
    return 0;
}

int cmd_compare(const Common& c, Io io) {
    const auto config = resolve_config(c, true);
    const auto log = make_logger(c, io.err);
    if (log) log("preparing data");
    const Partition data = prepare_data(config);
    if (log) log("running " + std::to_string(config.comparison.plan.count) + " resamples per model");
    const ComparisonRun run = run_comparison(config, data);
    if (!c.out.empty()) {
        const fs::path out = require_out(c);
        fs::create_directories(out / "plots");
        for (std::size_t i = 0; i < run.names.size(); ++i) {
            std::vector<double> defined;
            for (const auto& v : run.scores[i].upm)
                if (v) defined.push_back(*v);
            if (defined.empty()) continue;
            std::ostringstream s;
            write_ecdf_csv(s, ecdf(defined));
            write_file(out / "plots" / ("ecdf_" + run.names[i] + ".csv"), s.str());
        }
        write_resolved(out, config);
    }
    io.out << run.to_json().dump(2) << '\n';
    return 0;
}

int cmd_ablate(const Common& c, Io io) {
    const auto config = resolve_config(c, true);
    const auto log = make_logger(c, io.err);
    const Partition data = prepare_data(config);
    if (log) log("ablation on " + std::to_string(data.train.size()) + " training rows");
    const AblationRun run = run_ablation(config, data);
    if (!c.out.empty()) {
        const fs::path out = require_out(c);
        fs::create_directories(out / "plots");
        std::ostringstream s;
        run.write_csv(s);
        write_file(out / "plots" / "learning_curve.csv", s.str());
        write_resolved(out, config);
    }
    io.out << run.to_json().dump(2) << '\n';
    return 0;
}

int cmd_run_all(const Common& c, bool skip_comparison, bool skip_ablation, Io io) {
    const auto config = resolve_config(c, true);
    const fs::path out = require_out(c);
    RunAllOptions opts;
    opts.comparison = !skip_comparison;
    opts.ablation = !skip_ablation;
    run_all(config, out, opts, make_logger(c, io.err));
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Non-union healing risk models: training, evaluation and comparison studies", "nonunion"};
    app.require_subcommand(1);

    Common common;
    std::optional<std::size_t> synth_n;
    std::string data, schema, model, model_path;
    std::optional<double> test_fraction;
    double threshold = 0.5;
    bool skip_comparison = false, skip_ablation = false;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort (cohort.csv + schema.json)");
    add_common(synth, common);
    synth->add_option("--n", synth_n, "Number of patients");

    auto* split = app.add_subcommand("split", "Stratified train/test split");
    add_common(split, common);
    split->add_option("--data", data, "Cohort CSV");
    split->add_option("--schema", schema, "Schema JSON");
    split->add_option("--test-fraction", test_fraction, "Test fraction (default from config, 0.2)");

    auto* train = app.add_subcommand("train", "Fit transformer + models and write models/<name>.json");
    add_common(train, common);
    train->add_option("--data", data, "Training CSV (default: fit partition of the configured data)");
    train->add_option("--schema", schema, "Schema JSON");
    train->add_option("--model", model, "Train only the model with this name");

    auto* evaluate = app.add_subcommand("evaluate", "Score a dataset with a model artifact; prints JSON");
    add_common(evaluate, common);
    evaluate->add_option("--model", model_path, "Model artifact")->required();
    evaluate->add_option("--data", data, "CSV to score")->required();
    evaluate->add_option("--schema", schema, "Schema JSON (default: the artifact's schema)");
    evaluate->add_option("--threshold", threshold, "Decision threshold (predict positive when p > threshold)")
        ->check(CLI::Range(0.0, 1.0));

    auto* sweep = app.add_subcommand("sweep", "Metrics over thresholds 0.00..1.00 as CSV");
    add_common(sweep, common);
    sweep->add_option("--model", model_path, "Model artifact")->required();
    sweep->add_option("--data", data, "CSV to score")->required();
    sweep->add_option("--schema", schema, "Schema JSON (default: the artifact's schema)");

    auto* compare = app.add_subcommand("compare", "Resampled pairwise model comparison; prints JSON");
    add_common(compare, common);

    auto* calibrate = app.add_subcommand("calibrate", "Calibration odds ratio and LOWESS curve");
    add_common(calibrate, common);
    calibrate->add_option("--model", model_path, "Model artifact")->required();
    calibrate->add_option("--data", data, "CSV to score")->required();
    calibrate->add_option("--schema", schema, "Schema JSON (default: the artifact's schema)");

    auto* ablate = app.add_subcommand("ablate", "Training-fraction learning curve; prints JSON");
    add_common(ablate, common);

    auto* run_all_cmd = app.add_subcommand("run-all", "Full study into the output directory");
    add_common(run_all_cmd, common);
    run_all_cmd->add_flag("--skip-comparison", skip_comparison, "Do not run the resampled comparison");
    run_all_cmd->add_flag("--skip-ablation", skip_ablation, "Do not run the ablation");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        app.exit(e, out, err);
        return 1;
    }

    Io io{out, err};
    try {
        if (*synth) return cmd_synth(common, synth_n, io);
        if (*split) return cmd_split(common, data, schema, test_fraction, io);
        if (*train) return cmd_train(common, data, schema, model, io);
        if (*evaluate) return cmd_evaluate(model_path, data, schema, threshold, io);
        if (*sweep) return cmd_sweep(common, model_path, data, schema, io);
        if (*compare) return cmd_compare(common, io);
        if (*calibrate) return cmd_calibrate(common, model_path, data, schema, io);
        if (*ablate) return cmd_ablate(common, io);
        if (*run_all_cmd) return cmd_run_all(common, skip_comparison, skip_ablation, io);
    } catch (const CellError& e) {
        err << json{{"error", to_string(e.kind())}, {"message", e.what()}, {"row", e.row()}, {"column", e.column()}}.dump()
            << '\n';
        return static_cast<int>(category_of(e.kind()));
    } catch (const Error& e) {
        err << json{{"error", to_string(e.kind())}, {"message", e.what()}}.dump() << '\n';
        return static_cast<int>(category_of(e.kind()));
    } catch (const std::exception& e) {
        err << json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
        return 3;
    }
    return 1;
}

}  // namespace nonunion
