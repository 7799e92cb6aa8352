#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>

#include "nonunion/cli.hpp"
#include "support.hpp"

using namespace nonunion;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth, split, train, evaluate, sweep, calibrate") {
    const auto dir = testing::scratch_dir("cli_flow");
    const auto s = (dir / "synth").string(), sp = (dir / "split").string(), tr = (dir / "train").string();

    auto r = run({"synth", "--n", "240", "--seed", "3", "--out", s});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "synth" / "cohort.csv"));
    CHECK(fs::exists(dir / "synth" / "schema.json"));
    CHECK(nlohmann::json::parse(slurp(dir / "synth" / "config.json"))["seed"] == 3);
    const auto first = slurp(dir / "synth" / "cohort.csv");
    REQUIRE(run({"synth", "--n", "240", "--seed", "3", "--out", s}).code == 0);
    CHECK(slurp(dir / "synth" / "cohort.csv") == first);

    r = run({"split", "--data", s + "/cohort.csv", "--schema", s + "/schema.json", "--seed", "3", "--out", sp});
    REQUIRE(r.code == 0);
    const auto split = nlohmann::json::parse(slurp(dir / "split" / "split.json"));
    CHECK(split["test"].size() == 48);
    CHECK(split["train"].size() == 192);

    r = run({"train", "--data", sp + "/train.csv", "--schema", sp + "/schema.json", "--seed", "3", "--model", "logistic",
             "--out", tr});
    REQUIRE(r.code == 0);
    const auto model = tr + "/models/logistic.json";
    REQUIRE(fs::exists(model));
    CHECK_FALSE(fs::exists(dir / "train" / "models" / "gbt.json"));

    r = run({"evaluate", "--model", model, "--data", sp + "/test.csv", "--threshold", "0.4"});
    REQUIRE(r.code == 0);
    const auto ev = nlohmann::json::parse(r.out);
    CHECK(ev["rows"] == 48);
    CHECK(ev["threshold"] == 0.4);
    CHECK(ev["kind"] == "logistic");
    const auto& cm = ev["confusion"];
    CHECK(cm["tp"].get<int>() + cm["fp"].get<int>() + cm["tn"].get<int>() + cm["fn"].get<int>() == 48);

    r = run({"sweep", "--model", model, "--data", sp + "/test.csv"});
    REQUIRE(r.code == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 102);

    r = run({"calibrate", "--model", model, "--data", sp + "/test.csv", "--out", tr});
    REQUIRE(r.code == 0);
    CHECK(nlohmann::json::parse(r.out).contains("odds_ratio"));
    CHECK(fs::exists(dir / "train" / "calibration_logistic.csv"));
}

TEST_CASE("exit codes") {
    const auto dir = testing::scratch_dir("cli_codes");
    CHECK(run({}).code == 1);
    CHECK(run({"synth", "--bogus"}).code == 1);
    CHECK(run({"--help"}).code == 0);

    auto r = run({"synth", "--out", (dir / "noseed").string()});
    CHECK(r.code == 1);
    CHECK(nlohmann::json::parse(r.err)["error"] == "InvalidConfig");
    CHECK(run({"synth", "--seed", "1", "--set", "nothing=1", "--out", (dir / "x").string()}).code == 1);
    CHECK(run({"evaluate", "--model", (dir / "absent.json").string(), "--data", "x.csv"}).code == 1);

    REQUIRE(run({"synth", "--n", "60", "--seed", "2", "--out", (dir / "s").string()}).code == 0);
    const auto cohort = slurp(dir / "s" / "cohort.csv");
    const auto second_line_end = cohort.find('\n', cohort.find('\n') + 1);
    const auto rows = std::regex_replace(cohort.substr(0, second_line_end + 1), std::regex("\\d{4}-\\d{2}-\\d{2}"),
                                         "2010-02-30", std::regex_constants::format_first_only);
    std::ofstream(dir / "bad.csv") << rows;
    r = run({"split", "--data", (dir / "bad.csv").string(), "--schema", (dir / "s" / "schema.json").string(), "--seed",
             "2", "--out", (dir / "bad").string()});
    CHECK(r.code == 2);
    CHECK(nlohmann::json::parse(r.err).contains("row"));
}

}
