#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nonunion/classifier.hpp"
#include "nonunion/cohort.hpp"
#include "nonunion/parallel.hpp"

namespace nonunion {

struct ResamplePlan {
    std::size_t count = 300;
    double fraction = 0.8;
    std::uint64_t master_seed = 0;

    std::uint64_t seed_for(std::size_t index) const;
    nlohmann::json to_json() const;
    static ResamplePlan from_json(const nlohmann::json& doc);
};

/// `count` sorted index sets of size floor(fraction * n), each drawn without replacement.
std::vector<std::vector<std::size_t>> make_resamples(std::size_t n, const ResamplePlan& plan);

/// UPM on `test` of a pipeline fitted on each resample of `train`. Failed fits and
/// undefined UPMs are nullopt; the batch never aborts.
struct PairedScores {
    std::vector<std::optional<double>> upm;
    std::vector<std::string> failures;  // one entry per failed resample, "index: message"
};

PairedScores paired_scores(std::span<const std::vector<std::size_t>> resamples, const ResamplePlan& plan,
                           const Dataset& train, const Dataset& test, const ModelSpec& spec, double threshold,
                           Execution exec = Execution::Parallel);

struct WilcoxonResult {
    std::size_t pairs = 0;     // original pair count N
    std::size_t nonzero = 0;   // n after discarding zero differences
    double w_plus = 0.0;
    double w_minus = 0.0;
    double z = 0.0;            // signed: positive when a tends to exceed b
    double p_normal = 1.0;
    std::optional<double> p_exact;
    double p = 1.0;            // exact when available, else normal
    double effect_size = 0.0;  // |Z| / sqrt(N)

    nlohmann::json to_json() const;
};

constexpr std::size_t kExactWilcoxonLimit = 25;

/// Differences a - b; zeros discarded; average ranks for ties; tie-corrected normal
/// approximation with continuity correction; exact null distribution when n <= 25.
/// Throws TooFewPairs when fewer than `min_pairs` nonzero differences remain.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, std::size_t min_pairs = 5);

/// Two-sided exact p-value of W+ = `w_plus` given the (possibly tied) absolute ranks.
double wilcoxon_exact_p(std::span<const double> ranks, double w_plus);

/// Standard normal upper-tail probability.
double normal_sf(double z);

std::vector<bool> bonferroni(std::span<const double> p_values, double alpha = 0.05);

struct EcdfStep {
    double value = 0.0;
    double fraction = 0.0;
};
std::vector<EcdfStep> ecdf(std::span<const double> scores);
void write_ecdf_csv(std::ostream& out, std::span<const EcdfStep> steps);

}  // namespace nonunion
