#include "nonunion/compare.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "nonunion/error.hpp"
#include "nonunion/metrics.hpp"
#include "nonunion/random.hpp"

namespace nonunion {

std::uint64_t ResamplePlan::seed_for(std::size_t index) const {
    return derive_seed(master_seed, index);
}

nlohmann::json ResamplePlan::to_json() const {
    return {{"count", count}, {"fraction", fraction}, {"master_seed", master_seed}};
}

ResamplePlan ResamplePlan::from_json(const nlohmann::json& doc) {
    ResamplePlan p;
    try {
        p.count = doc.value("count", p.count);
        p.fraction = doc.value("fraction", p.fraction);
        p.master_seed = doc.value("master_seed", p.master_seed);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidPlan, std::string("resample plan: ") + e.what());
    }
    return p;
}

std::vector<std::vector<std::size_t>> make_resamples(std::size_t n, const ResamplePlan& plan) {
    if (plan.count == 0) fail(ErrorKind::InvalidPlan, "resample count must be positive");
    if (!(plan.fraction > 0.0 && plan.fraction <= 1.0)) fail(ErrorKind::InvalidPlan, "resample fraction must lie in (0, 1]");
    // Snap so that e.g. 0.8 * 10 gives 8 despite rounding in the product.
    const auto size = static_cast<std::size_t>(std::floor(plan.fraction * static_cast<double>(n) + 1e-9));
    if (size < 2) fail(ErrorKind::InvalidPlan, "resamples would hold fewer than 2 rows");
    std::vector<std::vector<std::size_t>> sets(plan.count);
    for (std::size_t i = 0; i < plan.count; ++i) {
        Rng rng(plan.seed_for(i));
        sets[i] = rng.sample_without_replacement(n, size);
    }
    return sets;
}

PairedScores paired_scores(std::span<const std::vector<std::size_t>> resamples, const ResamplePlan& plan,
                           const Dataset& train, const Dataset& test, const ModelSpec& spec, double threshold,
                           Execution exec) {
    const std::size_t count = resamples.size();
    std::vector<std::optional<double>> scores(count);
    std::vector<std::string> errors(count);
    for_each_index(count, exec, [&](std::size_t i) {
        try {
            const Dataset part = train.subset(resamples[i]);
            const Pipeline p = fit_pipeline(spec, part, plan.seed_for(i));
            const auto proba = p.predict_proba(test);
            scores[i] = upm(confusion(test.outcomes, proba, threshold));
        } catch (const std::exception& e) {
            errors[i] = std::to_string(i) + ": " + e.what();
        }
    });
    PairedScores out;
    out.upm = std::move(scores);
    for (auto& e : errors)
        if (!e.empty()) out.failures.push_back(std::move(e));
    return out;
}

double normal_sf(double z) {
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

double wilcoxon_exact_p(std::span<const double> ranks, double w_plus) {
    // Ranks are multiples of 1/2, so doubled ranks are integers and the null
    // distribution of 2 W+ is a subset-sum count.
    std::vector<std::size_t> doubled;
    std::size_t total = 0;
    for (double r : ranks) {
        const auto d = static_cast<std::size_t>(std::llround(2.0 * r));
        doubled.push_back(d);
        total += d;
    }
    std::vector<double> dist(total + 1, 0.0), next(total + 1);
    dist[0] = 1.0;
    for (auto d : doubled) {
        for (std::size_t s = 0; s <= total; ++s) next[s] = 0.5 * (dist[s] + (s >= d ? dist[s - d] : 0.0));
        dist.swap(next);
    }
    const auto w = static_cast<std::size_t>(std::llround(2.0 * w_plus));
    double lower = 0.0, upper = 0.0;
    for (std::size_t s = 0; s <= total; ++s) {
        if (s <= w) lower += dist[s];
        if (s >= w) upper += dist[s];
    }
    return std::min(1.0, 2.0 * std::min(lower, upper));
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, std::size_t min_pairs) {
    if (a.size() != b.size()) fail(ErrorKind::LengthMismatch, "paired samples differ in length");
    WilcoxonResult r;
    r.pairs = a.size();
    std::vector<double> diff;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diff.push_back(d);
    }
    if (!a.empty() && diff.empty()) fail(ErrorKind::AllZeroDifferences, "all paired differences are zero");
    if (diff.size() < std::max<std::size_t>(min_pairs, 1))
        fail(ErrorKind::TooFewPairs, std::to_string(diff.size()) + " nonzero differences, need " +
                                         std::to_string(std::max<std::size_t>(min_pairs, 1)));
    const std::size_t n = diff.size();
    r.nonzero = n;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto i, auto j) { return std::abs(diff[i]) < std::abs(diff[j]); });
    std::vector<double> rank(n);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(diff[order[j + 1]]) == std::abs(diff[order[i]])) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    for (std::size_t i = 0; i < n; ++i) (diff[i] > 0 ? r.w_plus : r.w_minus) += rank[i];

    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double dev = r.w_plus - mean;
    const double sign = dev > 0 ? 1.0 : (dev < 0 ? -1.0 : 0.0);
    r.z = var > 0.0 ? (dev - sign * 0.5) / std::sqrt(var) : 0.0;
    r.p_normal = std::min(1.0, 2.0 * normal_sf(std::abs(r.z)));
    if (n <= kExactWilcoxonLimit) r.p_exact = wilcoxon_exact_p(rank, r.w_plus);
    r.p = r.p_exact.value_or(r.p_normal);
    r.effect_size = std::abs(r.z) / std::sqrt(static_cast<double>(r.pairs));
    return r;
}

nlohmann::json WilcoxonResult::to_json() const {
    return {{"pairs", pairs},
            {"nonzero_pairs", nonzero},
            {"w_plus", w_plus},
            {"w_minus", w_minus},
            {"z", z},
            {"p", p},
            {"p_normal", p_normal},
            {"p_exact", p_exact ? nlohmann::json(*p_exact) : nlohmann::json(nullptr)},
            {"effect_size_r", effect_size},
            {"zero_differences", "discarded"},
            {"effect_size_n", "original pair count"}};
}

std::vector<bool> bonferroni(std::span<const double> p_values, double alpha) {
    std::vector<bool> flags;
    const double cut = alpha / static_cast<double>(std::max<std::size_t>(p_values.size(), 1));
    for (double p : p_values) flags.push_back(p < cut);
    return flags;
}

std::vector<EcdfStep> ecdf(std::span<const double> scores) {
    if (scores.empty()) fail(ErrorKind::EmptyInput, "ECDF of an empty sample");
    std::vector<double> s(scores.begin(), scores.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    std::vector<EcdfStep> steps;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i + 1 == s.size() || s[i + 1] != s[i]) steps.push_back({s[i], static_cast<double>(i + 1) / n});
    return steps;
}

void write_ecdf_csv(std::ostream& out, std::span<const EcdfStep> steps) {
    out << "value,fraction\n";
    char buf[32];
    for (const auto& st : steps) {
        auto res = std::to_chars(buf, buf + sizeof buf, st.value);
        out.write(buf, res.ptr - buf);
        out << ',';
        res = std::to_chars(buf, buf + sizeof buf, st.fraction);
        out.write(buf, res.ptr - buf);
        out << '\n';
    }
}

}  // namespace nonunion
