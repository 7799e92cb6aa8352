// Serial reference loops against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include "nonunion/calibration.hpp"
#include "nonunion/compare.hpp"
#include "nonunion/gbt.hpp"
#include "nonunion/random.hpp"
#include "nonunion/svm.hpp"
#include "nonunion/synthetic.hpp"

using namespace nonunion;

namespace {

Execution mode(const benchmark::State& state) { return state.range(0) ? Execution::Parallel : Execution::Serial; }

DesignMatrix random_design(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    DesignMatrix x;
    x.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    x.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double v = rng.normal();
            x.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            s += j % 2 ? -v : v;
        }
        x.labels[i] = s + rng.normal() > 0.0;
    }
    x.sample_weights.assign(n, 1.0);
    x.column_names.assign(d, "x");
    return x;
}

void BM_Lowess(benchmark::State& state) {
    Rng rng(1);
    std::vector<double> x(2000), y(2000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(), y[i] = rng.bernoulli(x[i]);
    for (auto _ : state) benchmark::DoNotOptimize(lowess(x, y, {}, mode(state)));
}
BENCHMARK(BM_Lowess)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SvmDecision(benchmark::State& state) {
    const auto x = random_design(600, 30, 2);
    const auto model = train_svm(x, {.probability = false});
    const auto probe = random_design(2000, 30, 3);
    for (auto _ : state) benchmark::DoNotOptimize(decision_function(model, probe.values, mode(state)));
}
BENCHMARK(BM_SvmDecision)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_GbtTraining(benchmark::State& state) {
    const auto x = random_design(800, 40, 4);
    for (auto _ : state)
        benchmark::DoNotOptimize(train_gbt(x, {.n_rounds = 20, .split_search = mode(state)}));
}
BENCHMARK(BM_GbtTraining)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_PairedScores(benchmark::State& state) {
    const auto cohort = generate_synthetic_cohort(400, 5, SyntheticConfig::defaults());
    const auto split = split_dataset(cohort.data, 0.2, 5);
    const auto train = cohort.data.subset(split.train), test = cohort.data.subset(split.test);
    const ResamplePlan plan{.count = 16, .fraction = 0.8, .master_seed = 9};
    const auto resamples = make_resamples(train.size(), plan);
    ModelSpec spec;
    spec.name = "gbt";
    spec.gbt.n_rounds = 20;
    for (auto _ : state)
        benchmark::DoNotOptimize(paired_scores(resamples, plan, train, test, spec, 0.5, mode(state)));
}
BENCHMARK(BM_PairedScores)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
