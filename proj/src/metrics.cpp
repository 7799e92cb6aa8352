#include "nonunion/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

#include "nonunion/error.hpp"

namespace nonunion {

namespace {

Metric ratio(double num, double den) {
    if (den == 0.0) return std::nullopt;
    return num / den;
}

nlohmann::json metric_json(const Metric& m) {
    return m ? nlohmann::json(*m) : nlohmann::json(nullptr);
}

void check_inputs(std::span<const int> labels, std::span<const double> probabilities) {
    if (labels.size() != probabilities.size())
        fail(ErrorKind::LengthMismatch, "labels (" + std::to_string(labels.size()) + ") and probabilities (" +
                                            std::to_string(probabilities.size()) + ") differ in length");
    for (double p : probabilities)
        if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::InvalidConfig, "probability outside [0, 1]");
}

std::vector<double> candidates(std::span<const double> probabilities) {
    std::vector<double> c(probabilities.begin(), probabilities.end());
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    return c;
}

void write_metric(std::ostream& out, const Metric& m) {
    if (m) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof buf, *m);
        out.write(buf, res.ptr - buf);
    }
}

}  // namespace

nlohmann::json ConfusionMatrix::to_json() const {
    return {{"threshold", threshold}, {"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}};
}

nlohmann::json MetricReport::to_json() const {
    return {{"upm", metric_json(upm)},
            {"mcc", metric_json(mcc)},
            {"sensitivity", metric_json(sensitivity)},
            {"specificity", metric_json(specificity)},
            {"precision", metric_json(precision)},
            {"npv", metric_json(npv)}};
}

ConfusionMatrix confusion(std::span<const int> labels, std::span<const double> probabilities, double threshold) {
    check_inputs(labels, probabilities);
    ConfusionMatrix cm;
    cm.threshold = threshold;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool predicted = probabilities[i] > threshold;
        if (labels[i]) (predicted ? cm.tp : cm.fn) += 1;
        else (predicted ? cm.fp : cm.tn) += 1;
    }
    return cm;
}

Metric upm(const ConfusionMatrix& cm) {
    if (cm.total() == 0) fail(ErrorKind::EmptyMatrix, "confusion matrix is empty");
    const double tp = static_cast<double>(cm.tp), tn = static_cast<double>(cm.tn);
    const double fp = static_cast<double>(cm.fp), fn = static_cast<double>(cm.fn);
    return ratio(4.0 * tp * tn, 4.0 * tp * tn + (tp + tn) * (fp + fn));
}

Metric upm_harmonic(const ConfusionMatrix& cm) {
    const auto r = companion_metrics(cm);
    const Metric parts[] = {r.precision, r.sensitivity, r.specificity, r.npv};
    double inv = 0.0;
    for (const auto& m : parts) {
        if (!m || *m <= 0.0) return std::nullopt;
        inv += 1.0 / *m;
    }
    return 4.0 / inv;
}

MetricReport companion_metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) fail(ErrorKind::EmptyMatrix, "confusion matrix is empty");
    const double tp = static_cast<double>(cm.tp), tn = static_cast<double>(cm.tn);
    const double fp = static_cast<double>(cm.fp), fn = static_cast<double>(cm.fn);
    MetricReport r;
    r.upm = upm(cm);
    r.sensitivity = ratio(tp, tp + fn);
    r.specificity = ratio(tn, tn + fp);
    r.precision = ratio(tp, tp + fp);
    r.npv = ratio(tn, tn + fn);
    const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (den > 0.0) r.mcc = std::clamp((tp * tn - fp * fn) / std::sqrt(den), -1.0, 1.0);
    return r;
}

std::vector<double> default_threshold_grid() {
    std::vector<double> grid(101);
    for (int i = 0; i <= 100; ++i) grid[static_cast<std::size_t>(i)] = i / 100.0;
    return grid;
}

std::vector<SweepPoint> sweep_thresholds(std::span<const int> labels, std::span<const double> probabilities,
                                         std::span<const double> grid) {
    check_inputs(labels, probabilities);
    std::vector<SweepPoint> out;
    out.reserve(grid.size());
    for (double t : grid) {
        SweepPoint pt;
        pt.threshold = t;
        pt.cm = confusion(labels, probabilities, t);
        pt.metrics = companion_metrics(pt.cm);
        out.push_back(pt);
    }
    return out;
}

std::vector<SweepPoint> sweep_thresholds(std::span<const int> labels, std::span<const double> probabilities) {
    const auto grid = default_threshold_grid();
    return sweep_thresholds(labels, probabilities, grid);
}

double min_threshold_for_sensitivity(std::span<const int> labels, std::span<const double> probabilities, double target) {
    check_inputs(labels, probabilities);
    std::size_t positives = 0;
    for (int y : labels) positives += y ? 1 : 0;
    if (positives == 0) fail(ErrorKind::Unachievable, "no positive samples; sensitivity is undefined");

    // Sensitivity at t counts positives with p > t, so it only falls as t grows.
    auto c = candidates(probabilities);
    c.insert(c.begin(), 0.0);
    c.erase(std::unique(c.begin(), c.end()), c.end());
    std::vector<double> pos;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i]) pos.push_back(probabilities[i]);
    std::sort(pos.begin(), pos.end());
    for (auto it = c.rbegin(); it != c.rend(); ++it) {
        const auto above = static_cast<std::size_t>(pos.end() - std::upper_bound(pos.begin(), pos.end(), *it));
        if (static_cast<double>(above) / static_cast<double>(positives) >= target) return *it;
    }
    fail(ErrorKind::Unachievable, "no threshold reaches sensitivity " + std::to_string(target) +
                                      " (positives scored exactly 0 are never predicted positive)");
}

double threshold_for_specificity(std::span<const int> labels, std::span<const double> probabilities, double target) {
    check_inputs(labels, probabilities);
    std::vector<double> neg;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (!labels[i]) neg.push_back(probabilities[i]);
    if (neg.empty()) fail(ErrorKind::Unachievable, "no negative samples; specificity is undefined");
    std::sort(neg.begin(), neg.end());
    auto c = candidates(probabilities);
    c.push_back(1.0);
    for (double t : c) {
        const auto at_or_below = static_cast<std::size_t>(std::upper_bound(neg.begin(), neg.end(), t) - neg.begin());
        if (static_cast<double>(at_or_below) / static_cast<double>(neg.size()) >= target) return t;
    }
    fail(ErrorKind::Unachievable, "no threshold reaches specificity " + std::to_string(target));
}

void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> sweep) {
    out << "threshold,upm,sensitivity,specificity,precision,npv\n";
    for (const auto& pt : sweep) {
        write_metric(out, pt.threshold);
        for (const auto* m : {&pt.metrics.upm, &pt.metrics.sensitivity, &pt.metrics.specificity, &pt.metrics.precision,
                              &pt.metrics.npv}) {
            out << ',';
            write_metric(out, *m);
        }
        out << '\n';
    }
}

}  // namespace nonunion
