#include "nonunion/calibration.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <string>

#include "nonunion/error.hpp"

namespace nonunion {

namespace {

double tricube(double u) {
    if (u >= 1.0) return 0.0;
    const double t = 1.0 - u * u * u;
    return t * t * t;
}

double bisquare(double u) {
    if (std::abs(u) >= 1.0) return 0.0;
    const double t = 1.0 - u * u;
    return t * t;
}

double median(std::vector<double> v) {
    const std::size_t n = v.size();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (n % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(v.begin(), mid);
    return lower + (upper - lower) / 2.0;
}

struct Window {
    std::size_t lo = 0;
    std::size_t hi = 0;  // inclusive
    double radius = 0.0;
};

/// All points within the k-th nearest distance of xs[i]; xs sorted ascending.
Window neighbourhood(std::span<const double> xs, std::size_t i, std::size_t k) {
    const std::size_t n = xs.size();
    const double xi = xs[i];
    std::size_t lo = i, hi = i;
    for (std::size_t count = 1; count < k; ++count) {
        if (lo > 0 && (hi + 1 == n || xi - xs[lo - 1] <= xs[hi + 1] - xi)) --lo;
        else ++hi;
    }
    const double h = std::max(xi - xs[lo], xs[hi] - xi);
    while (lo > 0 && xi - xs[lo - 1] <= h) --lo;
    while (hi + 1 < n && xs[hi + 1] - xi <= h) ++hi;
    return {lo, hi, h};
}

/// Weighted local linear fit at xs[i]; sums are centred on the window's first
/// point so constant and linear data are reproduced without drift.
double local_fit(std::span<const double> xs, std::span<const double> ys, std::span<const double> robust, std::size_t i,
                 const Window& win, bool use_robust) {
    const double xi = xs[i];
    const double x0 = xs[win.lo], y0 = ys[win.lo];
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t j = win.lo; j <= win.hi; ++j) {
        double w = win.radius > 0.0 ? tricube(std::abs(xs[j] - xi) / win.radius) : 1.0;
        if (use_robust) w *= robust[j];
        sw += w;
        sx += w * (xs[j] - x0);
        sy += w * (ys[j] - y0);
    }
    if (!(sw > 0.0)) return local_fit(xs, ys, robust, i, win, false);
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t j = win.lo; j <= win.hi; ++j) {
        double w = win.radius > 0.0 ? tricube(std::abs(xs[j] - xi) / win.radius) : 1.0;
        if (use_robust) w *= robust[j];
        const double dx = xs[j] - x0 - mx;
        sxx += w * dx * dx;
        sxy += w * dx * (ys[j] - y0 - my);
    }
    const double scale = win.radius > 0.0 ? win.radius : 1.0;
    if (sxx <= 1e-12 * sw * scale * scale) return y0 + my;
    return y0 + my + (sxy / sxx) * (xi - x0 - mx);
}

}  // namespace

std::vector<double> lowess(std::span<const double> x, std::span<const double> y, const LowessConfig& config,
                           Execution exec) {
    if (x.size() != y.size()) fail(ErrorKind::LengthMismatch, "x and y differ in length");
    const std::size_t n = x.size();
    if (n < 3) fail(ErrorKind::TooFewPoints, "LOWESS needs at least 3 points");
    if (!(config.frac > 0.0 && config.frac <= 1.0)) fail(ErrorKind::InvalidFraction, "frac must lie in (0, 1]");
    if (config.robust_iters < 0) fail(ErrorKind::InvalidConfig, "robust_iters must be non-negative");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]); });
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = x[order[i]], ys[i] = y[order[i]];

    const auto k = std::min<std::size_t>(
        n, std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(config.frac * static_cast<double>(n) - 1e-9))));
    std::vector<Window> windows(n);
    for_each_index(n, exec, [&](std::size_t i) { windows[i] = neighbourhood(xs, i, k); });

    std::vector<double> robust(n, 1.0), fit(n), residual(n);
    for (int iter = 0; iter <= config.robust_iters; ++iter) {
        for_each_index(n, exec, [&](std::size_t i) { fit[i] = local_fit(xs, ys, robust, i, windows[i], iter > 0); });
        if (iter == config.robust_iters) break;
        for (std::size_t i = 0; i < n; ++i) residual[i] = std::abs(ys[i] - fit[i]);
        const double s = median(residual);
        if (!(s > 0.0)) break;
        for (std::size_t i = 0; i < n; ++i) robust[i] = bisquare(residual[i] / (6.0 * s));
    }

    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[order[i]] = fit[i];
    return out;
}

double calibration_odds_ratio(std::span<const int> labels, std::span<const double> probabilities) {
    if (labels.size() != probabilities.size()) fail(ErrorKind::LengthMismatch, "labels and probabilities differ in length");
    if (labels.empty()) fail(ErrorKind::EmptyInput, "no predictions");
    double sy = 0.0, sp = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) sy += labels[i] ? 1.0 : 0.0, sp += probabilities[i];
    const double n = static_cast<double>(labels.size());
    const double my = sy / n, mp = sp / n;
    if (!(my > 0.0 && my < 1.0)) fail(ErrorKind::DegenerateMean, "mean outcome must lie strictly between 0 and 1");
    if (!(mp > 0.0 && mp < 1.0)) fail(ErrorKind::DegenerateMean, "mean prediction must lie strictly between 0 and 1");
    return (mp * (1.0 - my)) / ((1.0 - mp) * my);
}

CalibrationReport calibration_report(std::span<const int> labels, std::span<const double> probabilities,
                                     const LowessConfig& config, Execution exec) {
    CalibrationReport r;
    r.odds_ratio = calibration_odds_ratio(labels, probabilities);
    const std::size_t n = labels.size();
    std::vector<double> yd(n);
    double sy = 0.0, sp = 0.0;
    for (std::size_t i = 0; i < n; ++i) yd[i] = labels[i] ? 1.0 : 0.0, sy += yd[i], sp += probabilities[i];
    r.mean_observed = sy / static_cast<double>(n);
    r.mean_predicted = sp / static_cast<double>(n);
    const auto smooth = lowess(probabilities, yd, config, exec);
    r.points.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        r.points[i] = {probabilities[i], labels[i] ? 1 : 0, smooth[i], std::clamp(smooth[i], 0.0, 1.0)};
    std::stable_sort(r.points.begin(), r.points.end(), [](const auto& a, const auto& b) {
        return a.predicted < b.predicted || (a.predicted == b.predicted && a.outcome < b.outcome);
    });
    return r;
}

nlohmann::json CalibrationReport::summary_json() const {
    return {{"odds_ratio", odds_ratio}, {"mean_predicted", mean_predicted}, {"mean_observed", mean_observed},
            {"points", points.size()}};
}

void CalibrationReport::write_csv(std::ostream& out) const {
    out << "predicted,outcome,smoothed_raw,smoothed_clamped\n";
    char buf[32];
    auto put = [&](double v) {
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        out.write(buf, res.ptr - buf);
    };
    for (const auto& p : points) {
        put(p.predicted);
        out << ',' << p.outcome << ',';
        put(p.smoothed_raw);
        out << ',';
        put(p.smoothed);
        out << '\n';
    }
}

}  // namespace nonunion
