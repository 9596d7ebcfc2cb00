#ifndef REPSCOPE_STATS_HPP
#define REPSCOPE_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "repscope/error.hpp"

namespace repscope {

struct LayerProfile {
    std::size_t layer = 0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    double whisker_lo = 0.0;
    double whisker_hi = 0.0;
    std::size_t count = 0;
    std::vector<std::pair<std::string, double>> outliers;
};

struct CorrelationResult {
    std::size_t layer = 0;
    std::string covariate_name;
    double r = 0.0;
    std::size_t n = 0;
};

/// Sample Pearson correlation, two-pass with centered sums.
inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        fail(ErrorKind::ShapeMismatch, "pearson inputs differ in length");
    }
    if (x.size() < 3) {
        fail(ErrorKind::InvalidInput, "pearson needs at least 3 points");
    }
    const auto n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        fail(ErrorKind::DegenerateInput, "pearson input has zero variance");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Quantile by linear interpolation between order statistics at position (n - 1) * p.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    const double pos = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/**
 * Five-number summary plus Tukey whiskers: each whisker sits on the farthest datum
 * within 1.5 IQR of the box (falling back to the box edge when no datum qualifies);
 * everything beyond the whiskers is an outlier.
 */
inline LayerProfile boxplot_summary(std::vector<std::pair<std::string, double>> values, std::size_t layer = 0) {
    if (values.empty()) {
        fail(ErrorKind::InvalidInput, "boxplot of an empty set");
    }
    std::sort(values.begin(), values.end(),
              [](const auto& a, const auto& b) { return a.second != b.second ? a.second < b.second : a.first < b.first; });
    std::vector<double> sorted;
    sorted.reserve(values.size());
    for (const auto& [task, v] : values) {
        if (!std::isfinite(v)) {
            fail(ErrorKind::InvalidInput, "non-finite value for task '" + task + "'");
        }
        sorted.push_back(v);
    }

    LayerProfile p;
    p.layer = layer;
    p.count = sorted.size();
    p.min = sorted.front();
    p.max = sorted.back();
    p.q1 = quantile_sorted(sorted, 0.25);
    p.median = quantile_sorted(sorted, 0.5);
    p.q3 = quantile_sorted(sorted, 0.75);
    const double iqr = p.q3 - p.q1;
    const double fence_lo = p.q1 - 1.5 * iqr;
    const double fence_hi = p.q3 + 1.5 * iqr;

    p.whisker_lo = p.q1;
    for (double v : sorted) {
        if (v >= fence_lo) {
            p.whisker_lo = std::min(v, p.q1);
            break;
        }
    }
    p.whisker_hi = p.q3;
    for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) {
        if (*it <= fence_hi) {
            p.whisker_hi = std::max(*it, p.q3);
            break;
        }
    }
    for (const auto& [task, v] : values) {
        if (v < p.whisker_lo || v > p.whisker_hi) {
            p.outliers.emplace_back(task, v);
        }
    }
    return p;
}

/**
 * Pearson r between CKA scores and a per-task covariate over the tasks present in both
 * maps, paired in task-id order.
 */
inline CorrelationResult correlate_cka(const std::map<std::string, double>& cka_by_task,
                                       const std::map<std::string, double>& covariate_by_task,
                                       std::string covariate_name, std::size_t layer = 0) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& [task, score] : cka_by_task) {
        if (auto it = covariate_by_task.find(task); it != covariate_by_task.end()) {
            xs.push_back(score);
            ys.push_back(it->second);
        }
    }
    if (xs.size() < 3) {
        fail(ErrorKind::InvalidInput, "fewer than 3 tasks shared between CKA and covariate '" + covariate_name + "'");
    }
    CorrelationResult result;
    result.layer = layer;
    result.covariate_name = std::move(covariate_name);
    result.n = xs.size();
    result.r = pearson(xs, ys);
    return result;
}

} // namespace repscope

#endif
