#ifndef REPSCOPE_SEGMENT_HPP
#define REPSCOPE_SEGMENT_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "json.hpp"

#include "repscope/error.hpp"
#include "repscope/stats.hpp"

namespace repscope {

/// Layer ranges are 1-based and inclusive: shared [1, b1], transition [b1+1, b2], refinement [b2+1, L].
struct SegmentationResult {
    std::size_t layers = 0;
    std::size_t b1 = 0;
    std::size_t b2 = 0;
    double fit_score = 0.0;
};

enum class LayerStatistic { Median, Mean };

/**
 * Best three-piece constant fit to a per-layer signal: exhaustive search over the
 * two change points minimizing the within-segment sum of squared deviations.
 * Segment costs come from prefix sums, so the search is O(L^2). Ties keep the
 * smallest b1, then the smallest b2.
 */
inline SegmentationResult segment_layers(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 5) {
        fail(ErrorKind::InvalidInput, "segmentation needs at least 5 layers");
    }
    // Shift by the first value so the prefix sums carry no common offset.
    const double offset = values[0];
    std::vector<double> sum(n + 1, 0.0);
    std::vector<double> sq(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(values[i])) {
            fail(ErrorKind::InvalidInput, "non-finite layer value");
        }
        const double v = values[i] - offset;
        sum[i + 1] = sum[i] + v;
        sq[i + 1] = sq[i] + v * v;
    }
    // Sum of squared deviations over layers [lo, hi) (0-based, half open).
    auto cost = [&](std::size_t lo, std::size_t hi) {
        const double s = sum[hi] - sum[lo];
        const double c = sq[hi] - sq[lo] - s * s / static_cast<double>(hi - lo);
        return c > 0.0 ? c : 0.0;
    };

    // Candidates closer than this to the incumbent count as ties.
    const double tie = 1e-12 * cost(0, n);

    SegmentationResult best;
    best.layers = n;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t b1 = 1; b1 + 2 <= n; ++b1) {
        for (std::size_t b2 = b1 + 1; b2 + 1 <= n; ++b2) {
            const double total = cost(0, b1) + cost(b1, b2) + cost(b2, n);
            if (total < best_cost - tie) {
                best.b1 = b1;
                best.b2 = b2;
                best_cost = total;
            }
        }
    }

    // Report the residual from a direct two-pass sum rather than the prefix-sum difference.
    auto direct = [&](std::size_t lo, std::size_t hi) {
        double mean = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            mean += values[i] - offset;
        }
        mean /= static_cast<double>(hi - lo);
        double ss = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            const double d = values[i] - offset - mean;
            ss += d * d;
        }
        return ss;
    };
    best.fit_score = direct(0, best.b1) + direct(best.b1, best.b2) + direct(best.b2, n);
    return best;
}

/// Reduces each layer's task scores to one statistic and segments the result.
inline SegmentationResult segment_from_cka(const std::vector<std::vector<double>>& per_layer_scores,
                                           LayerStatistic statistic = LayerStatistic::Median) {
    std::vector<double> reduced;
    reduced.reserve(per_layer_scores.size());
    for (std::size_t layer = 0; layer < per_layer_scores.size(); ++layer) {
        const auto& scores = per_layer_scores[layer];
        if (scores.empty()) {
            fail(ErrorKind::InvalidInput, "layer " + std::to_string(layer + 1) + " has no task scores");
        }
        if (statistic == LayerStatistic::Mean) {
            double s = 0.0;
            for (double v : scores) {
                s += v;
            }
            reduced.push_back(s / static_cast<double>(scores.size()));
        } else {
            std::vector<double> sorted = scores;
            std::sort(sorted.begin(), sorted.end());
            reduced.push_back(quantile_sorted(sorted, 0.5));
        }
    }
    return segment_layers(reduced);
}

inline nlohmann::json to_json(const SegmentationResult& s) {
    return nlohmann::json{{"shared", {1, s.b1}},
                          {"transition", {s.b1 + 1, s.b2}},
                          {"refinement", {s.b2 + 1, s.layers}},
                          {"fit_score", s.fit_score}};
}

} // namespace repscope

#endif
