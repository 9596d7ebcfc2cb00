#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "repscope/segment.hpp"

using namespace repscope;

namespace {

std::vector<double> planted(std::size_t b1, std::size_t b2, std::size_t layers, double a, double b, double c) {
    std::vector<double> v;
    for (std::size_t l = 1; l <= layers; ++l) {
        v.push_back(l <= b1 ? a : l <= b2 ? b : c);
    }
    return v;
}

double brute_cost(const std::vector<double>& v, std::size_t b1, std::size_t b2) {
    double total = 0.0;
    for (auto [lo, hi] : {std::pair{std::size_t{0}, b1}, std::pair{b1, b2}, std::pair{b2, v.size()}}) {
        double mean = 0.0;
        for (std::size_t i = lo; i < hi; ++i) mean += v[i];
        mean /= static_cast<double>(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) total += (v[i] - mean) * (v[i] - mean);
    }
    return total;
}

} // namespace

TEST(Segment, ExactPiecewiseSignal) {
    const auto v = planted(9, 15, 32, 0.9, 0.98, 0.95);
    const SegmentationResult s = segment_layers(v);
    EXPECT_EQ(s.b1, 9u);
    EXPECT_EQ(s.b2, 15u);
    EXPECT_EQ(s.layers, 32u);
    EXPECT_EQ(s.fit_score, 0.0);
}

TEST(Segment, ConstantSignalTieBreak) {
    const std::vector<double> v(12, 0.42);
    const SegmentationResult s = segment_layers(v);
    EXPECT_EQ(s.b1, 1u);
    EXPECT_EQ(s.b2, 2u);
    EXPECT_EQ(s.fit_score, 0.0);
}

TEST(Segment, NoisyPlantedRecovery) {
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, 0.005);
        auto v = planted(9, 15, 32, 0.9, 0.98, 0.95);
        for (double& x : v) x += noise(rng);
        const SegmentationResult s = segment_layers(v);
        hits += s.b1 == 9 && s.b2 == 15;
    }
    EXPECT_GE(hits, 95);
}

TEST(Segment, MatchesBruteForceOptimum) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> v(5 + trial % 20);
        for (double& x : v) x = unif(rng);
        const SegmentationResult s = segment_layers(v);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t b1 = 1; b1 + 2 <= v.size(); ++b1) {
            for (std::size_t b2 = b1 + 1; b2 < v.size(); ++b2) {
                best = std::min(best, brute_cost(v, b1, b2));
            }
        }
        EXPECT_NEAR(s.fit_score, best, 1e-12);
        EXPECT_NEAR(brute_cost(v, s.b1, s.b2), best, 1e-12);
    }
}

TEST(Segment, ShiftInvariance) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> noise(0.0, 0.01);
    auto v = planted(6, 13, 20, 0.5, 0.7, 0.6);
    for (double& x : v) x += noise(rng);
    const SegmentationResult base = segment_layers(v);
    for (double c : {-3.0, 0.25, 1000.0}) {
        auto shifted = v;
        for (double& x : shifted) x += c;
        const SegmentationResult s = segment_layers(shifted);
        EXPECT_EQ(s.b1, base.b1);
        EXPECT_EQ(s.b2, base.b2);
    }
}

TEST(Segment, FromCkaDelegatesAndReduces) {
    const auto v = planted(3, 6, 10, 0.2, 0.8, 0.5);
    std::vector<std::vector<double>> singletons;
    for (double x : v) singletons.push_back({x});
    const SegmentationResult direct = segment_layers(v);
    const SegmentationResult via = segment_from_cka(singletons);
    EXPECT_EQ(via.b1, direct.b1);
    EXPECT_EQ(via.b2, direct.b2);

    std::vector<std::vector<double>> skewed;
    for (double x : v) skewed.push_back({x, x, x, x + 50.0});
    const SegmentationResult median = segment_from_cka(skewed, LayerStatistic::Median);
    EXPECT_EQ(median.b1, 3u);
    EXPECT_EQ(median.b2, 6u);
    const SegmentationResult mean = segment_from_cka(skewed, LayerStatistic::Mean);
    EXPECT_EQ(mean.b1, 3u);
    EXPECT_EQ(mean.b2, 6u);
}

TEST(Segment, Errors) {
    EXPECT_THROW(segment_layers(std::vector<double>(4, 1.0)), Error);
    std::vector<std::vector<double>> layers(6, std::vector<double>{0.5});
    layers[2].clear();
    try {
        segment_from_cka(layers);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
    }
}

TEST(Segment, JsonShape) {
    const auto j = to_json(segment_layers(planted(9, 15, 32, 0.9, 0.98, 0.95)));
    EXPECT_EQ(j["shared"], nlohmann::json({1, 9}));
    EXPECT_EQ(j["transition"], nlohmann::json({10, 15}));
    EXPECT_EQ(j["refinement"], nlohmann::json({16, 32}));
}
