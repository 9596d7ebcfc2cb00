#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "repscope/tsne.hpp"
#include "test_util.hpp"

using namespace repscope;
using repscope::testing::gaussian;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::InvalidInput;
}

/// Two Gaussian blobs separated by `separation` along the first axis; labels 0/1.
RowMatrix two_blobs(std::size_t per_cluster, std::size_t dims, double separation, std::mt19937_64& rng,
                    std::vector<int>& truth) {
    RowMatrix x = gaussian(2 * per_cluster, dims, rng);
    truth.assign(2 * per_cluster, 0);
    for (std::size_t i = per_cluster; i < 2 * per_cluster; ++i) {
        x(static_cast<Eigen::Index>(i), 0) += separation;
        truth[i] = 1;
    }
    return x;
}

double row_entropy(const RowMatrix& p, Eigen::Index i) {
    double h = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        if (p(i, j) > 0.0) h -= p(i, j) * std::log(p(i, j));
    }
    return h;
}

} // namespace

TEST(Affinities, RegularSimplexIsUniform) {
    const DenseMatrix simplex(RowMatrix::Identity(4, 4));
    const RowMatrix p = perplexity_affinities(simplex, 2.0);
    for (Eigen::Index i = 0; i < 4; ++i) {
        for (Eigen::Index j = 0; j < 4; ++j) {
            EXPECT_NEAR(p(i, j), i == j ? 0.0 : 1.0 / 12.0, 1e-15);
        }
    }
}

TEST(Affinities, CalibratedToPerplexity) {
    std::mt19937_64 rng(1);
    const DenseMatrix x(gaussian(120, 8, rng));
    for (double perplexity : {5.0, 15.0, 30.0}) {
        const ConditionalAffinities c = conditional_affinities(x, perplexity);
        for (Eigen::Index i = 0; i < 120; ++i) {
            EXPECT_NEAR(c.conditional.row(i).sum(), 1.0, 1e-12);
            EXPECT_EQ(c.conditional(i, i), 0.0);
            const double h = row_entropy(c.conditional, i);
            EXPECT_NEAR(h, c.entropy[static_cast<std::size_t>(i)], 1e-12);
            EXPECT_LT(std::abs(std::exp(h) - perplexity), 1e-4 * perplexity);
        }
    }
}

TEST(Affinities, SymmetricJointDistribution) {
    std::mt19937_64 rng(2);
    const RowMatrix p = perplexity_affinities(DenseMatrix(gaussian(40, 5, rng)), 10.0);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_LE((p - p.transpose()).cwiseAbs().maxCoeff(), 1e-18);
    EXPECT_GE(p.minCoeff(), 0.0);
}

TEST(Affinities, SeparatedClustersKeepMassWithin) {
    RowMatrix x(8, 2);
    x << 0, 0, 0.1, 0, 0, 0.2, 0.13, 0.17, 50, 50, 50.3, 50, 50, 50.1, 50.2, 50.25;
    const ConditionalAffinities c = conditional_affinities(DenseMatrix(x), 2.0);
    for (Eigen::Index i = 0; i < 8; ++i) {
        const Eigen::Index start = i < 4 ? 0 : 4;
        EXPECT_GT(c.conditional.row(i).segment(start, 4).sum(), 0.99);
    }
}

TEST(Affinities, DuplicatePointsAreDegenerate) {
    RowMatrix x = RowMatrix::Zero(6, 2);
    x(5, 0) = 1.0;
    EXPECT_EQ(kind_of([&] { conditional_affinities(DenseMatrix(x), 2.0); }), ErrorKind::DegenerateInput);
    EXPECT_EQ(kind_of([] { conditional_affinities(DenseMatrix(RowMatrix::Zero(6, 2)), 2.0); }),
              ErrorKind::DegenerateInput);
}

TEST(Affinities, RejectsBadPerplexity) {
    std::mt19937_64 rng(3);
    const DenseMatrix x(gaussian(10, 3, rng));
    EXPECT_EQ(kind_of([&] { conditional_affinities(x, 1.0); }), ErrorKind::InvalidInput);
    EXPECT_EQ(kind_of([&] { conditional_affinities(x, 10.0); }), ErrorKind::InvalidInput);
}

TEST(Tsne, DeterministicForSeed) {
    std::mt19937_64 rng(4);
    const DenseMatrix x(gaussian(60, 6, rng));
    TsneConfig cfg;
    cfg.perplexity = 10.0;
    cfg.iterations = 300;
    const Embedding a = tsne(x, cfg);
    const Embedding b = tsne(x, cfg);
    EXPECT_TRUE(a.points == b.points);
    EXPECT_EQ(a.final_kl, b.final_kl);
    cfg.seed = 43;
    EXPECT_FALSE(tsne(x, cfg).points == a.points);
}

TEST(Tsne, KlDecreasesAfterExaggeration) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(seed);
        const DenseMatrix x(gaussian(80, 10, rng));
        TsneConfig cfg;
        cfg.perplexity = 15.0;
        cfg.iterations = 500;
        cfg.seed = seed;
        const Embedding e = tsne(x, cfg);
        EXPECT_LT(e.final_kl, e.initial_kl);
        EXPECT_EQ(e.kl_trace.back().first, 500u);
        EXPECT_NEAR(e.final_kl, kl_divergence(perplexity_affinities(x, 15.0), e.points), 1e-12);
        EXPECT_LE(e.points.colwise().mean().cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Tsne, RecoversTwoPlantedClusters) {
    std::mt19937_64 rng(9);
    std::vector<int> truth;
    const DenseMatrix x(two_blobs(50, 10, 10.0, rng, truth));
    TsneConfig cfg;
    cfg.perplexity = 20.0;
    const Embedding e = tsne(x, cfg);
    const auto predicted = oracle::two_means(oracle::to_grid(e.points));
    EXPECT_GE(oracle::label_agreement(predicted, truth), 0.95);
}

TEST(Tsne, ArgumentChecks) {
    std::mt19937_64 rng(5);
    const DenseMatrix x(gaussian(20, 3, rng));
    TsneConfig cfg;
    cfg.perplexity = 30.0;
    EXPECT_EQ(kind_of([&] { tsne(x, cfg); }), ErrorKind::InvalidInput);
    cfg.perplexity = 5.0;
    EXPECT_EQ(kind_of([&] { tsne(x, cfg, RowMatrix::Zero(19, 2)); }), ErrorKind::ShapeMismatch);
    EXPECT_EQ(kind_of([&] { tsne(x, cfg, std::vector<std::string>(3, "a")); }), ErrorKind::ShapeMismatch);
}

TEST(Subsample, StratifiedAndDeterministic) {
    std::vector<std::string> labels;
    for (int i = 0; i < 300; ++i) labels.push_back(i < 200 ? "big" : i < 290 ? "mid" : "small");
    const auto a = stratified_subsample(labels, 100, 7);
    EXPECT_EQ(a, stratified_subsample(labels, 100, 7));
    ASSERT_EQ(a.size(), 100u);
    EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
    EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 100u);
    std::map<std::string, int> counts;
    for (std::size_t i : a) ++counts[labels[i]];
    EXPECT_EQ(counts["big"], 67);
    EXPECT_EQ(counts["mid"], 30);
    EXPECT_EQ(counts["small"], 3);
    EXPECT_EQ(stratified_subsample(labels, 500, 7).size(), 300u);
}
