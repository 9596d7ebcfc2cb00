#ifndef REPSCOPE_TSNE_HPP
#define REPSCOPE_TSNE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "repscope/error.hpp"
#include "repscope/matrix.hpp"

/**
 * @file tsne.hpp
 *
 * Exact t-SNE (van der Maaten & Hinton, 2008).
 *
 * Input affinities are Gaussian conditionals whose bandwidths are calibrated per point by
 * bisection so that exp(H_i) equals the requested perplexity, then symmetrized into a joint
 * distribution P. The map is optimized by gradient descent on KL(P || Q), where Q uses a
 * Student-t kernel, with momentum, per-coordinate gains and early exaggeration.
 *
 * Every reduction runs in a fixed order, so a given seed always yields the same bits.
 */

namespace repscope {

struct TsneConfig {
    double perplexity = 30.0;
    std::size_t output_dims = 2;
    std::size_t iterations = 1000;
    double learning_rate = 200.0;
    double momentum_initial = 0.5;
    double momentum_final = 0.8;
    std::size_t momentum_switch = 250;
    double exaggeration = 12.0;
    std::size_t exaggeration_iterations = 250;
    double init_stddev = 1e-4;
    std::uint64_t seed = 42;
    std::size_t kl_log_interval = 50;
};

struct Embedding {
    RowMatrix points;
    std::vector<std::string> labels;
    /// KL(P || Q) right after early exaggeration ends.
    double initial_kl = 0.0;
    double final_kl = 0.0;
    /// (iteration, KL) pairs logged every kl_log_interval iterations.
    std::vector<std::pair<std::size_t, double>> kl_trace;
};

/// Row-stochastic conditional affinities p_{j|i} plus the calibrated precisions.
struct ConditionalAffinities {
    RowMatrix conditional;
    std::vector<double> beta;
    /// Shannon entropy (nats) of each conditional row.
    std::vector<double> entropy;
};

inline constexpr std::size_t kBandwidthSearchSteps = 100;
inline constexpr double kEntropyTolerance = 1e-7;

/// Pairwise squared Euclidean distances by direct differences.
inline RowMatrix squared_distances(const RowMatrix& x) {
    const Eigen::Index n = x.rows();
    RowMatrix d = RowMatrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = (x.row(i) - x.row(j)).squaredNorm();
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

/**
 * Calibrates one Gaussian bandwidth per point by bisection on log(beta).
 * A row whose neighbors are all equidistant yields the uniform conditional, which is
 * the only distribution any bandwidth can produce for it.
 */
inline ConditionalAffinities conditional_affinities(const DenseMatrix& x, double perplexity) {
    const std::size_t n = x.rows();
    if (n < 4) {
        fail(ErrorKind::InvalidInput, "t-SNE needs at least 4 points");
    }
    if (!(perplexity > 1.0) || perplexity > static_cast<double>(n - 1)) {
        fail(ErrorKind::InvalidInput, "perplexity must lie in (1, n - 1]");
    }
    const RowMatrix dist = squared_distances(x.values());
    const double target = std::log(perplexity);

    ConditionalAffinities out;
    out.conditional = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    out.beta.assign(n, 0.0);
    out.entropy.assign(n, 0.0);
    std::vector<double> shifted(n);
    std::vector<double> weights(n);

    for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        double dmin = std::numeric_limits<double>::infinity();
        double dmax = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                dmin = std::min(dmin, dist(row, static_cast<Eigen::Index>(j)));
                dmax = std::max(dmax, dist(row, static_cast<Eigen::Index>(j)));
            }
        }
        if (dmax <= 0.0) {
            fail(ErrorKind::DegenerateInput, "point " + std::to_string(i) + " coincides with every other point");
        }
        const double span = dmax - dmin;
        if (span <= 1e-12 * dmax || perplexity >= static_cast<double>(n - 1)) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    out.conditional(row, static_cast<Eigen::Index>(j)) = 1.0 / static_cast<double>(n - 1);
                }
            }
            out.entropy[i] = std::log(static_cast<double>(n - 1));
            continue;
        }

        std::size_t nearest = 0;
        for (std::size_t j = 0; j < n; ++j) {
            shifted[j] = j == i ? 0.0 : (dist(row, static_cast<Eigen::Index>(j)) - dmin) / span;
            if (j != i && shifted[j] <= 1e-12) {
                ++nearest;
            }
        }
        if (static_cast<double>(nearest) >= perplexity) {
            fail(ErrorKind::DegenerateInput, "point " + std::to_string(i) + " has " + std::to_string(nearest) +
                                                 " equidistant nearest neighbors; perplexity is unreachable");
        }

        // Entropy (nats) of the row at precision beta, filling `weights` with the normalized row.
        auto entropy_at = [&](double beta) {
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                weights[j] = j == i ? 0.0 : std::exp(-beta * shifted[j]);
                total += weights[j];
            }
            double h = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) {
                    continue;
                }
                weights[j] /= total;
                if (weights[j] > 0.0) {
                    h -= weights[j] * std::log(weights[j]);
                }
            }
            return h;
        };

        double lo = -30.0;
        double hi = 60.0;
        double log_beta = 0.0;
        double h = entropy_at(std::exp(log_beta));
        bool converged = std::abs(h - target) < kEntropyTolerance;
        for (std::size_t step = 0; step < kBandwidthSearchSteps && !converged; ++step) {
            if (h > target) {
                lo = log_beta;
            } else {
                hi = log_beta;
            }
            log_beta = 0.5 * (lo + hi);
            h = entropy_at(std::exp(log_beta));
            converged = std::abs(h - target) < kEntropyTolerance;
        }
        if (!converged) {
            fail(ErrorKind::NumericalInstability, "bandwidth search did not converge for point " + std::to_string(i));
        }
        for (std::size_t j = 0; j < n; ++j) {
            out.conditional(row, static_cast<Eigen::Index>(j)) = weights[j];
        }
        out.beta[i] = std::exp(log_beta) / span;
        out.entropy[i] = h;
    }
    return out;
}

/// Joint affinities P = (P_cond + P_cond^T) / (2n); symmetric, zero diagonal, sums to 1.
inline RowMatrix perplexity_affinities(const DenseMatrix& x, double perplexity) {
    const ConditionalAffinities c = conditional_affinities(x, perplexity);
    const auto n = static_cast<double>(x.rows());
    RowMatrix p = c.conditional + c.conditional.transpose();
    p /= 2.0 * n;
    return p;
}

namespace tsne_detail {

/// Student-t numerators (zero diagonal) and their fixed-order total.
inline double student_kernel(const RowMatrix& y, RowMatrix& num) {
    const Eigen::Index n = y.rows();
    num.setZero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
            num(i, j) = v;
            num(j, i) = v;
        }
    }
    double z = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        z += num.row(i).sum();
    }
    return z;
}

inline double kl_from_kernel(const RowMatrix& p, const RowMatrix& num, double z) {
    double kl = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            const double pij = p(i, j);
            if (i != j && pij > 0.0) {
                const double qij = std::max(num(i, j) / z, std::numeric_limits<double>::min());
                kl += pij * std::log(pij / qij);
            }
        }
    }
    return kl;
}

} // namespace tsne_detail

/// KL(P || Q) for a map Y.
inline double kl_divergence(const RowMatrix& p, const RowMatrix& y) {
    RowMatrix num;
    const double z = tsne_detail::student_kernel(y, num);
    return tsne_detail::kl_from_kernel(p, num, z);
}

/// Isotropic Gaussian starting layout.
inline RowMatrix random_layout(std::size_t n, std::size_t dims, double stddev, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, stddev);
    RowMatrix y(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims));
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        y.data()[i] = normal(rng);
    }
    return y;
}

/// Runs the optimizer from an explicit starting layout.
inline Embedding tsne(const DenseMatrix& x, const TsneConfig& cfg, RowMatrix initial,
                      std::vector<std::string> labels = {}) {
    const std::size_t n = x.rows();
    if (n < 4) {
        fail(ErrorKind::InvalidInput, "t-SNE needs at least 4 points");
    }
    if (!(cfg.perplexity > 1.0) || !(cfg.perplexity < static_cast<double>(n - 1) / 3.0)) {
        fail(ErrorKind::InvalidInput, "perplexity " + std::to_string(cfg.perplexity) +
                                          " must lie in (1, (n - 1) / 3) for n = " + std::to_string(n));
    }
    if (cfg.output_dims < 1 || !(cfg.learning_rate > 0.0)) {
        fail(ErrorKind::InvalidInput, "output_dims must be >= 1 and learning_rate > 0");
    }
    if (initial.rows() != static_cast<Eigen::Index>(n) || initial.cols() != static_cast<Eigen::Index>(cfg.output_dims)) {
        fail(ErrorKind::ShapeMismatch, "initial layout has the wrong shape");
    }
    if (!labels.empty() && labels.size() != n) {
        fail(ErrorKind::ShapeMismatch, "label count differs from point count");
    }

    const RowMatrix p = perplexity_affinities(x, cfg.perplexity);
    const auto rows = static_cast<Eigen::Index>(n);
    const auto dims = static_cast<Eigen::Index>(cfg.output_dims);

    Embedding out;
    out.labels = std::move(labels);
    RowMatrix y = std::move(initial);
    RowMatrix update = RowMatrix::Zero(rows, dims);
    RowMatrix gains = RowMatrix::Ones(rows, dims);
    RowMatrix grad(rows, dims);
    RowMatrix num;

    const std::size_t exaggeration_end = std::min(cfg.exaggeration_iterations, cfg.iterations);
    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        const bool exaggerating = iter < exaggeration_end;
        const double exaggeration = exaggerating ? cfg.exaggeration : 1.0;
        const double momentum = iter < cfg.momentum_switch ? cfg.momentum_initial : cfg.momentum_final;

        const double z = tsne_detail::student_kernel(y, num);
        if (iter == exaggeration_end) {
            out.initial_kl = tsne_detail::kl_from_kernel(p, num, z);
        }
        if (cfg.kl_log_interval > 0 && iter % cfg.kl_log_interval == 0) {
            out.kl_trace.emplace_back(iter, tsne_detail::kl_from_kernel(p, num, z));
        }

        grad.setZero();
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < rows; ++j) {
                if (i == j) {
                    continue;
                }
                const double mult = (exaggeration * p(i, j) - num(i, j) / z) * num(i, j);
                grad.row(i) += mult * (y.row(i) - y.row(j));
            }
        }
        grad *= 4.0;
        if (!grad.allFinite()) {
            fail(ErrorKind::NumericalInstability, "non-finite t-SNE gradient at iteration " + std::to_string(iter));
        }

        for (Eigen::Index k = 0; k < grad.size(); ++k) {
            double& gain = gains.data()[k];
            const bool same_sign = (grad.data()[k] > 0.0) == (update.data()[k] > 0.0);
            gain = same_sign ? gain * 0.8 : gain + 0.2;
            gain = std::max(gain, 0.01);
            update.data()[k] = momentum * update.data()[k] - cfg.learning_rate * gain * grad.data()[k];
        }
        y += update;
        const Eigen::RowVectorXd mean = y.colwise().mean();
        y.rowwise() -= mean;
    }

    const double z = tsne_detail::student_kernel(y, num);
    out.final_kl = tsne_detail::kl_from_kernel(p, num, z);
    if (exaggeration_end == cfg.iterations) {
        out.initial_kl = out.final_kl;
    }
    if (cfg.kl_log_interval > 0) {
        out.kl_trace.emplace_back(cfg.iterations, out.final_kl);
    }
    if (!y.allFinite() || !std::isfinite(out.final_kl)) {
        fail(ErrorKind::NumericalInstability, "t-SNE diverged");
    }
    out.points = std::move(y);
    return out;
}

/// Runs the optimizer from the seeded Gaussian layout.
inline Embedding tsne(const DenseMatrix& x, const TsneConfig& cfg, std::vector<std::string> labels = {}) {
    return tsne(x, cfg, random_layout(x.rows(), cfg.output_dims, cfg.init_stddev, cfg.seed), std::move(labels));
}

/**
 * Deterministic stratified subsample of at most `cap` indices. Each label keeps a share
 * proportional to its size (largest remainders fill the leftover slots, ties by label),
 * members are drawn by a seeded shuffle, and the result is sorted ascending.
 */
inline std::vector<std::size_t> stratified_subsample(const std::vector<std::string>& labels, std::size_t cap,
                                                     std::uint64_t seed) {
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (labels.size() <= cap) {
        return all;
    }
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        groups[labels[i]].push_back(i);
    }
    struct Quota {
        std::string label;
        std::size_t take = 0;
        double remainder = 0.0;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (const auto& [label, members] : groups) {
        const double exact = static_cast<double>(cap) * static_cast<double>(members.size()) /
                             static_cast<double>(labels.size());
        const auto take = static_cast<std::size_t>(std::floor(exact));
        quotas.push_back({label, take, exact - static_cast<double>(take)});
        assigned += take;
    }
    std::vector<std::size_t> order(quotas.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
    for (std::size_t k = 0; assigned < cap; k = (k + 1) % order.size()) {
        Quota& q = quotas[order[k]];
        if (q.take < groups[q.label].size()) {
            ++q.take;
            ++assigned;
        }
    }

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> picked;
    for (const auto& q : quotas) {
        std::vector<std::size_t> members = groups[q.label];
        // Fisher-Yates with our own index draws; std::shuffle's algorithm is implementation-defined.
        for (std::size_t k = members.size(); k > 1; --k) {
            const std::size_t j = static_cast<std::size_t>(rng() % k);
            std::swap(members[k - 1], members[j]);
        }
        picked.insert(picked.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(q.take));
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

} // namespace repscope

#endif
