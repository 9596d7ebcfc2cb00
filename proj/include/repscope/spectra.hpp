#ifndef REPSCOPE_SPECTRA_HPP
#define REPSCOPE_SPECTRA_HPP

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "repscope/error.hpp"
#include "repscope/matrix.hpp"

namespace repscope {

/// Singular values below this fraction of the largest are treated as zero.
inline constexpr double kRankCutoff = 1e-12;
/// Slack on the cumulative-ratio comparison so exact ties survive SVD rounding.
inline constexpr double kRatioSlack = 1e-12;

struct VarianceProfile {
    std::string task;
    std::size_t layer = 0;
    std::size_t dims_required = 0;
    double threshold = 0.99;
    std::size_t total_rank = 0;
};

/// Singular values of the column-centered matrix, descending.
inline Eigen::VectorXd centered_singular_values(const DenseMatrix& x) {
    Eigen::MatrixXd centered = x.values();
    centered.rowwise() -= centered.colwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    return svd.singularValues();
}

/**
 * Number of principal components needed to explain `threshold` of the variance of X:
 * the smallest k with sum_{i<=k} s_i^2 / sum_i s_i^2 >= threshold, where s are the
 * singular values of X after subtracting column means.
 */
inline VarianceProfile variance_profile(const DenseMatrix& x, double threshold) {
    if (x.rows() < 2) {
        fail(ErrorKind::InvalidInput, "variance analysis needs at least two rows");
    }
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        fail(ErrorKind::InvalidInput, "threshold must lie in (0, 1]");
    }
    const Eigen::VectorXd sv = centered_singular_values(x);
    if (sv.size() == 0 || sv(0) <= 0.0) {
        fail(ErrorKind::DegenerateInput, "zero total variance (all rows identical)");
    }

    std::vector<double> energy;
    for (Eigen::Index i = 0; i < sv.size() && sv(i) >= kRankCutoff * sv(0); ++i) {
        energy.push_back(sv(i) * sv(i));
    }
    double total = 0.0;
    for (double e : energy) {
        total += e;
    }

    VarianceProfile profile;
    profile.threshold = threshold;
    profile.total_rank = energy.size();
    double running = 0.0;
    for (std::size_t k = 0; k < energy.size(); ++k) {
        running += energy[k];
        if (running / total >= threshold - kRatioSlack) {
            profile.dims_required = k + 1;
            return profile;
        }
    }
    profile.dims_required = energy.size();
    return profile;
}

inline std::size_t dims_for_variance(const DenseMatrix& x, double threshold) {
    return variance_profile(x, threshold).dims_required;
}

/// Mean dims_required over the profiles recorded for `layer`.
inline double mean_dims_across_tasks(const std::vector<VarianceProfile>& profiles, std::size_t layer) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& p : profiles) {
        if (p.layer == layer) {
            sum += static_cast<double>(p.dims_required);
            ++count;
        }
    }
    if (count == 0) {
        fail(ErrorKind::InvalidInput, "no variance profiles for layer " + std::to_string(layer));
    }
    return sum / static_cast<double>(count);
}

} // namespace repscope

#endif
