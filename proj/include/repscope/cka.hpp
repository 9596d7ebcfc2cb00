#ifndef REPSCOPE_CKA_HPP
#define REPSCOPE_CKA_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "repscope/error.hpp"
#include "repscope/matrix.hpp"

/**
 * @file cka.hpp
 *
 * Linear-kernel Centered Kernel Alignment.
 *
 * Given two representation matrices X (n x d) and Y (n x d') of the same n examples,
 * build the Gram matrices K = X X^T and L = Y Y^T, double-center them, and normalize
 * their Frobenius inner product:
 *
 *     CKA(X, Y) = <Kc, Lc>_F / sqrt(<Kc, Kc>_F <Lc, Lc>_F)
 *
 * The HSIC used here is the raw trace Tr(Kc^T Lc) without the 1/(n-1)^2 factor,
 * which cancels in the ratio.
 */

namespace repscope {

inline constexpr double kSymmetryTolerance = 1e-10;
inline constexpr double kDegenerateHsic = 1e-300;
inline constexpr double kCkaClampSlack = 1e-9;

struct CkaScore {
    double value = 0.0;
    std::string task;
    std::size_t layer = 0;
    std::size_t n_examples = 0;
};

/// K = X X^T, computed as a symmetric rank-k update.
inline GramMatrix gram_linear(const DenseMatrix& x) {
    const auto n = static_cast<Eigen::Index>(x.rows());
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(x.values());
    RowMatrix full = gram.selfadjointView<Eigen::Lower>();
    return GramMatrix(std::move(full), false);
}

/**
 * Double-centering H K H with H = I - 11^T/n, done by subtracting row means,
 * column means and adding back the grand mean. Applying it to an already
 * centered matrix is a no-op up to rounding.
 */
inline GramMatrix center_gram(const GramMatrix& gram) {
    if (gram.asymmetry() > kSymmetryTolerance) {
        fail(ErrorKind::InvalidInput, "Gram matrix is not symmetric");
    }
    const RowMatrix& k = gram.values();
    const Eigen::VectorXd row_means = k.rowwise().mean();
    const Eigen::RowVectorXd col_means = k.colwise().mean();
    const double grand_mean = row_means.mean();

    RowMatrix centered = k;
    centered.colwise() -= row_means;
    centered.rowwise() -= col_means;
    centered.array() += grand_mean;
    // Exact symmetry keeps hsic(K, L) == hsic(L, K) bit-for-bit.
    centered = (0.5 * (centered + centered.transpose())).eval();
    return GramMatrix(std::move(centered), true);
}

/// Frobenius inner product Tr(K1^T K2) of two centered Gram matrices.
inline double hsic(const GramMatrix& k1, const GramMatrix& k2) {
    if (k1.order() != k2.order()) {
        fail(ErrorKind::ShapeMismatch, "Gram orders differ: " + std::to_string(k1.order()) + " vs " +
                                           std::to_string(k2.order()));
    }
    if (!k1.centered() || !k2.centered()) {
        fail(ErrorKind::InvalidInput, "hsic requires centered Gram matrices");
    }
    // Fixed-order row partial sums; element products commute, so swapping
    // the arguments gives the same bits.
    const RowMatrix& a = k1.values();
    const RowMatrix& b = k2.values();
    double total = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        total += a.row(i).dot(b.row(i));
    }
    return total;
}

/// Normalizes a cross-HSIC by the two self-HSIC values, with clamping of rounding excursions.
inline double normalize_cka(double cross, double self_x, double self_y) {
    if (!(self_x >= kDegenerateHsic) || !(self_y >= kDegenerateHsic)) {
        fail(ErrorKind::DegenerateInput, "zero centered variance (all rows identical)");
    }
    const double value = cross / std::sqrt(self_x * self_y);
    if (!std::isfinite(value) || value < -kCkaClampSlack || value > 1.0 + kCkaClampSlack) {
        fail(ErrorKind::NumericalInstability, "CKA outside [0, 1] before clamping: " + std::to_string(value));
    }
    return std::clamp(value, 0.0, 1.0);
}

/**
 * Linear CKA between two representation matrices of the same examples.
 * Column counts may differ.
 */
inline CkaScore cka(const DenseMatrix& x, const DenseMatrix& y) {
    if (x.rows() != y.rows()) {
        fail(ErrorKind::ShapeMismatch, "row counts differ: " + std::to_string(x.rows()) + " vs " +
                                           std::to_string(y.rows()));
    }
    if (x.rows() < 2) {
        fail(ErrorKind::InvalidInput, "CKA needs at least two examples");
    }
    const GramMatrix kx = center_gram(gram_linear(x));
    const GramMatrix ky = center_gram(gram_linear(y));

    const double cross = hsic(kx, ky);
    CkaScore score;
    score.value = normalize_cka(cross, hsic(kx, kx), hsic(ky, ky));
    score.n_examples = x.rows();
    return score;
}

inline CkaScore cka(const DenseMatrix& x, const DenseMatrix& y, std::string task, std::size_t layer) {
    CkaScore score = cka(x, y);
    score.task = std::move(task);
    score.layer = layer;
    return score;
}

} // namespace repscope

#endif
