#ifndef REPSCOPE_MATRIX_HPP
#define REPSCOPE_MATRIX_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "repscope/error.hpp"

namespace repscope {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/**
 * Representation matrix: one row per example, one column per representation dimension.
 * Always stored as 64-bit floats, row-major. Construction validates shape and finiteness.
 */
class DenseMatrix {
public:
    DenseMatrix() = default;

    explicit DenseMatrix(RowMatrix values) : values_(std::move(values)) { validate(); }

    DenseMatrix(std::size_t rows, std::size_t cols, std::span<const double> row_major)
        : values_(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)) {
        if (row_major.size() != rows * cols) {
            fail(ErrorKind::ShapeMismatch, "payload has " + std::to_string(row_major.size()) +
                                               " entries, expected " + std::to_string(rows * cols));
        }
        std::copy(row_major.begin(), row_major.end(), values_.data());
        validate();
    }

    std::size_t rows() const noexcept { return static_cast<std::size_t>(values_.rows()); }
    std::size_t cols() const noexcept { return static_cast<std::size_t>(values_.cols()); }

    double operator()(std::size_t r, std::size_t c) const {
        return values_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }

    const RowMatrix& values() const noexcept { return values_; }

    std::span<const double> data() const noexcept {
        return {values_.data(), static_cast<std::size_t>(values_.size())};
    }

    std::span<const double> row(std::size_t r) const noexcept {
        return data().subspan(r * cols(), cols());
    }

    bool operator==(const DenseMatrix& other) const {
        return values_.rows() == other.values_.rows() && values_.cols() == other.values_.cols() &&
               values_ == other.values_;
    }

private:
    void validate() const {
        if (values_.rows() < 1 || values_.cols() < 1) {
            fail(ErrorKind::InvalidInput, "matrix must have at least one row and one column");
        }
        if (!values_.allFinite()) {
            fail(ErrorKind::InvalidInput, "matrix contains NaN or Inf");
        }
    }

    RowMatrix values_;
};

/**
 * Symmetric n x n kernel matrix. The centered flag records whether the
 * double-centering projection has been applied.
 */
class GramMatrix {
public:
    GramMatrix(RowMatrix values, bool centered) : values_(std::move(values)), centered_(centered) {
        if (values_.rows() != values_.cols()) {
            fail(ErrorKind::ShapeMismatch, "Gram matrix must be square");
        }
        if (values_.rows() < 1) {
            fail(ErrorKind::InvalidInput, "Gram matrix must have order >= 1");
        }
        if (!values_.allFinite()) {
            fail(ErrorKind::InvalidInput, "Gram matrix contains NaN or Inf");
        }
    }

    std::size_t order() const noexcept { return static_cast<std::size_t>(values_.rows()); }
    bool centered() const noexcept { return centered_; }
    const RowMatrix& values() const noexcept { return values_; }

    double operator()(std::size_t i, std::size_t j) const {
        return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }

    /// Largest |K_ij - K_ji| relative to the largest |K_ij|; 0 for the zero matrix.
    double asymmetry() const {
        const double scale = values_.cwiseAbs().maxCoeff();
        if (scale == 0.0) {
            return 0.0;
        }
        return (values_ - values_.transpose()).cwiseAbs().maxCoeff() / scale;
    }

private:
    RowMatrix values_;
    bool centered_ = false;
};

} // namespace repscope

#endif
