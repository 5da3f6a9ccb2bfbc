#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include <Eigen/Core>

#include "ovc/rng.hpp"

namespace ovc {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
T sigmoid(T x) {
    return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

/// Numerically stable softmax of a vector.
template <typename Derived>
auto softmax(const Eigen::MatrixBase<Derived>& logits) {
    using T = typename Derived::Scalar;
    Vec<T> e = (logits.array() - logits.maxCoeff()).exp().matrix();
    return Vec<T>(e / e.sum());
}

/// log(sum(exp(x))).
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& x) {
    using T = typename Derived::Scalar;
    const T m = x.maxCoeff();
    return m + std::log((x.array() - m).exp().sum());
}

/// Column-wise softmax of a matrix.
template <typename T>
Mat<T> softmax_columns(const Mat<T>& logits) {
    Mat<T> out(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) out.col(c) = softmax(logits.col(c));
    return out;
}

/// Glorot-uniform matrix.
template <typename T>
Mat<T> glorot(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Mat<T> m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = static_cast<T>(rng.uniform(-limit, limit));
    }
    return m;
}

template <typename T>
bool all_finite(const Mat<T>& m) {
    return m.allFinite();
}

}  // namespace ovc
