#pragma once

#include <string>

#include "ovc/graph.hpp"
#include "ovc/linalg.hpp"

namespace ovc::enhance {

inline constexpr double kLogClamp = 1e-12;

/// Three affine layers (local_dim -> hidden1 -> hidden2 -> classes) with
/// ReLU between them. w1/b1 is the first layer.
template <typename T>
struct EnhancerParams {
    Mat<T> w1, b1, w2, b2, w3, b3;

    static EnhancerParams init(int input_dim, int hidden1, int hidden2, int classes, Rng& rng);

    int input_dim() const { return static_cast<int>(w1.cols()); }
    int classes() const { return static_cast<int>(w3.rows()); }

    template <typename F>
    void visit(F&& f) {
        f("enhancer.w1", w1);
        f("enhancer.b1", b1);
        f("enhancer.w2", w2);
        f("enhancer.b2", b2);
        f("enhancer.w3", w3);
        f("enhancer.b3", b3);
    }
    template <typename F>
    void visit(F&& f) const {
        const_cast<EnhancerParams*>(this)->visit([&](const std::string& n, const Mat<T>& m) { f(n, m); });
    }
};

/// Mean of the local vectors over the graph's sampled nodes.
Eigen::VectorXd mean_pool_local(const graph::TemporalGraph& graph);

/// Mean of the first local_dim columns over the rows of a node matrix.
template <typename T>
Vec<T> mean_pool_local(const Mat<T>& nodes, int local_dim) {
    return nodes.leftCols(local_dim).colwise().mean().transpose();
}

/// Class probabilities gamma. Throws ValidationError on dimension mismatch.
template <typename T>
Vec<T> enhance_forward(const Vec<T>& pooled, const EnhancerParams<T>& params);

/// Final-layer logits before the softmax.
template <typename T>
Vec<T> enhance_logits(const Vec<T>& pooled, const EnhancerParams<T>& params);

/// -log(gamma[label]), with gamma[label] clamped at kLogClamp.
template <typename T>
T de_loss(const Vec<T>& gamma, int label);

/// Appends gamma to every node: rows [local | global | box | gamma].
Eigen::MatrixXd fuse(const graph::TemporalGraph& graph, const Eigen::VectorXd& gamma);

extern template struct EnhancerParams<float>;
extern template struct EnhancerParams<double>;

}  // namespace ovc::enhance
