#include "ovc/enhance.hpp"

#include "ovc/error.hpp"

namespace ovc::enhance {

template <typename T>
EnhancerParams<T> EnhancerParams<T>::init(int input_dim, int hidden1, int hidden2, int classes, Rng& rng) {
    EnhancerParams p;
    p.w1 = glorot<T>(rng, hidden1, input_dim);
    p.b1 = Mat<T>::Zero(hidden1, 1);
    p.w2 = glorot<T>(rng, hidden2, hidden1);
    p.b2 = Mat<T>::Zero(hidden2, 1);
    p.w3 = glorot<T>(rng, classes, hidden2);
    p.b3 = Mat<T>::Zero(classes, 1);
    return p;
}

template struct EnhancerParams<float>;
template struct EnhancerParams<double>;

Eigen::VectorXd mean_pool_local(const graph::TemporalGraph& graph) {
    if (graph.nodes.empty()) throw ValidationError("graph", "no nodes to pool");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(graph.nodes.front().local.size());
    for (const auto& node : graph.nodes) sum += node.local;
    return sum / static_cast<double>(graph.nodes.size());
}

template <typename T>
Vec<T> enhance_logits(const Vec<T>& pooled, const EnhancerParams<T>& p) {
    if (pooled.size() != p.w1.cols()) {
        throw ValidationError("pooled", "dimension " + std::to_string(pooled.size()) + " does not match enhancer input " +
                                            std::to_string(p.w1.cols()));
    }
    const Vec<T> h1 = (p.w1 * pooled + p.b1).cwiseMax(T(0));
    const Vec<T> h2 = (p.w2 * h1 + p.b2).cwiseMax(T(0));
    return p.w3 * h2 + p.b3;
}

template <typename T>
Vec<T> enhance_forward(const Vec<T>& pooled, const EnhancerParams<T>& p) {
    return softmax(enhance_logits(pooled, p));
}

template <typename T>
T de_loss(const Vec<T>& gamma, int label) {
    if (label < 0 || label >= gamma.size()) throw ValidationError("label", "class index out of range");
    return -std::log(std::max(gamma[label], static_cast<T>(kLogClamp)));
}

Eigen::MatrixXd fuse(const graph::TemporalGraph& graph, const Eigen::VectorXd& gamma) {
    const Eigen::MatrixXd g = graph.node_matrix();
    Eigen::MatrixXd h(g.rows(), g.cols() + gamma.size());
    h.leftCols(g.cols()) = g;
    h.rightCols(gamma.size()).rowwise() = gamma.transpose();
    return h;
}

template Vec<float> enhance_logits(const Vec<float>&, const EnhancerParams<float>&);
template Vec<double> enhance_logits(const Vec<double>&, const EnhancerParams<double>&);
template Vec<float> enhance_forward(const Vec<float>&, const EnhancerParams<float>&);
template Vec<double> enhance_forward(const Vec<double>&, const EnhancerParams<double>&);
template float de_loss(const Vec<float>&, int);
template double de_loss(const Vec<double>&, int);

}  // namespace ovc::enhance
