#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ovc/captioner.hpp"
#include "ovc/enhance.hpp"
#include "ovc/graph.hpp"

namespace ovc::model {

struct ModelDims {
    int feature_dim = 64;  ///< D
    int vocab = 0;
    int embed = 512;
    int hidden = 1024;
    int layers = 2;
    int attention = 256;
    int enhancer_hidden1 = 128;
    int enhancer_hidden2 = 128;
    int classes = 4;

    graph::NodeLayout layout() const { return {feature_dim}; }
    int local_dim() const { return layout().local_dim(); }
    int node_dim() const { return layout().node_dim(); }
    int fused_dim() const { return node_dim() + classes; }
};

/// Enhancer and decoder parameters trained jointly.
template <typename T>
struct ModelParams {
    enhance::EnhancerParams<T> enhancer;
    captioner::DecoderParams<T> decoder;

    static ModelParams init(const ModelDims& dims, std::uint64_t seed);

    template <typename F>
    void visit(F&& f) {
        enhancer.visit(f);
        decoder.visit(f);
    }
    template <typename F>
    void visit(F&& f) const {
        enhancer.visit(f);
        decoder.visit(f);
    }

    ModelParams zeros_like() const;
    std::size_t parameter_count() const;

    template <typename U>
    ModelParams<U> cast() const;
};

/// One training object: masked node matrix (nodes x node_dim), class label
/// and encoded caption ([BOS] ... [EOS]).
template <typename T>
struct Sample {
    Mat<T> nodes;
    int label = 0;
    std::vector<int> sequence;
};

struct LossOptions {
    double lambda = 0.1;
    bool use_de = true;  ///< fuse gamma into the nodes and add lambda * L_DE
};

struct BatchStats {
    double caption_loss = 0;  ///< mean over objects of the summed token NLL
    double de_loss = 0;       ///< mean over objects
    double total_loss = 0;
    std::size_t tokens = 0;
    std::size_t correct = 0;  ///< teacher-forced argmax hits
    std::size_t objects = 0;
};

/// Enhancement scores gamma for one sample.
template <typename T>
Vec<T> enhancement_scores(const ModelParams<T>& params, const Sample<T>& sample);

/// Decoder input H for one sample: [nodes | gamma] or [nodes | 0] when the
/// enhancement branch is disabled.
template <typename T>
Mat<T> fused_nodes(const ModelParams<T>& params, const Sample<T>& sample, bool use_de);

/// Teacher-forced forward pass over a batch. When grad is non-null it must
/// be shaped like params; the gradient of the mean per-object total loss is
/// added to it.
template <typename T>
BatchStats forward_backward(const ModelParams<T>& params, std::span<const Sample<T>* const> batch,
                            const LossOptions& options, ModelParams<T>* grad);

/// Reference single-object loss built from decode_step and caption_loss.
template <typename T>
T sample_loss(const ModelParams<T>& params, const Sample<T>& sample, const LossOptions& options);

}  // namespace ovc::model
