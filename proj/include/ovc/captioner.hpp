#pragma once

#include <span>
#include <string>
#include <vector>

#include "ovc/corpus.hpp"
#include "ovc/linalg.hpp"

namespace ovc::captioner {

struct DecoderDims {
    int vocab = 0;
    int node_dim = 0;  ///< width of a fused node H^t
    int embed = 512;
    int hidden = 1024;
    int layers = 2;
    int attention = 256;
};

/// Gates are stacked [reset; update; candidate] along the rows.
template <typename T>
struct GruLayer {
    Mat<T> w_in;   ///< 3H x input
    Mat<T> w_rec;  ///< 3H x H
    Mat<T> bias;   ///< 3H x 1
};

template <typename T>
struct DecoderParams {
    Mat<T> embedding;   ///< embed x vocab, one column per word; column PAD stays zero
    Mat<T> att_node;    ///< attention x node_dim, projects each node
    Mat<T> att_state;   ///< attention x hidden, projects the top previous state
    Mat<T> att_score;   ///< attention x 1
    std::vector<GruLayer<T>> layers;
    Mat<T> out_w;       ///< vocab x hidden
    Mat<T> out_b;       ///< vocab x 1

    static DecoderParams init(const DecoderDims& dims, Rng& rng);

    int vocab() const { return static_cast<int>(out_w.rows()); }
    int hidden() const { return static_cast<int>(out_w.cols()); }
    int embed() const { return static_cast<int>(embedding.rows()); }
    int attention() const { return static_cast<int>(att_node.rows()); }
    int node_dim() const { return static_cast<int>(att_node.cols()); }

    template <typename F>
    void visit(F&& f) {
        f("decoder.embedding", embedding);
        f("decoder.att_node", att_node);
        f("decoder.att_state", att_state);
        f("decoder.att_score", att_score);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string prefix = "decoder.gru" + std::to_string(l) + ".";
            f(prefix + "w_in", layers[l].w_in);
            f(prefix + "w_rec", layers[l].w_rec);
            f(prefix + "bias", layers[l].bias);
        }
        f("decoder.out_w", out_w);
        f("decoder.out_b", out_b);
    }
    template <typename F>
    void visit(F&& f) const {
        const_cast<DecoderParams*>(this)->visit([&](const std::string& n, const Mat<T>& m) { f(n, m); });
    }
};

template <typename T>
struct DecoderState {
    std::vector<Vec<T>> z;  ///< one hidden vector per layer

    static DecoderState zeros(int layers, int hidden);
    const Vec<T>& top() const { return z.back(); }
};

template <typename T>
struct Attention {
    Vec<T> context;  ///< attention-width vector
    Vec<T> alpha;    ///< one weight per node
};

/// Additive attention over the nodes (rows of H) conditioned on the top
/// layer's state: e_t = w . tanh(W H_t + U z), alpha = softmax(e),
/// context = sum_t alpha_t W H_t.
template <typename T>
Attention<T> attend(const Mat<T>& nodes, const DecoderState<T>& state, const DecoderParams<T>& params);

/// Same, with the node projection W H^T (attention x nodes) precomputed.
template <typename T>
Attention<T> attend_projected(const Mat<T>& projected, const DecoderState<T>& state, const DecoderParams<T>& params);

/// One update of every layer; layer l > 0 consumes layer l-1's new state.
///   r = s(W_r x + U_r z + b_r), u = s(W_u x + U_u z + b_u)
///   n = tanh(W_n x + b_n + r * (U_n z)), z' = (1 - u) * n + u * z
template <typename T>
DecoderState<T> gru_step(const Vec<T>& input, const DecoderState<T>& state, const DecoderParams<T>& params);

template <typename T>
struct StepOutput {
    Vec<T> logits;
    DecoderState<T> state;
    Vec<T> alpha;
};

/// Feeds [embedding(word) | context] to the GRU and projects the new top
/// state to vocabulary logits.
template <typename T>
StepOutput<T> decode_step(int word, const DecoderState<T>& state, const Mat<T>& nodes, const DecoderParams<T>& params);

template <typename T>
StepOutput<T> decode_step_projected(int word, const DecoderState<T>& state, const Mat<T>& projected,
                                    const DecoderParams<T>& params);

/// Negative log-likelihood summed over non-PAD targets.
template <typename T>
T caption_loss(std::span<const Vec<T>> logits, std::span<const int> targets);

template <typename T>
T total_loss(T caption, T enhancement, T lambda) {
    return caption + lambda * enhancement;
}

struct DecodeOptions {
    int beam_width = 1;  ///< 1 is greedy decoding
    std::size_t max_len = corpus::kMaxCaptionTokens;
};

/// Beam search from BOS. Finished hypotheses leave the beam; the result is
/// the best accumulated log-probability, ties broken by earlier EOS and then
/// lexicographic token order.
template <typename T>
std::vector<int> beam_search(const Mat<T>& nodes, const DecoderParams<T>& params, const DecodeOptions& options);

/// Word indices of the generated caption, without BOS/EOS. A beam width of
/// 1 decodes greedily.
template <typename T>
std::vector<int> generate(const Mat<T>& nodes, const DecoderParams<T>& params, const DecodeOptions& options = {});

template <typename T>
corpus::Caption generate_caption(const Mat<T>& nodes, const DecoderParams<T>& params, const corpus::Vocabulary& vocab,
                                 const DecodeOptions& options = {});

extern template struct DecoderParams<float>;
extern template struct DecoderParams<double>;
extern template struct DecoderState<float>;
extern template struct DecoderState<double>;

}  // namespace ovc::captioner
