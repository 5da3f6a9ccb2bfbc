#include "ovc/captioner.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

#include "ovc/error.hpp"

namespace ovc::captioner {

using corpus::Vocabulary;

template <typename T>
DecoderParams<T> DecoderParams<T>::init(const DecoderDims& d, Rng& rng) {
    if (d.vocab < static_cast<int>(Vocabulary::kReserved.size()) || d.node_dim < 1 || d.embed < 1 || d.hidden < 1 ||
        d.layers < 1 || d.attention < 1) {
        throw ValidationError("decoder dims", "all dimensions must be positive and vocab >= 4");
    }
    DecoderParams p;
    p.embedding.resize(d.embed, d.vocab);
    for (Eigen::Index c = 0; c < p.embedding.cols(); ++c) {
        for (Eigen::Index r = 0; r < p.embedding.rows(); ++r) p.embedding(r, c) = static_cast<T>(rng.uniform(-0.1, 0.1));
    }
    p.embedding.col(Vocabulary::kPad).setZero();
    p.att_node = glorot<T>(rng, d.attention, d.node_dim);
    p.att_state = glorot<T>(rng, d.attention, d.hidden);
    p.att_score = glorot<T>(rng, d.attention, 1);
    for (int l = 0; l < d.layers; ++l) {
        const int input = l == 0 ? d.embed + d.attention : d.hidden;
        GruLayer<T> layer;
        layer.w_in = glorot<T>(rng, 3 * d.hidden, input);
        layer.w_rec = glorot<T>(rng, 3 * d.hidden, d.hidden);
        layer.bias = Mat<T>::Zero(3 * d.hidden, 1);
        p.layers.push_back(std::move(layer));
    }
    p.out_w = glorot<T>(rng, d.vocab, d.hidden);
    p.out_b = Mat<T>::Zero(d.vocab, 1);
    return p;
}

template <typename T>
DecoderState<T> DecoderState<T>::zeros(int layers, int hidden) {
    return {std::vector<Vec<T>>(static_cast<std::size_t>(layers), Vec<T>::Zero(hidden))};
}

template struct DecoderParams<float>;
template struct DecoderParams<double>;
template struct DecoderState<float>;
template struct DecoderState<double>;

template <typename T>
Attention<T> attend_projected(const Mat<T>& projected, const DecoderState<T>& state, const DecoderParams<T>& p) {
    if (projected.cols() < 1) throw ValidationError("nodes", "attention needs at least one node");
    const Vec<T> q = p.att_state * state.top();
    const Mat<T> s = (projected.colwise() + q).array().tanh().matrix();
    const Vec<T> scores = s.transpose() * p.att_score;
    Attention<T> a;
    a.alpha = softmax(scores);
    a.context = projected * a.alpha;
    return a;
}

template <typename T>
Attention<T> attend(const Mat<T>& nodes, const DecoderState<T>& state, const DecoderParams<T>& p) {
    if (nodes.cols() != p.node_dim()) throw ValidationError("nodes", "node width does not match decoder");
    return attend_projected<T>(p.att_node * nodes.transpose(), state, p);
}

template <typename T>
DecoderState<T> gru_step(const Vec<T>& input, const DecoderState<T>& state, const DecoderParams<T>& p) {
    if (state.z.size() != p.layers.size()) throw ValidationError("state", "layer count does not match decoder");
    DecoderState<T> next;
    next.z.reserve(p.layers.size());
    const Vec<T>* x = &input;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& layer = p.layers[l];
        if (x->size() != layer.w_in.cols()) throw ValidationError("input", "GRU input width mismatch");
        const Eigen::Index h = layer.w_rec.cols();
        const Vec<T>& z = state.z[l];
        const Vec<T> gi = layer.w_in * *x + layer.bias;
        const Vec<T> gr = layer.w_rec * z;
        const Vec<T> r = (gi.head(h) + gr.head(h)).unaryExpr([](T v) { return sigmoid(v); });
        const Vec<T> u = (gi.segment(h, h) + gr.segment(h, h)).unaryExpr([](T v) { return sigmoid(v); });
        const Vec<T> n = (gi.tail(h).array() + r.array() * gr.tail(h).array()).tanh().matrix();
        next.z.push_back(((T(1) - u.array()) * n.array() + u.array() * z.array()).matrix());
        x = &next.z.back();
    }
    return next;
}

template <typename T>
StepOutput<T> decode_step_projected(int word, const DecoderState<T>& state, const Mat<T>& projected,
                                    const DecoderParams<T>& p) {
    if (word < 0 || word >= p.vocab()) {
        throw ValidationError("word_index", std::to_string(word) + " outside vocabulary of " + std::to_string(p.vocab()));
    }
    const Attention<T> a = attend_projected(projected, state, p);
    Vec<T> x(p.embed() + p.attention());
    x << p.embedding.col(word), a.context;
    StepOutput<T> out;
    out.state = gru_step(x, state, p);
    out.logits = p.out_w * out.state.top() + p.out_b;
    out.alpha = a.alpha;
    return out;
}

template <typename T>
StepOutput<T> decode_step(int word, const DecoderState<T>& state, const Mat<T>& nodes, const DecoderParams<T>& p) {
    if (nodes.cols() != p.node_dim()) throw ValidationError("nodes", "node width does not match decoder");
    return decode_step_projected<T>(word, state, p.att_node * nodes.transpose(), p);
}

template <typename T>
T caption_loss(std::span<const Vec<T>> logits, std::span<const int> targets) {
    if (logits.size() != targets.size()) {
        throw ValidationError("targets", "expected " + std::to_string(logits.size()) + " targets, got " +
                                             std::to_string(targets.size()));
    }
    T loss = 0;
    for (std::size_t k = 0; k < targets.size(); ++k) {
        if (targets[k] == Vocabulary::kPad) continue;
        if (targets[k] < 0 || targets[k] >= logits[k].size()) throw ValidationError("targets", "index out of range");
        loss += log_sum_exp(logits[k]) - logits[k][targets[k]];
    }
    return loss;
}

namespace {

template <typename T>
Vec<T> log_softmax(const Vec<T>& logits) {
    Vec<T> out = logits.array() - log_sum_exp(logits);
    // never emitted: padding and a second start token
    out[Vocabulary::kPad] = -std::numeric_limits<T>::infinity();
    out[Vocabulary::kBos] = -std::numeric_limits<T>::infinity();
    return out;
}

template <typename T>
struct Hypothesis {
    std::vector<int> tokens;
    T score = 0;
    DecoderState<T> state;
    int last = Vocabulary::kBos;
    bool ended = false;  ///< emitted EOS
};

template <typename T>
bool better(const Hypothesis<T>& a, const Hypothesis<T>& b) {
    if (a.score != b.score) return a.score > b.score;
    // earlier EOS first: an ended hypothesis is never longer than the cap
    if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
    if (a.ended != b.ended) return a.ended;
    return a.tokens < b.tokens;
}

}  // namespace

template <typename T>
std::vector<int> beam_search(const Mat<T>& nodes, const DecoderParams<T>& p, const DecodeOptions& options) {
    if (options.beam_width < 1) throw ValidationError("beam_width", "must be at least 1");
    if (nodes.cols() != p.node_dim()) throw ValidationError("nodes", "node width does not match decoder");
    const Mat<T> projected = p.att_node * nodes.transpose();
    const auto width = static_cast<std::size_t>(options.beam_width);

    std::vector<Hypothesis<T>> live(1);
    live[0].state = DecoderState<T>::zeros(static_cast<int>(p.layers.size()), p.hidden());
    std::vector<Hypothesis<T>> done;

    for (std::size_t step = 0; step < options.max_len && !live.empty(); ++step) {
        struct Candidate {
            T score;
            std::size_t parent;
            int word;
        };
        std::vector<Candidate> candidates;
        std::vector<DecoderState<T>> states;
        for (std::size_t h = 0; h < live.size(); ++h) {
            StepOutput<T> out = decode_step_projected(live[h].last, live[h].state, projected, p);
            const Vec<T> lp = log_softmax(out.logits);
            for (int w = 0; w < lp.size(); ++w) {
                if (std::isinf(lp[w])) continue;
                candidates.push_back({live[h].score + lp[w], h, w});
            }
            states.push_back(std::move(out.state));
        }
        const std::size_t keep = std::min(width, candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                          [](const Candidate& a, const Candidate& b) {
                              if (a.score != b.score) return a.score > b.score;
                              return std::tie(a.parent, a.word) < std::tie(b.parent, b.word);
                          });
        std::vector<Hypothesis<T>> next;
        for (std::size_t i = 0; i < keep; ++i) {
            const Candidate& c = candidates[i];
            Hypothesis<T> h;
            h.tokens = live[c.parent].tokens;
            h.score = c.score;
            if (c.word == Vocabulary::kEos) {
                h.ended = true;
                done.push_back(std::move(h));
                continue;
            }
            h.tokens.push_back(c.word);
            h.state = states[c.parent];
            h.last = c.word;
            next.push_back(std::move(h));
        }
        live = std::move(next);
    }
    for (auto& h : live) done.push_back(std::move(h));
    const auto best = std::min_element(done.begin(), done.end(), [](const auto& a, const auto& b) { return better(a, b); });
    return best->tokens;
}

template <typename T>
std::vector<int> generate(const Mat<T>& nodes, const DecoderParams<T>& p, const DecodeOptions& options) {
    if (options.beam_width != 1) return beam_search(nodes, p, options);
    if (nodes.cols() != p.node_dim()) throw ValidationError("nodes", "node width does not match decoder");
    const Mat<T> projected = p.att_node * nodes.transpose();
    auto state = DecoderState<T>::zeros(static_cast<int>(p.layers.size()), p.hidden());
    std::vector<int> tokens;
    int word = Vocabulary::kBos;
    while (tokens.size() < options.max_len) {
        StepOutput<T> out = decode_step_projected(word, state, projected, p);
        Eigen::Index best = 0;
        log_softmax(out.logits).maxCoeff(&best);
        if (best == Vocabulary::kEos) break;
        word = static_cast<int>(best);
        tokens.push_back(word);
        state = std::move(out.state);
    }
    return tokens;
}

template <typename T>
corpus::Caption generate_caption(const Mat<T>& nodes, const DecoderParams<T>& p, const Vocabulary& vocab,
                                 const DecodeOptions& options) {
    const auto indices = generate(nodes, p, options);
    corpus::Caption c;
    for (const int i : indices) c.tokens.push_back(vocab.token(i));
    c.raw = corpus::join(c.tokens);
    return c;
}

#define OVC_INSTANTIATE(T)                                                                                          \
    template Attention<T> attend(const Mat<T>&, const DecoderState<T>&, const DecoderParams<T>&);                   \
    template Attention<T> attend_projected(const Mat<T>&, const DecoderState<T>&, const DecoderParams<T>&);         \
    template DecoderState<T> gru_step(const Vec<T>&, const DecoderState<T>&, const DecoderParams<T>&);              \
    template StepOutput<T> decode_step(int, const DecoderState<T>&, const Mat<T>&, const DecoderParams<T>&);        \
    template StepOutput<T> decode_step_projected(int, const DecoderState<T>&, const Mat<T>&,                        \
                                                 const DecoderParams<T>&);                                          \
    template T caption_loss(std::span<const Vec<T>>, std::span<const int>);                                        \
    template std::vector<int> generate(const Mat<T>&, const DecoderParams<T>&, const DecodeOptions&);              \
    template std::vector<int> beam_search(const Mat<T>&, const DecoderParams<T>&, const DecodeOptions&);           \
    template corpus::Caption generate_caption(const Mat<T>&, const DecoderParams<T>&, const Vocabulary&,            \
                                              const DecodeOptions&);

OVC_INSTANTIATE(float)
OVC_INSTANTIATE(double)

#undef OVC_INSTANTIATE

}  // namespace ovc::captioner
