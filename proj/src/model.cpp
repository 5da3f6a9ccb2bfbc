#include "ovc/model.hpp"

#include <algorithm>

#include "ovc/error.hpp"

namespace ovc::model {

using corpus::Vocabulary;

template <typename T>
ModelParams<T> ModelParams<T>::init(const ModelDims& d, std::uint64_t seed) {
    Rng rng(seed);
    ModelParams p;
    p.enhancer = enhance::EnhancerParams<T>::init(d.local_dim(), d.enhancer_hidden1, d.enhancer_hidden2, d.classes, rng);
    p.decoder = captioner::DecoderParams<T>::init(
        {d.vocab, d.fused_dim(), d.embed, d.hidden, d.layers, d.attention}, rng);
    return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros_like() const {
    ModelParams z = *this;
    z.visit([](const std::string&, Mat<T>& m) { m.setZero(); });
    return z;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
    std::size_t n = 0;
    visit([&n](const std::string&, const Mat<T>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
    ModelParams<U> out;
    auto convert = [](const Mat<T>& m) { return Mat<U>(m.template cast<U>()); };
    out.enhancer = {convert(enhancer.w1), convert(enhancer.b1), convert(enhancer.w2),
                    convert(enhancer.b2), convert(enhancer.w3), convert(enhancer.b3)};
    out.decoder.embedding = convert(decoder.embedding);
    out.decoder.att_node = convert(decoder.att_node);
    out.decoder.att_state = convert(decoder.att_state);
    out.decoder.att_score = convert(decoder.att_score);
    for (const auto& l : decoder.layers) out.decoder.layers.push_back({convert(l.w_in), convert(l.w_rec), convert(l.bias)});
    out.decoder.out_w = convert(decoder.out_w);
    out.decoder.out_b = convert(decoder.out_b);
    return out;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

template <typename T>
Vec<T> enhancement_scores(const ModelParams<T>& params, const Sample<T>& sample) {
    return enhance::enhance_forward<T>(enhance::mean_pool_local<T>(sample.nodes, params.enhancer.input_dim()),
                                       params.enhancer);
}

template <typename T>
Mat<T> fused_nodes(const ModelParams<T>& params, const Sample<T>& sample, bool use_de) {
    const Eigen::Index classes = params.enhancer.classes();
    Mat<T> h(sample.nodes.rows(), sample.nodes.cols() + classes);
    h.leftCols(sample.nodes.cols()) = sample.nodes;
    if (use_de) {
        h.rightCols(classes).rowwise() = enhancement_scores(params, sample).transpose();
    } else {
        h.rightCols(classes).setZero();
    }
    return h;
}

template <typename T>
T sample_loss(const ModelParams<T>& params, const Sample<T>& sample, const LossOptions& options) {
    const Mat<T> h = fused_nodes(params, sample, options.use_de);
    const auto& dec = params.decoder;
    auto state = captioner::DecoderState<T>::zeros(static_cast<int>(dec.layers.size()), dec.hidden());
    std::vector<Vec<T>> logits;
    for (std::size_t k = 0; k + 1 < sample.sequence.size(); ++k) {
        auto out = captioner::decode_step(sample.sequence[k], state, h, dec);
        logits.push_back(std::move(out.logits));
        state = std::move(out.state);
    }
    const std::span<const int> targets(sample.sequence.data() + 1, sample.sequence.size() - 1);
    const T cap = captioner::caption_loss<T>(logits, targets);
    if (!options.use_de) return cap;
    const T de = enhance::de_loss(enhancement_scores(params, sample), sample.label);
    return captioner::total_loss(cap, de, static_cast<T>(options.lambda));
}

namespace {

template <typename T>
struct LayerCache {
    Mat<T> x;      // input, per step block
    Mat<T> zprev;  // state before the update
    Mat<T> r, u, n, rec_n;
    Mat<T> d_in, d_rec;  // gate pre-activation gradients
};

template <typename T>
Mat<T> sigmoid_of(const Mat<T>& m) {
    return m.unaryExpr([](T v) { return sigmoid(v); });
}

}  // namespace

template <typename T>
BatchStats forward_backward(const ModelParams<T>& params, std::span<const Sample<T>* const> batch,
                            const LossOptions& options, ModelParams<T>* grad) {
    using Index = Eigen::Index;
    BatchStats stats;
    if (batch.empty()) return stats;
    const auto& enh = params.enhancer;
    const auto& dec = params.decoder;
    const Index b_count = static_cast<Index>(batch.size());
    const Index nodes = batch[0]->nodes.rows();
    const Index node_dim = batch[0]->nodes.cols();
    const Index classes = enh.classes();
    const Index fused = node_dim + classes;
    const Index local = enh.input_dim();
    const Index hid = dec.hidden();
    const Index att = dec.attention();
    const Index emb = dec.embed();
    const Index vocab = dec.vocab();
    const std::size_t n_layers = dec.layers.size();
    if (fused != dec.node_dim()) throw ValidationError("nodes", "node width does not match decoder");

    std::size_t steps = 0;
    for (const Sample<T>* s : batch) {
        if (s->nodes.rows() != nodes || s->nodes.cols() != node_dim) {
            throw ValidationError("batch", "all samples need the same node count and width");
        }
        if (s->sequence.size() < 2) throw ValidationError("sequence", "needs at least [BOS, EOS]");
        steps = std::max(steps, s->sequence.size() - 1);
    }
    const Index steps_i = static_cast<Index>(steps);
    const Index cols = steps_i * b_count;

    // Enhancement branch.
    Mat<T> pooled(local, b_count);
    for (Index b = 0; b < b_count; ++b) pooled.col(b) = enhance::mean_pool_local<T>(batch[b]->nodes, local);
    const Mat<T> a1 = (enh.w1 * pooled).colwise() + enh.b1.col(0);
    const Mat<T> h1 = a1.cwiseMax(T(0));
    const Mat<T> a2 = (enh.w2 * h1).colwise() + enh.b2.col(0);
    const Mat<T> h2 = a2.cwiseMax(T(0));
    const Mat<T> gamma = softmax_columns<T>((enh.w3 * h2).colwise() + enh.b3.col(0));

    // Fused nodes, one block of `nodes` columns per sample.
    Mat<T> h_all(fused, nodes * b_count);
    for (Index b = 0; b < b_count; ++b) {
        auto block = h_all.middleCols(b * nodes, nodes);
        block.topRows(node_dim) = batch[b]->nodes.transpose();
        if (options.use_de) {
            block.bottomRows(classes).colwise() = gamma.col(b);
        } else {
            block.bottomRows(classes).setZero();
        }
    }
    const Mat<T> proj_all = dec.att_node * h_all;  // att x (nodes * B)

    // Decoder forward.
    std::vector<int> inputs(static_cast<std::size_t>(cols), Vocabulary::kPad);
    std::vector<int> targets(static_cast<std::size_t>(cols), Vocabulary::kPad);
    for (Index k = 0; k < steps_i; ++k) {
        for (Index b = 0; b < b_count; ++b) {
            const auto& seq = batch[b]->sequence;
            const auto ku = static_cast<std::size_t>(k);
            const auto idx = static_cast<std::size_t>(k * b_count + b);
            if (ku + 1 < seq.size()) {
                inputs[idx] = seq[ku];
                targets[idx] = seq[ku + 1];
            }
        }
    }
    for (const int w : inputs) {
        if (w < 0 || w >= vocab) throw ValidationError("sequence", "word index outside vocabulary");
    }
    for (const int w : targets) {
        if (w < 0 || w >= vocab) throw ValidationError("sequence", "word index outside vocabulary");
    }

    std::vector<LayerCache<T>> cache(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        cache[l].x.resize(dec.layers[l].w_in.cols(), cols);
        cache[l].zprev.resize(hid, cols);
        cache[l].r.resize(hid, cols);
        cache[l].u.resize(hid, cols);
        cache[l].n.resize(hid, cols);
        cache[l].rec_n.resize(hid, cols);
    }
    Mat<T> top_out(hid, cols);
    Mat<T> alpha_all(nodes, cols);
    std::vector<Mat<T>> tanh_cache(static_cast<std::size_t>(cols));
    std::vector<Mat<T>> z(n_layers, Mat<T>::Zero(hid, b_count));

    for (Index k = 0; k < steps_i; ++k) {
        const Index c0 = k * b_count;
        auto x0 = cache[0].x.middleCols(c0, b_count);
        for (Index b = 0; b < b_count; ++b) {
            x0.col(b).head(emb) = dec.embedding.col(inputs[static_cast<std::size_t>(c0 + b)]);
        }
        const Mat<T> q = dec.att_state * z[n_layers - 1];
        for (Index b = 0; b < b_count; ++b) {
            const auto proj = proj_all.middleCols(b * nodes, nodes);
            Mat<T> s = (proj.colwise() + q.col(b)).array().tanh().matrix();
            const Vec<T> alpha = softmax(Vec<T>(s.transpose() * dec.att_score));
            x0.col(b).tail(att) = proj * alpha;
            alpha_all.col(c0 + b) = alpha;
            tanh_cache[static_cast<std::size_t>(c0 + b)] = std::move(s);
        }
        for (std::size_t l = 0; l < n_layers; ++l) {
            auto& c = cache[l];
            const auto& layer = dec.layers[l];
            if (l > 0) c.x.middleCols(c0, b_count) = z[l - 1];
            c.zprev.middleCols(c0, b_count) = z[l];
            const Mat<T> gi = (layer.w_in * c.x.middleCols(c0, b_count)).colwise() + layer.bias.col(0);
            const Mat<T> gr = layer.w_rec * z[l];
            const Mat<T> r = sigmoid_of<T>(gi.topRows(hid) + gr.topRows(hid));
            const Mat<T> u = sigmoid_of<T>(gi.middleRows(hid, hid) + gr.middleRows(hid, hid));
            const Mat<T> n = (gi.bottomRows(hid).array() + r.array() * gr.bottomRows(hid).array()).tanh().matrix();
            z[l] = ((T(1) - u.array()) * n.array() + u.array() * z[l].array()).matrix();
            c.r.middleCols(c0, b_count) = r;
            c.u.middleCols(c0, b_count) = u;
            c.n.middleCols(c0, b_count) = n;
            c.rec_n.middleCols(c0, b_count) = gr.bottomRows(hid);
        }
        top_out.middleCols(c0, b_count) = z[n_layers - 1];
    }

    const Mat<T> logits = (dec.out_w * top_out).colwise() + dec.out_b.col(0);
    Mat<T> d_logits = Mat<T>::Zero(vocab, cols);
    const T scale = T(1) / static_cast<T>(b_count);
    double cap_sum = 0;
    for (Index c = 0; c < cols; ++c) {
        const int target = targets[static_cast<std::size_t>(c)];
        if (target == Vocabulary::kPad) continue;
        const T lse = log_sum_exp(logits.col(c));
        cap_sum += static_cast<double>(lse - logits(target, c));
        Index best = 0;
        logits.col(c).maxCoeff(&best);
        ++stats.tokens;
        if (best == target) ++stats.correct;
        if (grad) {
            d_logits.col(c) = (logits.col(c).array() - lse).exp().matrix() * scale;
            d_logits(target, c) -= scale;
        }
    }

    Vec<T> d_gamma_ce = Vec<T>::Zero(classes);
    double de_sum = 0;
    Mat<T> de_grad = Mat<T>::Zero(classes, b_count);  // dL_DE / dlogits, per sample
    for (Index b = 0; b < b_count; ++b) {
        const int label = batch[b]->label;
        if (label < 0 || label >= classes) throw ValidationError("label", "class index out of range");
        const T p = gamma(label, b);
        de_sum += static_cast<double>(-std::log(std::max(p, static_cast<T>(enhance::kLogClamp))));
        if (p > static_cast<T>(enhance::kLogClamp)) {
            de_grad.col(b) = gamma.col(b);
            de_grad(label, b) -= T(1);
        }
    }

    stats.objects = batch.size();
    stats.caption_loss = cap_sum / static_cast<double>(b_count);
    stats.de_loss = de_sum / static_cast<double>(b_count);
    stats.total_loss = stats.caption_loss + (options.use_de ? options.lambda * stats.de_loss : 0.0);
    if (!grad) return stats;

    // Decoder backward.
    auto& gdec = grad->decoder;
    gdec.out_w.noalias() += d_logits * top_out.transpose();
    gdec.out_b.col(0) += d_logits.rowwise().sum();
    const Mat<T> d_top = dec.out_w.transpose() * d_logits;

    std::vector<Mat<T>> dz(n_layers, Mat<T>::Zero(hid, b_count));
    for (auto& c : cache) {
        c.d_in.resize(3 * hid, cols);
        c.d_rec.resize(3 * hid, cols);
    }
    Mat<T> d_proj = Mat<T>::Zero(att, nodes * b_count);
    Mat<T> d_query(att, cols);
    Mat<T> query_state(hid, cols);  // top state the attention conditioned on

    for (Index k = steps_i - 1; k >= 0; --k) {
        const Index c0 = k * b_count;
        Mat<T> d_out = dz[n_layers - 1] + d_top.middleCols(c0, b_count);
        Mat<T> d_x;
        for (std::size_t li = n_layers; li-- > 0;) {
            auto& c = cache[li];
            const auto& layer = dec.layers[li];
            if (li + 1 < n_layers) d_out = dz[li] + d_x;
            const auto r = c.r.middleCols(c0, b_count).array();
            const auto u = c.u.middleCols(c0, b_count).array();
            const auto n = c.n.middleCols(c0, b_count).array();
            const auto zp = c.zprev.middleCols(c0, b_count).array();
            const auto dn_pre = (d_out.array() * (T(1) - u) * (T(1) - n * n)).eval();
            const auto du_pre = (d_out.array() * (zp - n) * u * (T(1) - u)).eval();
            const auto dr_pre = (dn_pre * c.rec_n.middleCols(c0, b_count).array() * r * (T(1) - r)).eval();
            auto d_in = c.d_in.middleCols(c0, b_count);
            auto d_rec = c.d_rec.middleCols(c0, b_count);
            d_in.topRows(hid) = dr_pre.matrix();
            d_in.middleRows(hid, hid) = du_pre.matrix();
            d_in.bottomRows(hid) = dn_pre.matrix();
            d_rec.topRows(hid) = dr_pre.matrix();
            d_rec.middleRows(hid, hid) = du_pre.matrix();
            d_rec.bottomRows(hid) = (dn_pre * r).matrix();
            d_x = layer.w_in.transpose() * d_in;
            dz[li] = (d_out.array() * u).matrix() + layer.w_rec.transpose() * d_rec;
        }
        // d_x now holds the gradient of layer 0's input [embedding | context].
        for (Index b = 0; b < b_count; ++b) {
            const int word = inputs[static_cast<std::size_t>(c0 + b)];
            if (word != Vocabulary::kPad) gdec.embedding.col(word) += d_x.col(b).head(emb);
            const Vec<T> d_ctx = d_x.col(b).tail(att);
            const auto proj = proj_all.middleCols(b * nodes, nodes);
            const Vec<T> alpha = alpha_all.col(c0 + b);
            const Mat<T>& s = tanh_cache[static_cast<std::size_t>(c0 + b)];
            auto d_proj_b = d_proj.middleCols(b * nodes, nodes);
            d_proj_b.noalias() += d_ctx * alpha.transpose();
            const Vec<T> d_alpha = proj.transpose() * d_ctx;
            const Vec<T> d_score = (alpha.array() * (d_alpha.array() - alpha.dot(d_alpha))).matrix();
            gdec.att_score.col(0).noalias() += s * d_score;
            const Mat<T> d_pre =
                ((dec.att_score.col(0) * d_score.transpose()).array() * (T(1) - s.array() * s.array())).matrix();
            d_proj_b += d_pre;
            d_query.col(c0 + b) = d_pre.rowwise().sum();
        }
        query_state.middleCols(c0, b_count) = cache[n_layers - 1].zprev.middleCols(c0, b_count);
        dz[n_layers - 1].noalias() += dec.att_state.transpose() * d_query.middleCols(c0, b_count);
    }

    for (std::size_t l = 0; l < n_layers; ++l) {
        auto& g = gdec.layers[l];
        const auto& c = cache[l];
        g.w_in.noalias() += c.d_in * c.x.transpose();
        g.w_rec.noalias() += c.d_rec * c.zprev.transpose();
        g.bias.col(0) += c.d_in.rowwise().sum();
    }
    gdec.att_state.noalias() += d_query * query_state.transpose();
    gdec.embedding.col(Vocabulary::kPad).setZero();
    gdec.att_node.noalias() += d_proj * h_all.transpose();

    if (!options.use_de) return stats;

    // Enhancement backward: through the fused gamma columns and the L_DE term.
    const Mat<T> d_h = dec.att_node.transpose() * d_proj;
    const T lambda_scale = static_cast<T>(options.lambda) * scale;
    Mat<T> d_a3(classes, b_count);
    for (Index b = 0; b < b_count; ++b) {
        const Vec<T> d_g = d_h.middleCols(b * nodes, nodes).bottomRows(classes).rowwise().sum();
        const Vec<T> g = gamma.col(b);
        d_a3.col(b) = (g.array() * (d_g.array() - g.dot(d_g))).matrix() + lambda_scale * de_grad.col(b);
    }
    auto& genh = grad->enhancer;
    genh.w3.noalias() += d_a3 * h2.transpose();
    genh.b3.col(0) += d_a3.rowwise().sum();
    const Mat<T> d_a2 = ((enh.w3.transpose() * d_a3).array() * (a2.array() > T(0)).template cast<T>()).matrix();
    genh.w2.noalias() += d_a2 * h1.transpose();
    genh.b2.col(0) += d_a2.rowwise().sum();
    const Mat<T> d_a1 = ((enh.w2.transpose() * d_a2).array() * (a1.array() > T(0)).template cast<T>()).matrix();
    genh.w1.noalias() += d_a1 * pooled.transpose();
    genh.b1.col(0) += d_a1.rowwise().sum();
    (void)d_gamma_ce;
    return stats;
}

#define OVC_INSTANTIATE(T)                                                                                   \
    template Vec<T> enhancement_scores(const ModelParams<T>&, const Sample<T>&);                             \
    template Mat<T> fused_nodes(const ModelParams<T>&, const Sample<T>&, bool);                              \
    template T sample_loss(const ModelParams<T>&, const Sample<T>&, const LossOptions&);                     \
    template BatchStats forward_backward(const ModelParams<T>&, std::span<const Sample<T>* const>,           \
                                         const LossOptions&, ModelParams<T>*);

OVC_INSTANTIATE(float)
OVC_INSTANTIATE(double)

#undef OVC_INSTANTIATE

}  // namespace ovc::model
