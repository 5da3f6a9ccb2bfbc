#include "ovc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "ovc/adam.hpp"
#include "ovc/error.hpp"
#include "ovc/rng.hpp"

namespace ovc::trainer {

using corpus::AnnotatedObject;
using corpus::Vocabulary;

const Video& DirectoryFrames::video(const std::string& video_id) const {
    auto it = cache_.find(video_id);
    if (it == cache_.end()) {
        const auto path = dir_ / "frames" / (video_id + ".ovcr");
        if (!std::filesystem::exists(path)) throw IoError("no frames for video " + video_id + " at " + path.string());
        it = cache_.emplace(video_id, read_video(path)).first;
    }
    return it->second;
}

MemoryFrames::MemoryFrames(std::vector<std::pair<std::string, Video>> videos) {
    for (auto& [id, v] : videos) videos_[id] = std::move(v);
}

const Video& MemoryFrames::video(const std::string& video_id) const {
    const auto it = videos_.find(video_id);
    if (it == videos_.end()) throw IoError("no frames for video " + video_id);
    return it->second;
}

FeatureFlags FeatureFlags::from(const TrainConfig& c) {
    return {c.use_global, c.use_local, c.use_color, c.use_spatial, c.use_de};
}

void FeatureFlags::apply(TrainConfig& c) const {
    c.use_global = global;
    c.use_local = local;
    c.use_color = color;
    c.use_spatial = spatial;
    c.use_de = de;
}

void mask_nodes(Eigen::MatrixXd& nodes, const graph::NodeLayout& layout, const FeatureFlags& flags) {
    const int d = layout.feature_dim;
    if (!flags.local) nodes.middleCols(0, d).setZero();
    if (!flags.color) nodes.middleCols(d, graph::kHistogramDim).setZero();
    if (!flags.global) nodes.middleCols(layout.global_offset(), d).setZero();
    if (!flags.spatial) nodes.middleCols(layout.box_offset(), graph::kBoxDim).setZero();
}

std::unique_ptr<graph::FeatureExtractor> make_extractor(const TrainConfig& config) {
    return graph::make_extractor(config.extractor, config.feature_dim, config.seed ^ 0x5eed0fea7ull);
}

Eigen::MatrixXd object_nodes(const AnnotatedObject& object, const FrameSource& frames,
                             const graph::FeatureExtractor& extractor, const TrainConfig& config) {
    const Video& video = frames.video(object.video_id);
    const auto g = graph::build_graph(object.trajectory, video, extractor, config.t_s);
    Eigen::MatrixXd nodes = g.node_matrix();
    mask_nodes(nodes, g.layout(), FeatureFlags::from(config));
    return nodes;
}

namespace {

template <typename T>
std::vector<model::Sample<T>> make_samples(std::span<const AnnotatedObject> objects, const FrameSource& frames,
                                           const TrainConfig& config, const Vocabulary& vocab) {
    const auto extractor = make_extractor(config);
    std::vector<model::Sample<T>> samples;
    samples.reserve(objects.size());
    for (const auto& o : objects) {
        model::Sample<T> s;
        s.nodes = object_nodes(o, frames, *extractor, config).cast<T>();
        s.label = static_cast<int>(o.super_class);
        s.sequence = corpus::encode(o.caption, vocab);
        samples.push_back(std::move(s));
    }
    return samples;
}

model::LossOptions loss_options(const TrainConfig& c) { return {c.lambda, c.use_de}; }

/// Teacher-forced accuracy in chunks to bound memory.
template <typename T>
double accuracy_of(const model::ModelParams<T>& params, const std::vector<model::Sample<T>>& samples,
                   const TrainConfig& config) {
    std::size_t tokens = 0, correct = 0;
    for (std::size_t i = 0; i < samples.size(); i += config.batch_size) {
        std::vector<const model::Sample<T>*> batch;
        for (std::size_t j = i; j < std::min(samples.size(), i + config.batch_size); ++j) batch.push_back(&samples[j]);
        const auto stats = model::forward_backward<T>(params, batch, loss_options(config), nullptr);
        tokens += stats.tokens;
        correct += stats.correct;
    }
    return tokens == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(tokens);
}

struct EngineBase {
    virtual ~EngineBase() = default;
    virtual EpochLog run_epoch(std::size_t epoch) = 0;
    virtual model::ModelParams<double> snapshot() const = 0;
    virtual double accuracy() const = 0;
};

template <typename T>
struct Engine final : EngineBase {
    Engine(const TrainConfig& c, std::span<const AnnotatedObject> objects, const FrameSource& frames,
           const Vocabulary& vocab)
        : config(c),
          samples(make_samples<T>(objects, frames, c, vocab)),
          params(model::ModelParams<T>::init(c.dims(static_cast<int>(vocab.size())), c.seed)),
          grad(params.zeros_like()),
          adam(params, AdamOptions{c.learning_rate, c.beta1, c.beta2, c.eps, c.grad_clip}),
          rng(c.seed ^ 0xba7c4ull) {
        order.resize(samples.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
    }

    EpochLog run_epoch(std::size_t epoch) override {
        rng.shuffle(std::span<std::size_t>(order));
        double cap = 0, de = 0, total = 0;
        std::size_t step = 0;
        for (std::size_t i = 0; i < order.size(); i += config.batch_size, ++step) {
            std::vector<const model::Sample<T>*> batch;
            for (std::size_t j = i; j < std::min(order.size(), i + config.batch_size); ++j) {
                batch.push_back(&samples[order[j]]);
            }
            grad.visit([](const std::string&, Mat<T>& m) { m.setZero(); });
            const auto stats = model::forward_backward<T>(params, batch, loss_options(config), &grad);
            if (!std::isfinite(stats.total_loss)) {
                throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(step) + " (global step " + std::to_string(adam.steps() + 1) +
                                      ")");
            }
            adam.step(params, grad);
            const double n = static_cast<double>(batch.size());
            cap += stats.caption_loss * n;
            de += stats.de_loss * n;
            total += stats.total_loss * n;
        }
        const double count = static_cast<double>(order.size());
        return {epoch, cap / count, de / count, total / count};
    }

    model::ModelParams<double> snapshot() const override { return params.template cast<double>(); }
    double accuracy() const override { return accuracy_of(params, samples, config); }

    TrainConfig config;
    std::vector<model::Sample<T>> samples;
    model::ModelParams<T> params;
    model::ModelParams<T> grad;
    Adam<model::ModelParams<T>> adam;
    Rng rng;
    std::vector<std::size_t> order;
};

}  // namespace

struct Trainer::Impl {
    TrainConfig config;
    Vocabulary vocab;
    std::unique_ptr<EngineBase> engine;
    std::vector<EpochLog> history;
};

Trainer::Trainer(TrainConfig config, std::span<const AnnotatedObject> train, const FrameSource& frames)
    : impl_(std::make_unique<Impl>()) {
    config.validate();
    if (train.empty()) throw ValidationError("dataset", "training set is empty");
    impl_->config = config;
    std::vector<corpus::Caption> captions;
    for (const auto& o : train) captions.push_back(o.caption);
    impl_->vocab = corpus::build_vocabulary(captions, config.min_count);
    if (config.precision == "float64") {
        impl_->engine = std::make_unique<Engine<double>>(config, train, frames, impl_->vocab);
    } else {
        impl_->engine = std::make_unique<Engine<float>>(config, train, frames, impl_->vocab);
    }
}

Trainer::~Trainer() = default;

EpochLog Trainer::run_epoch() {
    const EpochLog log = impl_->engine->run_epoch(impl_->history.size() + 1);
    impl_->history.push_back(log);
    return log;
}

std::size_t Trainer::epoch() const { return impl_->history.size(); }
const std::vector<EpochLog>& Trainer::history() const { return impl_->history; }
const Vocabulary& Trainer::vocab() const { return impl_->vocab; }
const TrainConfig& Trainer::config() const { return impl_->config; }
double Trainer::token_accuracy() const { return impl_->engine->accuracy(); }

Checkpoint Trainer::checkpoint() const {
    Checkpoint ck;
    ck.config = impl_->config;
    ck.vocab = impl_->vocab;
    ck.epoch = impl_->history.size();
    ck.history = impl_->history;
    ck.params = impl_->engine->snapshot();
    return ck;
}

Checkpoint train(const TrainConfig& config, std::span<const AnnotatedObject> objects, const FrameSource& frames,
                 const EpochCallback& callback) {
    Trainer trainer(config, objects, frames);
    for (std::size_t e = 0; e < config.epochs; ++e) {
        const EpochLog log = trainer.run_epoch();
        if (callback && !callback(log, trainer)) break;
    }
    return trainer.checkpoint();
}

namespace {

struct InferenceBase {
    virtual ~InferenceBase() = default;
    virtual std::vector<int> generate(const Eigen::MatrixXd& nodes) const = 0;
    virtual Eigen::VectorXd gamma(const Eigen::MatrixXd& nodes) const = 0;
    virtual std::pair<std::size_t, std::size_t> teacher_forced(const Eigen::MatrixXd& nodes,
                                                               const std::vector<int>& sequence, int label) const = 0;
};

template <typename T>
struct Inference final : InferenceBase {
    Inference(const Checkpoint& ck) : config(ck.config), params(ck.params.cast<T>()) {}

    model::Sample<T> sample(const Eigen::MatrixXd& nodes) const {
        model::Sample<T> s;
        s.nodes = nodes.cast<T>();
        return s;
    }

    std::vector<int> generate(const Eigen::MatrixXd& nodes) const override {
        const Mat<T> h = model::fused_nodes(params, sample(nodes), config.use_de);
        captioner::DecodeOptions opts;
        opts.beam_width = config.beam_width;
        opts.max_len = config.max_len;
        return captioner::generate<T>(h, params.decoder, opts);
    }

    Eigen::VectorXd gamma(const Eigen::MatrixXd& nodes) const override {
        return model::enhancement_scores(params, sample(nodes)).template cast<double>();
    }

    std::pair<std::size_t, std::size_t> teacher_forced(const Eigen::MatrixXd& nodes, const std::vector<int>& sequence,
                                                       int label) const override {
        model::Sample<T> s = sample(nodes);
        s.sequence = sequence;
        s.label = label;
        const model::Sample<T>* ptr = &s;
        const auto stats = model::forward_backward<T>(params, std::span<const model::Sample<T>* const>(&ptr, 1),
                                                      loss_options(config), nullptr);
        return {stats.correct, stats.tokens};
    }

    TrainConfig config;
    model::ModelParams<T> params;
};

}  // namespace

struct Captioner::Impl {
    TrainConfig config;
    Vocabulary vocab;
    std::unique_ptr<graph::FeatureExtractor> extractor;
    std::unique_ptr<InferenceBase> inference;
};

Captioner::Captioner(const Checkpoint& ck) : impl_(std::make_unique<Impl>()) {
    impl_->config = ck.config;
    impl_->vocab = ck.vocab;
    impl_->extractor = make_extractor(ck.config);
    if (ck.config.precision == "float64") {
        impl_->inference = std::make_unique<Inference<double>>(ck);
    } else {
        impl_->inference = std::make_unique<Inference<float>>(ck);
    }
}

Captioner::~Captioner() = default;
Captioner::Captioner(Captioner&&) noexcept = default;

corpus::Caption Captioner::caption(const AnnotatedObject& object, const FrameSource& frames) const {
    const auto nodes = object_nodes(object, frames, *impl_->extractor, impl_->config);
    const auto words = impl_->inference->generate(nodes);
    const auto tokens = corpus::decode(words, impl_->vocab);
    return corpus::Caption::from_text(corpus::join(tokens));
}

Eigen::VectorXd Captioner::gamma(const AnnotatedObject& object, const FrameSource& frames) const {
    return impl_->inference->gamma(object_nodes(object, frames, *impl_->extractor, impl_->config));
}

double Captioner::token_accuracy(std::span<const AnnotatedObject> objects, const FrameSource& frames) const {
    std::size_t correct = 0, tokens = 0;
    for (const auto& o : objects) {
        const auto nodes = object_nodes(o, frames, *impl_->extractor, impl_->config);
        const auto [c, t] =
            impl_->inference->teacher_forced(nodes, corpus::encode(o.caption, impl_->vocab), static_cast<int>(o.super_class));
        correct += c;
        tokens += t;
    }
    return tokens == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(tokens);
}

EvalReport evaluate(const Checkpoint& checkpoint, std::span<const AnnotatedObject> objects, const FrameSource& frames,
                    const metrics::CiderIdf* idf) {
    const Captioner captioner(checkpoint);
    EvalReport report;
    std::vector<metrics::ScoredPair> pairs;
    std::size_t hits = 0;
    for (const auto& o : objects) {
        const corpus::Caption cand = captioner.caption(o, frames);
        pairs.push_back({cand.tokens, {o.caption.tokens}});
        report.captions.push_back({o.object_id, cand.raw, corpus::join(o.caption.tokens)});
        Eigen::Index best = 0;
        captioner.gamma(o, frames).maxCoeff(&best);
        if (best == static_cast<Eigen::Index>(o.super_class)) ++hits;
    }
    report.objects = objects.size();
    if (!pairs.empty()) {
        report.metrics = pairs.size() >= 2 || idf ? metrics::score_all(pairs, idf) : metrics::MetricReport{};
        report.de_accuracy = static_cast<double>(hits) / static_cast<double>(pairs.size());
    }
    return report;
}

std::vector<std::pair<std::string, FeatureFlags>> ablation_ladder() {
    return {
        {"global", {true, false, false, false, false}},
        {"local", {false, true, false, false, false}},
        {"global+local", {true, true, false, false, false}},
        {"+color", {true, true, true, false, false}},
        {"+spatial (TG)", {true, true, true, true, false}},
        {"+DE (TG+DE)", {true, true, true, true, true}},
    };
}

namespace {

// Published numbers at full scale, kept for context next to local results.
const std::vector<ReferenceScores> kReference = {
    {16.1, 16.9, 39.3, 38.5}, {16.6, 18.0, 42.3, 45.5}, {18.1, 19.3, 44.5, 52.1},
    {18.7, 19.5, 44.3, 50.9}, {19.3, 19.7, 45.0, 50.2}, {20.2, 20.0, 45.1, 50.4},
};

}  // namespace

double median(std::vector<double> values) {
    if (values.empty()) return 0;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

AblationTable ablate(const TrainConfig& base, std::span<const AnnotatedObject> train,
                     std::span<const AnnotatedObject> test, const FrameSource& frames, std::size_t seeds,
                     const AblationProgress& progress) {
    if (seeds == 0) throw ValidationError("seeds", "need at least one seed");
    AblationTable table;
    table.seeds = seeds;
    std::vector<std::vector<std::string>> train_refs;
    for (const auto& o : train) train_refs.push_back({o.caption.tokens});
    const auto ladder = ablation_ladder();
    for (std::size_t r = 0; r < ladder.size(); ++r) {
        AblationRow row;
        row.name = ladder[r].first;
        row.flags = ladder[r].second;
        row.reference = kReference[r];
        for (std::size_t s = 0; s < seeds; ++s) {
            TrainConfig config = base;
            row.flags.apply(config);
            config.seed = base.seed + s;
            const Checkpoint ck = ovc::trainer::train(config, train, frames);
            EvalReport rep = evaluate(ck, test, frames);
            if (progress) progress(row.name, config.seed, rep);
            row.runs.push_back(std::move(rep));
        }
        auto med = [&row](auto field) {
            std::vector<double> v;
            for (const auto& run : row.runs) v.push_back(field(run));
            return median(v);
        };
        row.median.b1 = med([](const EvalReport& e) { return e.metrics.b1; });
        row.median.b2 = med([](const EvalReport& e) { return e.metrics.b2; });
        row.median.b3 = med([](const EvalReport& e) { return e.metrics.b3; });
        row.median.b4 = med([](const EvalReport& e) { return e.metrics.b4; });
        row.median.meteor = med([](const EvalReport& e) { return e.metrics.meteor; });
        row.median.rouge_l = med([](const EvalReport& e) { return e.metrics.rouge_l; });
        row.median.cider_d = med([](const EvalReport& e) { return e.metrics.cider_d; });
        row.de_accuracy_median = med([](const EvalReport& e) { return e.de_accuracy; });
        table.rows.push_back(std::move(row));
    }
    return table;
}

nlohmann::ordered_json to_json(const metrics::MetricReport& r) {
    nlohmann::ordered_json j;
    j["b1"] = r.b1;
    j["b2"] = r.b2;
    j["b3"] = r.b3;
    j["b4"] = r.b4;
    j["meteor"] = r.meteor;
    j["rouge_l"] = r.rouge_l;
    j["cider_d"] = r.cider_d;
    return j;
}

nlohmann::ordered_json to_json(const EvalReport& report, bool with_captions) {
    nlohmann::ordered_json j = to_json(report.metrics);
    j["de_accuracy"] = report.de_accuracy;
    j["objects"] = report.objects;
    if (with_captions) {
        auto& arr = j["captions"] = nlohmann::ordered_json::array();
        for (const auto& c : report.captions) {
            arr.push_back({{"object_id", c.object_id}, {"caption", c.caption}, {"reference", c.reference}});
        }
    }
    return j;
}

nlohmann::ordered_json to_json(const AblationTable& table) {
    nlohmann::ordered_json j;
    j["seeds"] = table.seeds;
    j["columns"] = {"b4", "meteor", "rouge_l", "cider_d"};
    auto& rows = j["rows"] = nlohmann::ordered_json::array();
    for (const auto& row : table.rows) {
        nlohmann::ordered_json r;
        r["name"] = row.name;
        r["flags"] = {{"global", row.flags.global}, {"local", row.flags.local}, {"color", row.flags.color},
                      {"spatial", row.flags.spatial}, {"de", row.flags.de}};
        r["median"] = {{"b4", row.median.b4}, {"meteor", row.median.meteor}, {"rouge_l", row.median.rouge_l},
                       {"cider_d", row.median.cider_d}};
        r["de_accuracy"] = row.de_accuracy_median;
        auto& runs = r["runs"] = nlohmann::ordered_json::array();
        for (const auto& run : row.runs) runs.push_back(to_json(run));
        if (row.reference) {
            r["reference"] = {{"b4", row.reference->b4}, {"meteor", row.reference->meteor},
                              {"rouge_l", row.reference->rouge_l}, {"cider_d", row.reference->cider_d}};
        }
        rows.push_back(std::move(r));
    }
    return j;
}

std::string pretty(const AblationTable& table) {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %8s   %s\n", "row", "B@4", "M", "R", "C",
                  "published (B@4/M/R/C)");
    out << buf;
    for (const auto& row : table.rows) {
        std::snprintf(buf, sizeof buf, "%-16s %8.2f %8.2f %8.2f %8.2f", row.name.c_str(), 100 * row.median.b4,
                      100 * row.median.meteor, 100 * row.median.rouge_l, 100 * row.median.cider_d);
        out << buf;
        if (row.reference) {
            std::snprintf(buf, sizeof buf, "   %.1f/%.1f/%.1f/%.1f", row.reference->b4, row.reference->meteor,
                          row.reference->rouge_l, row.reference->cider_d);
            out << buf;
        }
        out << "\n";
    }
    out << "median over " << table.seeds << " seed(s); scores x100\n";
    return out.str();
}

std::string pretty(const metrics::MetricReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "B@1 %.4f  B@2 %.4f  B@3 %.4f  B@4 %.4f  METEOR %.4f  ROUGE-L %.4f  CIDEr-D %.4f\n",
                  r.b1, r.b2, r.b3, r.b4, r.meteor, r.rouge_l, r.cider_d);
    return buf;
}

std::string loss_csv(std::span<const EpochLog> history) {
    std::string out = "epoch,l_cap,l_de,total\n";
    char buf[128];
    for (const auto& e : history) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.l_cap, e.l_de, e.total);
        out += buf;
    }
    return out;
}

}  // namespace ovc::trainer
