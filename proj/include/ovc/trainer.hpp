#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ovc/checkpoint.hpp"
#include "ovc/config.hpp"
#include "ovc/corpus.hpp"
#include "ovc/graph.hpp"
#include "ovc/metrics.hpp"
#include "ovc/raster.hpp"

namespace ovc::trainer {

/// Frames of a video by id.
class FrameSource {
  public:
    virtual ~FrameSource() = default;
    /// Throws IoError when the video is unavailable.
    virtual const Video& video(const std::string& video_id) const = 0;
};

/// Reads DIR/frames/<video_id>.ovcr on first use.
class DirectoryFrames final : public FrameSource {
  public:
    explicit DirectoryFrames(std::filesystem::path dir) : dir_(std::move(dir)) {}
    const Video& video(const std::string& video_id) const override;

  private:
    std::filesystem::path dir_;
    mutable std::map<std::string, Video> cache_;
};

class MemoryFrames final : public FrameSource {
  public:
    MemoryFrames() = default;
    explicit MemoryFrames(std::vector<std::pair<std::string, Video>> videos);
    void add(std::string video_id, Video frames) { videos_[std::move(video_id)] = std::move(frames); }
    const Video& video(const std::string& video_id) const override;

  private:
    std::map<std::string, Video> videos_;
};

struct FeatureFlags {
    bool global = true;
    bool local = true;
    bool color = true;
    bool spatial = true;
    bool de = true;

    static FeatureFlags from(const TrainConfig& config);
    void apply(TrainConfig& config) const;
};

/// Zeroes the node columns of every disabled segment: local features,
/// color histogram, global features, box.
void mask_nodes(Eigen::MatrixXd& nodes, const graph::NodeLayout& layout, const FeatureFlags& flags);

/// Extractor derived from the config's name, width and seed.
std::unique_ptr<graph::FeatureExtractor> make_extractor(const TrainConfig& config);

/// Masked node matrix (t_s x node_dim) for one object.
Eigen::MatrixXd object_nodes(const corpus::AnnotatedObject& object, const FrameSource& frames,
                             const graph::FeatureExtractor& extractor, const TrainConfig& config);

/// Joint enhancer + captioner optimization with Adam on shuffled mini-batches.
class Trainer {
  public:
    Trainer(TrainConfig config, std::span<const corpus::AnnotatedObject> train, const FrameSource& frames);
    ~Trainer();
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    /// One pass over the training set. Throws DivergenceError naming the
    /// epoch and step when the loss stops being finite.
    EpochLog run_epoch();

    std::size_t epoch() const;
    const std::vector<EpochLog>& history() const;
    const corpus::Vocabulary& vocab() const;
    const TrainConfig& config() const;
    Checkpoint checkpoint() const;
    /// Teacher-forced argmax accuracy over the training targets.
    double token_accuracy() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Return false to stop early.
using EpochCallback = std::function<bool(const EpochLog&, Trainer&)>;

/// Runs config.epochs epochs; `log` receives one line per epoch when set.
Checkpoint train(const TrainConfig& config, std::span<const corpus::AnnotatedObject> objects,
                 const FrameSource& frames, const EpochCallback& callback = {});

/// Captions for a set of objects from a trained checkpoint.
class Captioner {
  public:
    explicit Captioner(const Checkpoint& checkpoint);
    ~Captioner();
    Captioner(Captioner&&) noexcept;

    corpus::Caption caption(const corpus::AnnotatedObject& object, const FrameSource& frames) const;
    /// Enhancement scores gamma.
    Eigen::VectorXd gamma(const corpus::AnnotatedObject& object, const FrameSource& frames) const;
    double token_accuracy(std::span<const corpus::AnnotatedObject> objects, const FrameSource& frames) const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct GeneratedCaption {
    std::string object_id;
    std::string caption;
    std::string reference;
};

struct EvalReport {
    metrics::MetricReport metrics;
    double de_accuracy = 0;
    std::size_t objects = 0;
    std::vector<GeneratedCaption> captions;
};

/// Greedy (or configured beam) generation per object; caption metrics plus
/// enhancement accuracy. idf overrides the self-corpus CIDEr-D IDF.
EvalReport evaluate(const Checkpoint& checkpoint, std::span<const corpus::AnnotatedObject> objects,
                    const FrameSource& frames, const metrics::CiderIdf* idf = nullptr);

/// Published context numbers for a ladder row (B@4, M, R, C in percent).
struct ReferenceScores {
    double b4, meteor, rouge_l, cider_d;
};

struct AblationRow {
    std::string name;
    FeatureFlags flags;
    std::vector<EvalReport> runs;  ///< one per seed
    metrics::MetricReport median;
    double de_accuracy_median = 0;
    std::optional<ReferenceScores> reference;
};

struct AblationTable {
    std::vector<AblationRow> rows;
    std::size_t seeds = 0;
};

/// {global}, {local}, {global, local}, {+color}, {+spatial}, {+DE}.
std::vector<std::pair<std::string, FeatureFlags>> ablation_ladder();

using AblationProgress = std::function<void(const std::string& row, std::size_t seed, const EvalReport&)>;

/// Trains every ladder row for `seeds` seeds (base.seed, base.seed + 1, ...)
/// on `train` and evaluates on `test`.
AblationTable ablate(const TrainConfig& base, std::span<const corpus::AnnotatedObject> train,
                     std::span<const corpus::AnnotatedObject> test, const FrameSource& frames, std::size_t seeds,
                     const AblationProgress& progress = {});

double median(std::vector<double> values);

nlohmann::ordered_json to_json(const metrics::MetricReport& report);
nlohmann::ordered_json to_json(const EvalReport& report, bool with_captions = false);
nlohmann::ordered_json to_json(const AblationTable& table);
std::string pretty(const AblationTable& table);
std::string pretty(const metrics::MetricReport& report);

/// CSV `epoch,l_cap,l_de,total`.
std::string loss_csv(std::span<const EpochLog> history);

}  // namespace ovc::trainer
