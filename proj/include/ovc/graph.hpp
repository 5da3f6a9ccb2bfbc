#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ovc/raster.hpp"
#include "ovc/trajectory.hpp"

namespace ovc::graph {

inline constexpr int kHistogramBins = 16;
inline constexpr int kHistogramDim = 3 * kHistogramBins;
inline constexpr int kBoxDim = 4;
inline constexpr int kDefaultNodes = 40;

/// Indices into a trajectory of length m for `nodes` equally spaced samples:
/// round(j * (m - 1) / (nodes - 1)), halves rounded away from zero. A
/// single sample picks index 0.
std::vector<std::size_t> sample_frames(std::size_t m, std::size_t nodes = kDefaultNodes);

/// Three 16-bin channel histograms (R, G, B), each normalized to sum 1.
Eigen::VectorXd color_histogram(const Raster& crop);

/// [x/W, y/H, w/W, h/H].
Eigen::Vector4d normalize_box(const Box& box, FrameSize frame_size);

/// Visual feature extractor applied to object crops and whole frames.
class FeatureExtractor {
  public:
    virtual ~FeatureExtractor() = default;
    virtual std::string name() const = 0;
    virtual int output_dim() const = 0;
    virtual Eigen::VectorXd extract(const Raster& image) const = 0;
};

/// Fixed seeded random projection of the image bilinearly resized to
/// resize x resize pixels.
class ProjectionExtractor final : public FeatureExtractor {
  public:
    ProjectionExtractor(int output_dim, std::uint64_t seed, int resize = 16);

    std::string name() const override { return "projection"; }
    int output_dim() const override { return static_cast<int>(projection_.rows()); }
    Eigen::VectorXd extract(const Raster& image) const override;

  private:
    int resize_;
    Eigen::MatrixXd projection_;
};

/// Two 3x3 convolution + ReLU + 2x2 max-pool stages over a 16x16 resize,
/// followed by a linear map to output_dim. Filters are seeded.
class ConvExtractor final : public FeatureExtractor {
  public:
    ConvExtractor(int output_dim, std::uint64_t seed);

    std::string name() const override { return "conv"; }
    int output_dim() const override { return static_cast<int>(head_.rows()); }
    Eigen::VectorXd extract(const Raster& image) const override;

  private:
    static constexpr int kInput = 16;
    static constexpr int kChannels1 = 8;
    static constexpr int kChannels2 = 16;
    Eigen::MatrixXd conv1_;  // kChannels1 x (3*9 + 1)
    Eigen::MatrixXd conv2_;  // kChannels2 x (kChannels1*9 + 1)
    Eigen::MatrixXd head_;   // output_dim x (kChannels2*4*4)
};

/// Builds an extractor by name ("projection" or "conv").
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name, int output_dim, std::uint64_t seed);

struct GraphNode {
    Eigen::VectorXd local;   ///< [crop features | color histogram], dim D+48
    Eigen::VectorXd global;  ///< frame features, dim D
    Eigen::Vector4d box;     ///< normalized box

    bool operator==(const GraphNode& o) const { return local == o.local && global == o.global && box == o.box; }
};

/// Column layout of a flattened node: [local | global | box].
struct NodeLayout {
    int feature_dim = 0;  ///< D

    int local_dim() const { return feature_dim + kHistogramDim; }
    int global_offset() const { return local_dim(); }
    int box_offset() const { return local_dim() + feature_dim; }
    int node_dim() const { return box_offset() + kBoxDim; }
};

struct TemporalGraph {
    std::string object_id;
    std::vector<int> sampled_timestamps;
    std::vector<GraphNode> nodes;
    int feature_dim = 0;

    NodeLayout layout() const { return {feature_dim}; }
    /// One row per node, columns per NodeLayout.
    Eigen::MatrixXd node_matrix() const;
};

Eigen::VectorXd extract_local(const Raster& crop, const FeatureExtractor& extractor);
Eigen::VectorXd extract_global(const Raster& frame, const FeatureExtractor& extractor);

/// frames are indexed by timestamp. Throws ValidationError naming a missing
/// timestamp.
TemporalGraph build_graph(const Trajectory& trajectory, std::span<const Raster> frames,
                          const FeatureExtractor& extractor, std::size_t nodes = kDefaultNodes);

/// One record of the precomputed-feature JSON Lines file.
struct FeatureRecord {
    std::string object_id;
    int t = 0;
    std::vector<double> local;
    std::vector<double> global;
    std::array<double, 4> box{};
};

/// object_id -> timestamp -> record.
using FeatureTable = std::map<std::string, std::map<int, FeatureRecord>>;

FeatureTable load_feature_file(const std::filesystem::path& path);
void save_feature_file(const FeatureTable& table, const std::filesystem::path& path);
/// Records for every timestamp of a trajectory.
void add_features(FeatureTable& table, const Trajectory& trajectory, std::span<const Raster> frames,
                  const FeatureExtractor& extractor);

/// Graph assembled from precomputed records instead of rasters.
TemporalGraph build_graph(const Trajectory& trajectory, const FeatureTable& table,
                          std::size_t nodes = kDefaultNodes);

}  // namespace ovc::graph
