#include "ovc/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ovc/error.hpp"
#include "ovc/rng.hpp"

namespace ovc::graph {

std::vector<std::size_t> sample_frames(std::size_t m, std::size_t nodes) {
    if (m == 0) throw ValidationError("trajectory", "cannot sample frames from an empty trajectory");
    if (nodes == 0) throw ValidationError("nodes", "must sample at least one frame");
    std::vector<std::size_t> out(nodes, 0);
    if (nodes == 1) return out;
    // round-half-up of the non-negative ratio, in exact integer arithmetic
    const std::size_t span = nodes - 1;
    for (std::size_t j = 0; j < nodes; ++j) out[j] = (2 * j * (m - 1) + span) / (2 * span);
    return out;
}

Eigen::VectorXd color_histogram(const Raster& crop) {
    if (crop.empty()) throw ValidationError("crop", "color histogram of an empty crop");
    Eigen::VectorXd h = Eigen::VectorXd::Zero(kHistogramDim);
    for (int y = 0; y < crop.height(); ++y) {
        for (int x = 0; x < crop.width(); ++x) {
            for (int c = 0; c < 3; ++c) h[c * kHistogramBins + crop.at(x, y, c) / 16] += 1.0;
        }
    }
    return h / static_cast<double>(crop.pixel_count());
}

Eigen::Vector4d normalize_box(const Box& box, FrameSize size) {
    if (size.width <= 0 || size.height <= 0) throw ValidationError("frame_size", "width and height must be positive");
    return {static_cast<double>(box.x) / size.width, static_cast<double>(box.y) / size.height,
            static_cast<double>(box.w) / size.width, static_cast<double>(box.h) / size.height};
}

ProjectionExtractor::ProjectionExtractor(int output_dim, std::uint64_t seed, int resize) : resize_(resize) {
    if (output_dim < 1 || resize < 1) throw ValidationError("extractor", "dimensions must be positive");
    const int in = 3 * resize * resize;
    Rng rng(seed);
    projection_.resize(output_dim, in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (int c = 0; c < in; ++c) {
        for (int r = 0; r < output_dim; ++r) projection_(r, c) = rng.normal() * scale;
    }
}

Eigen::VectorXd ProjectionExtractor::extract(const Raster& image) const {
    const auto pixels = resize_bilinear(image, resize_, resize_);
    const Eigen::Map<const Eigen::VectorXd> x(pixels.data(), static_cast<Eigen::Index>(pixels.size()));
    return projection_ * (2.0 * x.array() - 1.0).matrix();
}

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols, double scale) {
    Eigen::MatrixXd m(rows, cols);
    for (int c = 0; c < cols; ++c) {
        for (int r = 0; r < rows; ++r) m(r, c) = rng.normal() * scale;
    }
    return m;
}

/// 3x3 same-padded convolution + ReLU. Input/output layout (c, y, x).
std::vector<double> conv3x3_relu(const std::vector<double>& in, int channels, int size, const Eigen::MatrixXd& w) {
    const int out_channels = static_cast<int>(w.rows());
    std::vector<double> out(static_cast<std::size_t>(out_channels) * size * size);
    Eigen::VectorXd patch(channels * 9 + 1);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            int k = 0;
            for (int c = 0; c < channels; ++c) {
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        patch[k++] = (yy < 0 || yy >= size || xx < 0 || xx >= size)
                                         ? 0.0
                                         : in[(static_cast<std::size_t>(c) * size + yy) * size + xx];
                    }
                }
            }
            patch[k] = 1.0;
            const Eigen::VectorXd r = w * patch;
            for (int o = 0; o < out_channels; ++o) {
                out[(static_cast<std::size_t>(o) * size + y) * size + x] = std::max(0.0, r[o]);
            }
        }
    }
    return out;
}

std::vector<double> maxpool2(const std::vector<double>& in, int channels, int size) {
    const int half = size / 2;
    std::vector<double> out(static_cast<std::size_t>(channels) * half * half);
    for (int c = 0; c < channels; ++c) {
        for (int y = 0; y < half; ++y) {
            for (int x = 0; x < half; ++x) {
                const auto at = [&](int yy, int xx) { return in[(static_cast<std::size_t>(c) * size + yy) * size + xx]; };
                out[(static_cast<std::size_t>(c) * half + y) * half + x] =
                    std::max({at(2 * y, 2 * x), at(2 * y, 2 * x + 1), at(2 * y + 1, 2 * x), at(2 * y + 1, 2 * x + 1)});
            }
        }
    }
    return out;
}

}  // namespace

ConvExtractor::ConvExtractor(int output_dim, std::uint64_t seed) {
    if (output_dim < 1) throw ValidationError("extractor", "dimensions must be positive");
    Rng rng(seed);
    conv1_ = random_matrix(rng, kChannels1, 3 * 9 + 1, std::sqrt(2.0 / 27.0));
    conv2_ = random_matrix(rng, kChannels2, kChannels1 * 9 + 1, std::sqrt(2.0 / (kChannels1 * 9)));
    head_ = random_matrix(rng, output_dim, kChannels2 * 16, 1.0 / std::sqrt(kChannels2 * 16.0));
}

Eigen::VectorXd ConvExtractor::extract(const Raster& image) const {
    auto x = resize_bilinear(image, kInput, kInput);
    for (auto& v : x) v = 2.0 * v - 1.0;
    x = maxpool2(conv3x3_relu(x, 3, kInput, conv1_), kChannels1, kInput);
    x = maxpool2(conv3x3_relu(x, kChannels1, kInput / 2, conv2_), kChannels2, kInput / 2);
    const Eigen::Map<const Eigen::VectorXd> flat(x.data(), static_cast<Eigen::Index>(x.size()));
    return head_ * flat;
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name, int output_dim, std::uint64_t seed) {
    if (name == "projection") return std::make_unique<ProjectionExtractor>(output_dim, seed);
    if (name == "conv") return std::make_unique<ConvExtractor>(output_dim, seed);
    throw ValidationError("extractor", "unknown extractor '" + name + "'");
}

Eigen::MatrixXd TemporalGraph::node_matrix() const {
    const NodeLayout l = layout();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(nodes.size()), l.node_dim());
    for (std::size_t t = 0; t < nodes.size(); ++t) {
        const auto row = static_cast<Eigen::Index>(t);
        m.row(row).segment(0, l.local_dim()) = nodes[t].local.transpose();
        m.row(row).segment(l.global_offset(), l.feature_dim) = nodes[t].global.transpose();
        m.row(row).segment(l.box_offset(), kBoxDim) = nodes[t].box.transpose();
    }
    return m;
}

Eigen::VectorXd extract_local(const Raster& crop, const FeatureExtractor& extractor) {
    const Eigen::VectorXd hist = color_histogram(crop);
    Eigen::VectorXd out(extractor.output_dim() + kHistogramDim);
    out << extractor.extract(crop), hist;
    return out;
}

Eigen::VectorXd extract_global(const Raster& frame, const FeatureExtractor& extractor) {
    return extractor.extract(frame);
}

namespace {

const Raster& frame_at(std::span<const Raster> frames, const Trajectory& trajectory, int t) {
    if (t < 0 || static_cast<std::size_t>(t) >= frames.size()) {
        throw ValidationError("frames", "object " + trajectory.object_id + ": no frame for timestamp " + std::to_string(t));
    }
    return frames[static_cast<std::size_t>(t)];
}

}  // namespace

TemporalGraph build_graph(const Trajectory& trajectory, std::span<const Raster> frames,
                          const FeatureExtractor& extractor, std::size_t nodes) {
    validate(trajectory);
    TemporalGraph g;
    g.object_id = trajectory.object_id;
    g.feature_dim = extractor.output_dim();
    for (const std::size_t i : sample_frames(trajectory.length(), nodes)) {
        const int t = trajectory.timestamps[i];
        const Raster& frame = frame_at(frames, trajectory, t);
        if (frame.size() != trajectory.frame_size) {
            throw ValidationError("frames", "frame " + std::to_string(t) + " does not match the trajectory frame size");
        }
        const Box& box = trajectory.boxes[i];
        g.sampled_timestamps.push_back(t);
        g.nodes.push_back({extract_local(crop(frame, box), extractor), extract_global(frame, extractor),
                           normalize_box(box, trajectory.frame_size)});
    }
    return g;
}

namespace {

using nlohmann::json;

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

FeatureTable load_feature_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open feature file " + path.string());
    FeatureTable table;
    std::string line;
    std::size_t number = 0;
    std::size_t local_dim = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            FeatureRecord r;
            r.object_id = j.at("object_id").get<std::string>();
            r.t = j.at("t").get<int>();
            r.local = j.at("local").get<std::vector<double>>();
            r.global = j.at("global").get<std::vector<double>>();
            const auto box = j.at("box").get<std::vector<double>>();
            if (box.size() != 4) throw ValidationError("box", "expected 4 values");
            std::copy(box.begin(), box.end(), r.box.begin());
            if (r.local.size() != r.global.size() + kHistogramDim) {
                throw ValidationError("local", "length must equal len(global) + 48");
            }
            if (local_dim == 0) local_dim = r.local.size();
            if (r.local.size() != local_dim) throw ValidationError("local", "inconsistent feature dimension");
            table[r.object_id][r.t] = std::move(r);
        } catch (const json::exception& e) {
            throw ParseError(number, e.what());
        } catch (const ValidationError& e) {
            throw ParseError(number, e.what());
        }
    }
    return table;
}

void save_feature_file(const FeatureTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (const auto& [id, records] : table) {
        for (const auto& [t, r] : records) {
            nlohmann::ordered_json j;
            j["object_id"] = r.object_id;
            j["t"] = r.t;
            j["local"] = r.local;
            j["global"] = r.global;
            j["box"] = r.box;
            out << j.dump() << '\n';
        }
    }
}

void add_features(FeatureTable& table, const Trajectory& trajectory, std::span<const Raster> frames,
                  const FeatureExtractor& extractor) {
    validate(trajectory);
    auto& records = table[trajectory.object_id];
    for (std::size_t i = 0; i < trajectory.length(); ++i) {
        const int t = trajectory.timestamps[i];
        const Raster& frame = frame_at(frames, trajectory, t);
        FeatureRecord r;
        r.object_id = trajectory.object_id;
        r.t = t;
        r.local = to_std(extract_local(crop(frame, trajectory.boxes[i]), extractor));
        r.global = to_std(extract_global(frame, extractor));
        const Eigen::Vector4d b = normalize_box(trajectory.boxes[i], trajectory.frame_size);
        r.box = {b[0], b[1], b[2], b[3]};
        records[t] = std::move(r);
    }
}

TemporalGraph build_graph(const Trajectory& trajectory, const FeatureTable& table, std::size_t nodes) {
    validate(trajectory);
    const auto it = table.find(trajectory.object_id);
    if (it == table.end()) throw ValidationError("features", "no records for object " + trajectory.object_id);
    TemporalGraph g;
    g.object_id = trajectory.object_id;
    for (const std::size_t i : sample_frames(trajectory.length(), nodes)) {
        const int t = trajectory.timestamps[i];
        const auto rec = it->second.find(t);
        if (rec == it->second.end()) {
            throw ValidationError("features", "object " + trajectory.object_id + ": no record for timestamp " + std::to_string(t));
        }
        const FeatureRecord& r = rec->second;
        g.feature_dim = static_cast<int>(r.global.size());
        g.sampled_timestamps.push_back(t);
        g.nodes.push_back({to_eigen(r.local), to_eigen(r.global), Eigen::Vector4d(r.box[0], r.box[1], r.box[2], r.box[3])});
    }
    return g;
}

}  // namespace ovc::graph
