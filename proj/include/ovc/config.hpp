#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "ovc/model.hpp"

namespace ovc {

/// Flat training configuration. Text form is one `key = value` per line;
/// `#` starts a comment and strings are double-quoted.
struct TrainConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch_size = 8;
    std::size_t epochs = 200;
    double lambda = 0.1;
    std::size_t t_s = 40;
    bool use_global = true;
    bool use_local = true;
    bool use_color = true;
    bool use_spatial = true;
    bool use_de = true;
    std::uint64_t seed = 0;
    double grad_clip = 5.0;  ///< 0 disables clipping

    int feature_dim = 64;
    std::string extractor = "projection";
    int embed_dim = 512;
    int hidden_dim = 1024;
    int gru_layers = 2;
    int attention_dim = 256;
    int enhancer_hidden1 = 128;
    int enhancer_hidden2 = 128;
    std::string precision = "float32";  ///< "float32" or "float64"
    std::size_t min_count = 1;
    std::size_t max_len = 25;
    int beam_width = 1;

    /// Throws ValidationError naming the offending field.
    void validate() const;

    model::ModelDims dims(int vocab) const;

    bool operator==(const TrainConfig&) const = default;
};

/// Throws ParseError (with line) on syntax errors or unknown keys and
/// ValidationError on invalid values.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);
/// Every field, in declaration order; parse_config(to_text(c)) == c.
std::string to_text(const TrainConfig& config);

}  // namespace ovc
