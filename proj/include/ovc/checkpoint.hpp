#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ovc/config.hpp"
#include "ovc/corpus.hpp"
#include "ovc/model.hpp"

namespace ovc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct EpochLog {
    std::size_t epoch = 0;
    double l_cap = 0;
    double l_de = 0;
    double total = 0;

    bool operator==(const EpochLog&) const = default;
};

struct Checkpoint {
    TrainConfig config;
    corpus::Vocabulary vocab;
    std::size_t epoch = 0;
    std::vector<EpochLog> history;
    model::ModelParams<double> params;
};

/// Binary layout: "OVCK1", uint32 version, config text, vocabulary, epoch,
/// loss history, named parameter arrays (rows, cols, float64 LE), and a
/// trailing FNV-1a 64 checksum of everything before it.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws IoError on corruption or a version mismatch; nothing is returned
/// unless the whole file validates.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace ovc
