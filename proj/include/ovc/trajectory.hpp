#pragma once

#include <string>
#include <vector>

#include "ovc/raster.hpp"

namespace ovc {

/// One tracked object: the frames it occurs in and its box in each.
struct Trajectory {
    std::string object_id;
    std::vector<int> timestamps;  ///< strictly increasing frame indices
    std::vector<Box> boxes;       ///< one per timestamp
    FrameSize frame_size;

    std::size_t length() const { return timestamps.size(); }

    bool operator==(const Trajectory&) const = default;
};

/// Throws ValidationError naming the offending field.
void validate(const Trajectory& trajectory);

}  // namespace ovc
