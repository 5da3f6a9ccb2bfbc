#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ovc {

/// Pixel box, top-left origin.
struct Box {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool operator==(const Box&) const = default;
};

struct FrameSize {
    int width = 0;
    int height = 0;

    bool operator==(const FrameSize&) const = default;
};

/// True when the box has positive extent and lies inside the frame.
bool box_inside(const Box& box, FrameSize size);

/// Row-major interleaved RGB image.
class Raster {
  public:
    Raster() = default;
    Raster(int width, int height);
    Raster(int width, int height, std::vector<std::uint8_t> rgb);

    int width() const { return width_; }
    int height() const { return height_; }
    FrameSize size() const { return {width_, height_}; }
    bool empty() const { return width_ == 0 || height_ == 0; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

    std::uint8_t at(int x, int y, int channel) const {
        return rgb_[(static_cast<std::size_t>(y) * width_ + x) * 3 + channel];
    }
    std::uint8_t& at(int x, int y, int channel) {
        return rgb_[(static_cast<std::size_t>(y) * width_ + x) * 3 + channel];
    }
    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);

    const std::vector<std::uint8_t>& data() const { return rgb_; }

    bool operator==(const Raster&) const = default;

  private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> rgb_;
};

/// Crop of exactly box.w x box.h pixels. Throws ValidationError when the box
/// is not inside the raster.
Raster crop(const Raster& frame, const Box& box);

/// Bilinear resize with half-pixel centers; returns floats in [0, 1],
/// layout channel-major (c, y, x).
std::vector<double> resize_bilinear(const Raster& image, int width, int height);

using Video = std::vector<Raster>;

/// Raster archive: magic "OVCR1", uint32 LE width, height, frame count,
/// then T*W*H*3 bytes of row-major RGB.
void write_video(const Video& frames, const std::filesystem::path& path);
Video read_video(const std::filesystem::path& path);

}  // namespace ovc
