#include "ovc/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>

#include "ovc/error.hpp"

namespace ovc {

namespace {

constexpr std::array<char, 5> kVideoMagic = {'O', 'V', 'C', 'R', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> bytes = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                       static_cast<char>((v >> 16) & 0xff),
                                       static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes.data(), bytes.size());
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& buf, std::size_t offset) {
    return static_cast<std::uint32_t>(buf[offset]) | (static_cast<std::uint32_t>(buf[offset + 1]) << 8) |
           (static_cast<std::uint32_t>(buf[offset + 2]) << 16) |
           (static_cast<std::uint32_t>(buf[offset + 3]) << 24);
}

}  // namespace

bool box_inside(const Box& box, FrameSize size) {
    return box.w >= 1 && box.h >= 1 && box.x >= 0 && box.y >= 0 &&
           static_cast<long>(box.x) + box.w <= size.width && static_cast<long>(box.y) + box.h <= size.height;
}

Raster::Raster(int width, int height)
    : width_(width), height_(height), rgb_(static_cast<std::size_t>(width) * height * 3, 0) {
    if (width < 0 || height < 0) throw ValidationError("raster", "negative dimensions");
}

Raster::Raster(int width, int height, std::vector<std::uint8_t> rgb)
    : width_(width), height_(height), rgb_(std::move(rgb)) {
    if (width < 0 || height < 0 || rgb_.size() != static_cast<std::size_t>(width) * height * 3) {
        throw ValidationError("raster", "pixel buffer does not match dimensions");
    }
}

void Raster::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
    rgb_[i] = r;
    rgb_[i + 1] = g;
    rgb_[i + 2] = b;
}

Raster crop(const Raster& frame, const Box& box) {
    if (!box_inside(box, frame.size())) {
        throw ValidationError("box", "[" + std::to_string(box.x) + "," + std::to_string(box.y) + "," +
                                         std::to_string(box.w) + "," + std::to_string(box.h) +
                                         "] is outside the " + std::to_string(frame.width()) + "x" +
                                         std::to_string(frame.height()) + " frame");
    }
    std::vector<std::uint8_t> out;
    out.reserve(static_cast<std::size_t>(box.w) * box.h * 3);
    const auto& src = frame.data();
    for (int y = box.y; y < box.y + box.h; ++y) {
        const auto row = src.begin() + (static_cast<std::ptrdiff_t>(y) * frame.width() + box.x) * 3;
        out.insert(out.end(), row, row + static_cast<std::ptrdiff_t>(box.w) * 3);
    }
    return Raster(box.w, box.h, std::move(out));
}

std::vector<double> resize_bilinear(const Raster& image, int width, int height) {
    if (image.empty()) throw ValidationError("raster", "cannot resize an empty image");
    std::vector<double> out(static_cast<std::size_t>(width) * height * 3);
    const double sx = static_cast<double>(image.width()) / width;
    const double sy = static_cast<double>(image.height()) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height() - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, image.height() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width() - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, image.width() - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1 - wx) * image.at(x0, y0, c) + wx * image.at(x1, y0, c);
                const double bottom = (1 - wx) * image.at(x0, y1, c) + wx * image.at(x1, y1, c);
                out[(static_cast<std::size_t>(c) * height + y) * width + x] = ((1 - wy) * top + wy * bottom) / 255.0;
            }
        }
    }
    return out;
}

void write_video(const Video& frames, const std::filesystem::path& path) {
    if (frames.empty()) throw ValidationError("video", "no frames to write");
    const FrameSize size = frames.front().size();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(kVideoMagic.data(), kVideoMagic.size());
    put_u32(out, static_cast<std::uint32_t>(size.width));
    put_u32(out, static_cast<std::uint32_t>(size.height));
    put_u32(out, static_cast<std::uint32_t>(frames.size()));
    for (const auto& frame : frames) {
        if (frame.size() != size) throw ValidationError("video", "frames differ in size");
        out.write(reinterpret_cast<const char*>(frame.data().data()), static_cast<std::streamsize>(frame.data().size()));
    }
    if (!out) throw IoError("failed writing " + path.string());
}

Video read_video(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    constexpr std::size_t header = kVideoMagic.size() + 12;
    if (buf.size() < header || !std::equal(kVideoMagic.begin(), kVideoMagic.end(), buf.begin())) {
        throw IoError(path.string() + ": not a raster archive (bad magic)");
    }
    const auto w = get_u32(buf, 5), h = get_u32(buf, 9), t = get_u32(buf, 13);
    const std::size_t frame_bytes = static_cast<std::size_t>(w) * h * 3;
    if (buf.size() != header + frame_bytes * t) {
        throw IoError(path.string() + ": truncated raster archive");
    }
    Video frames;
    frames.reserve(t);
    for (std::uint32_t i = 0; i < t; ++i) {
        const auto begin = buf.begin() + static_cast<std::ptrdiff_t>(header + frame_bytes * i);
        frames.emplace_back(static_cast<int>(w), static_cast<int>(h),
                            std::vector<std::uint8_t>(begin, begin + static_cast<std::ptrdiff_t>(frame_bytes)));
    }
    return frames;
}

}  // namespace ovc
