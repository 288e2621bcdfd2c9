#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gmcnn {

// 8-bit image, rows top to bottom, channels interleaved.
struct Image {
    int h = 0;
    int w = 0;
    int channels = 0;  // 1 or 3
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * w + x) * channels + c];
    }
    std::uint8_t& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * w + x) * channels + c];
    }
    friend bool operator==(const Image&, const Image&) = default;
};

// Accepts 8-bit gray, gray+alpha, RGB and RGBA; alpha is dropped. Palette and
// 16-bit inputs are converted to 8-bit.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& image);

// Gray copy using ITU-R BT.601 luma weights (identity for 1-channel input).
std::vector<double> to_luma(const Image& image);

}  // namespace gmcnn
