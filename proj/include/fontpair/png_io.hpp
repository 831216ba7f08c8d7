#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fontpair {

// Minimal PNG reader/writer (8-bit grayscale and RGB, zlib-backed).
// Glyph datasets are written as 8-bit grayscale with values {0, 255};
// figures (heatmaps, scatter plots) as 8-bit RGB.

struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 0;               // 1 = gray, 3 = rgb
    std::vector<uint8_t> pixels;    // row-major, width*height*channels
};

void write_png(const std::string& path, const PngImage& img);
PngImage read_png(const std::string& path);

} // namespace fontpair
