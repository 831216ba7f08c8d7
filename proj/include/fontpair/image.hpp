#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fontpair {

// One binary glyph raster: foreground = 1, background = 0.
struct GlyphImage {
    int size = 0;                 // square, size x size
    char char_class = 0;          // 'A'..'Z'
    std::string font_id;
    std::vector<uint8_t> pixels;  // row-major, values in {0, 1}

    uint8_t at(int y, int x) const { return pixels[size_t(y) * size_t(size) + size_t(x)]; }
    uint8_t& at(int y, int x) { return pixels[size_t(y) * size_t(size) + size_t(x)]; }

    int64_t foreground_count() const {
        int64_t n = 0;
        for (uint8_t p : pixels) n += p;
        return n;
    }
    double ink_fraction() const {
        return pixels.empty() ? 0.0 : double(foreground_count()) / double(pixels.size());
    }
};

} // namespace fontpair
