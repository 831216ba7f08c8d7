#include "fontpair/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "fontpair/error.hpp"

namespace fontpair {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

uint32_t get_u32(const uint8_t* p) {
    return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 | uint32_t(p[3]);
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const uint8_t* data, size_t len) {
    put_u32(out, uint32_t(len));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data, data + len);
    uint32_t crc = uint32_t(crc32(0, out.data() + start, uInt(out.size() - start)));
    put_u32(out, crc);
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

} // namespace

void write_png(const std::string& path, const PngImage& img) {
    if (img.width <= 0 || img.height <= 0 ||
        (img.channels != 1 && img.channels != 3) ||
        img.pixels.size() != size_t(img.width) * size_t(img.height) * size_t(img.channels))
        fail("png.BadImage", "inconsistent image buffer for " + path);

    // Filter type 0 (None) per row.
    size_t stride = size_t(img.width) * size_t(img.channels);
    std::vector<uint8_t> raw;
    raw.reserve((stride + 1) * size_t(img.height));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        const uint8_t* row = img.pixels.data() + size_t(y) * stride;
        raw.insert(raw.end(), row, row + stride);
    }

    uLongf comp_len = compressBound(uLong(raw.size()));
    std::vector<uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), uLong(raw.size()), 6) != Z_OK)
        fail("png.CompressFailed", "deflate failed for " + path);
    comp.resize(comp_len);

    std::vector<uint8_t> out;
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);

    uint8_t ihdr[13];
    ihdr[0] = uint8_t(uint32_t(img.width) >> 24);
    ihdr[1] = uint8_t(uint32_t(img.width) >> 16);
    ihdr[2] = uint8_t(uint32_t(img.width) >> 8);
    ihdr[3] = uint8_t(img.width);
    ihdr[4] = uint8_t(uint32_t(img.height) >> 24);
    ihdr[5] = uint8_t(uint32_t(img.height) >> 16);
    ihdr[6] = uint8_t(uint32_t(img.height) >> 8);
    ihdr[7] = uint8_t(img.height);
    ihdr[8] = 8;                                   // bit depth
    ihdr[9] = img.channels == 1 ? 0 : 2;           // color type
    ihdr[10] = 0;
    ihdr[11] = 0;
    ihdr[12] = 0;
    put_chunk(out, "IHDR", ihdr, 13);
    put_chunk(out, "IDAT", comp.data(), comp.size());
    put_chunk(out, "IEND", nullptr, 0);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail("png.WriteFailed", "cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
    if (!f) fail("png.WriteFailed", "short write to " + path);
}

PngImage read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("png.UnreadableFile", "cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        fail("png.BadSignature", path + " is not a PNG file");

    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 12 <= bytes.size()) {
        uint32_t len = get_u32(bytes.data() + pos);
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const uint8_t* data = bytes.data() + pos + 8;
        if (pos + 12 + len > bytes.size()) fail("png.Truncated", path);
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) fail("png.BadHeader", path);
            width = int(get_u32(data));
            height = int(get_u32(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) fail("png.Unsupported", "interlaced PNG: " + path);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (width <= 0 || height <= 0) fail("png.BadHeader", path);
    if (bit_depth != 8 || (color_type != 0 && color_type != 2 && color_type != 6))
        fail("png.Unsupported",
             path + ": only 8-bit gray/RGB/RGBA supported");

    int src_ch = color_type == 0 ? 1 : (color_type == 2 ? 3 : 4);
    size_t stride = size_t(width) * size_t(src_ch);
    std::vector<uint8_t> raw((stride + 1) * size_t(height));
    uLongf raw_len = uLongf(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size())) != Z_OK ||
        raw_len != raw.size())
        fail("png.InflateFailed", path);

    // Undo per-row filters.
    std::vector<uint8_t> flat(stride * size_t(height));
    int bpp = src_ch;
    for (int y = 0; y < height; ++y) {
        uint8_t filter = raw[size_t(y) * (stride + 1)];
        const uint8_t* src = raw.data() + size_t(y) * (stride + 1) + 1;
        uint8_t* dst = flat.data() + size_t(y) * stride;
        const uint8_t* prev = y > 0 ? flat.data() + size_t(y - 1) * stride : nullptr;
        for (size_t x = 0; x < stride; ++x) {
            int a = x >= size_t(bpp) ? dst[x - size_t(bpp)] : 0;
            int b = prev ? prev[x] : 0;
            int c = (prev && x >= size_t(bpp)) ? prev[x - size_t(bpp)] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: fail("png.BadFilter", path);
            }
            dst[x] = uint8_t(v);
        }
    }

    PngImage img;
    img.width = width;
    img.height = height;
    img.channels = src_ch == 1 ? 1 : 3;
    img.pixels.resize(size_t(width) * size_t(height) * size_t(img.channels));
    if (src_ch == img.channels) {
        img.pixels = std::move(flat);
    } else { // drop alpha
        for (size_t i = 0; i < size_t(width) * size_t(height); ++i) {
            img.pixels[3 * i] = flat[4 * i];
            img.pixels[3 * i + 1] = flat[4 * i + 1];
            img.pixels[3 * i + 2] = flat[4 * i + 2];
        }
    }
    return img;
}

} // namespace fontpair
