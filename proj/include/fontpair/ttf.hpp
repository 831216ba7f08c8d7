#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fontpair::ttf {

// Quadratic outline segment in font units (y up). is_line ignores the
// control point.
struct Segment {
    double x0, y0;
    double cx, cy;
    double x1, y1;
    bool is_line;
};

struct Outline {
    std::vector<Segment> segments; // closed, directed contours
    bool empty() const { return segments.empty(); }
    // Exact bounding box including quadratic extrema.
    void bounds(double& min_x, double& min_y, double& max_x, double& max_y) const;
};

// SFNT parser for TrueType ('glyf') outlines. CFF-flavoured OpenType is not
// supported and is reported as unparseable.
class Font {
public:
    // Throws Error("ttf.Unparseable", ...) on malformed or unsupported input.
    static Font parse(std::vector<uint8_t> bytes);

    int units_per_em() const { return units_per_em_; }
    int glyph_count() const { return num_glyphs_; }

    // 0 means "no glyph for this codepoint" (.notdef).
    int glyph_index(uint32_t codepoint) const;

    // Outline of a glyph, composites resolved. Empty outline for glyphs
    // without contours (e.g. space).
    Outline glyph_outline(int glyph_id) const;

private:
    std::vector<uint8_t> data_;
    uint32_t cmap_off_ = 0, cmap_len_ = 0;
    uint32_t loca_off_ = 0, loca_len_ = 0;
    uint32_t glyf_off_ = 0, glyf_len_ = 0;
    uint32_t cmap_sub_off_ = 0; // selected cmap subtable (absolute)
    int units_per_em_ = 0;
    int num_glyphs_ = 0;
    int index_to_loc_format_ = 0;

    void select_cmap_subtable();
    bool glyph_range(int glyph_id, uint32_t& off, uint32_t& len) const;
    void append_glyph(int glyph_id, const double xform[6], int depth,
                      Outline& out) const;
};

// Antialiased coverage rasterization of line segments in pixel space
// (y down). Accumulates exact signed areas per cell and integrates along
// rows; result per pixel is clamped |winding| in [0, 1].
struct Raster {
    int width, height;
    std::vector<double> acc;

    Raster(int w, int h) : width(w), height(h), acc(size_t(w + 1) * size_t(h), 0.0) {}

    void add_line(double x0, double y0, double x1, double y1);
    // Flattens the quadratic adaptively to ~0.1 px tolerance.
    void add_quad(double x0, double y0, double cx, double cy, double x1, double y1);
    std::vector<double> coverage() const;
};

} // namespace fontpair::ttf
