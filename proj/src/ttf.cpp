#include "fontpair/ttf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fontpair/error.hpp"

namespace fontpair::ttf {

namespace {

[[noreturn]] void bad(const std::string& what) { fail("ttf.Unparseable", what); }

// Bounds-checked big-endian reader.
struct Reader {
    const uint8_t* p;
    uint32_t len;
    uint32_t pos = 0;

    Reader(const uint8_t* data, uint32_t n) : p(data), len(n) {}

    void need(uint32_t n) const {
        if (pos + n > len) bad("unexpected end of table");
    }
    uint8_t u8() { need(1); return p[pos++]; }
    uint16_t u16() {
        need(2);
        uint16_t v = uint16_t(p[pos]) << 8 | p[pos + 1];
        pos += 2;
        return v;
    }
    int16_t s16() { return int16_t(u16()); }
    uint32_t u32() {
        need(4);
        uint32_t v = uint32_t(p[pos]) << 24 | uint32_t(p[pos + 1]) << 16 |
                     uint32_t(p[pos + 2]) << 8 | p[pos + 3];
        pos += 4;
        return v;
    }
    void skip(uint32_t n) { need(n); pos += n; }
    void seek(uint32_t at) {
        if (at > len) bad("seek out of range");
        pos = at;
    }
};

constexpr uint32_t tag(const char t[5]) {
    return uint32_t(t[0]) << 24 | uint32_t(t[1]) << 16 | uint32_t(t[2]) << 8 | uint32_t(t[3]);
}

struct Xform {
    double m[6]; // x' = m0*x + m2*y + m4 ; y' = m1*x + m3*y + m5
};

const Xform kIdentity = {{1, 0, 0, 1, 0, 0}};

Xform compose(const Xform& p, const Xform& c) {
    Xform t;
    t.m[0] = p.m[0] * c.m[0] + p.m[2] * c.m[1];
    t.m[1] = p.m[1] * c.m[0] + p.m[3] * c.m[1];
    t.m[2] = p.m[0] * c.m[2] + p.m[2] * c.m[3];
    t.m[3] = p.m[1] * c.m[2] + p.m[3] * c.m[3];
    t.m[4] = p.m[0] * c.m[4] + p.m[2] * c.m[5] + p.m[4];
    t.m[5] = p.m[1] * c.m[4] + p.m[3] * c.m[5] + p.m[5];
    return t;
}

void apply(const double m[6], double x, double y, double& ox, double& oy) {
    ox = m[0] * x + m[2] * y + m[4];
    oy = m[1] * x + m[3] * y + m[5];
}

struct Point {
    double x, y;
    bool on_curve;
};

// Emit closed-contour segments from TrueType points (consecutive off-curve
// points imply on-curve midpoints).
void emit_contour(const std::vector<Point>& pts, std::vector<Segment>& out) {
    size_t n = pts.size();
    if (n < 2) return;

    Point start;
    size_t first = 0;
    if (pts[0].on_curve) {
        start = pts[0];
        first = 1;
    } else if (pts[n - 1].on_curve) {
        start = pts[n - 1];
    } else {
        start = {(pts[0].x + pts[n - 1].x) / 2, (pts[0].y + pts[n - 1].y) / 2, true};
    }

    Point cur = start;
    bool have_ctrl = false;
    Point ctrl{};
    auto line_to = [&](const Point& q) {
        out.push_back({cur.x, cur.y, 0, 0, q.x, q.y, true});
        cur = q;
    };
    auto quad_to = [&](const Point& c, const Point& q) {
        out.push_back({cur.x, cur.y, c.x, c.y, q.x, q.y, false});
        cur = q;
    };

    for (size_t i = 0; i < n; ++i) {
        const Point& q = pts[(first + i) % n];
        if (q.on_curve) {
            if (have_ctrl) {
                quad_to(ctrl, q);
                have_ctrl = false;
            } else if (q.x != cur.x || q.y != cur.y) {
                line_to(q);
            } else {
                cur = q;
            }
        } else {
            if (have_ctrl) {
                Point mid{(ctrl.x + q.x) / 2, (ctrl.y + q.y) / 2, true};
                quad_to(ctrl, mid);
            }
            ctrl = q;
            have_ctrl = true;
        }
    }
    if (have_ctrl)
        quad_to(ctrl, start);
    else if (cur.x != start.x || cur.y != start.y)
        line_to(start);
}

} // namespace

void Outline::bounds(double& min_x, double& min_y, double& max_x, double& max_y) const {
    min_x = min_y = 1e300;
    max_x = max_y = -1e300;
    auto grow = [&](double x, double y) {
        min_x = std::min(min_x, x);
        min_y = std::min(min_y, y);
        max_x = std::max(max_x, x);
        max_y = std::max(max_y, y);
    };
    for (const Segment& s : segments) {
        grow(s.x0, s.y0);
        grow(s.x1, s.y1);
        if (s.is_line) continue;
        // Quadratic axis extrema at t = (p0-c)/(p0-2c+p1).
        double den_x = s.x0 - 2 * s.cx + s.x1;
        if (den_x != 0) {
            double t = (s.x0 - s.cx) / den_x;
            if (t > 0 && t < 1) {
                double u = 1 - t;
                grow(u * u * s.x0 + 2 * u * t * s.cx + t * t * s.x1,
                     u * u * s.y0 + 2 * u * t * s.cy + t * t * s.y1);
            }
        }
        double den_y = s.y0 - 2 * s.cy + s.y1;
        if (den_y != 0) {
            double t = (s.y0 - s.cy) / den_y;
            if (t > 0 && t < 1) {
                double u = 1 - t;
                grow(u * u * s.x0 + 2 * u * t * s.cx + t * t * s.x1,
                     u * u * s.y0 + 2 * u * t * s.cy + t * t * s.y1);
            }
        }
    }
}

Font Font::parse(std::vector<uint8_t> bytes) {
    Font font;
    font.data_ = std::move(bytes);
    Reader r(font.data_.data(), uint32_t(font.data_.size()));

    uint32_t version = r.u32();
    if (version == tag("OTTO"))
        bad("CFF-flavoured OpenType is not supported");
    if (version != 0x00010000 && version != tag("true"))
        bad("not a TrueType font");

    uint16_t num_tables = r.u16();
    r.skip(6); // searchRange, entrySelector, rangeShift

    uint32_t head_off = 0, head_len = 0, maxp_off = 0, maxp_len = 0;
    for (int i = 0; i < num_tables; ++i) {
        uint32_t t = r.u32();
        r.u32(); // checksum
        uint32_t off = r.u32();
        uint32_t len = r.u32();
        if (uint64_t(off) + len > font.data_.size()) bad("table extends past end of file");
        if (t == tag("head")) { head_off = off; head_len = len; }
        else if (t == tag("maxp")) { maxp_off = off; maxp_len = len; }
        else if (t == tag("cmap")) { font.cmap_off_ = off; font.cmap_len_ = len; }
        else if (t == tag("loca")) { font.loca_off_ = off; font.loca_len_ = len; }
        else if (t == tag("glyf")) { font.glyf_off_ = off; font.glyf_len_ = len; }
    }
    if (!head_off || !maxp_off || !font.cmap_off_ || !font.loca_off_ || !font.glyf_off_)
        bad("missing required table (head/maxp/cmap/loca/glyf)");

    {
        Reader h(font.data_.data() + head_off, head_len);
        h.skip(12);
        if (h.u32() != 0x5f0f3cf5) bad("bad head magic");
        h.u16(); // flags
        font.units_per_em_ = h.u16();
        if (font.units_per_em_ <= 0) bad("bad unitsPerEm");
        h.skip(16 + 8 + 2 + 2 + 2); // dates, bbox, macStyle, lowestRecPPEM, fontDirectionHint
        font.index_to_loc_format_ = h.s16();
        if (font.index_to_loc_format_ != 0 && font.index_to_loc_format_ != 1)
            bad("bad indexToLocFormat");
    }
    {
        Reader m(font.data_.data() + maxp_off, maxp_len);
        m.u32();
        font.num_glyphs_ = m.u16();
        if (font.num_glyphs_ <= 0) bad("no glyphs");
    }

    uint32_t loca_entries = font.index_to_loc_format_ == 0 ? font.loca_len_ / 2
                                                           : font.loca_len_ / 4;
    if (loca_entries < uint32_t(font.num_glyphs_) + 1) bad("loca too short");

    font.select_cmap_subtable();
    return font;
}

void Font::select_cmap_subtable() {
    Reader r(data_.data() + cmap_off_, cmap_len_);
    r.u16(); // version
    uint16_t n = r.u16();
    int best_score = 0;
    for (int i = 0; i < n; ++i) {
        r.seek(4 + uint32_t(i) * 8);
        r.u16(); // platform
        r.u16(); // encoding
        uint32_t off = r.u32();
        if (off + 2 > cmap_len_) continue;
        Reader s(data_.data() + cmap_off_ + off, cmap_len_ - off);
        uint16_t format = s.u16();
        int score = format == 12 ? 4 : format == 4 ? 3 : format == 6 ? 2
                  : format == 0 ? 1 : 0;
        if (score > best_score) {
            best_score = score;
            cmap_sub_off_ = cmap_off_ + off;
        }
    }
    if (best_score == 0) bad("no usable cmap subtable (formats 0/4/6/12)");
}

int Font::glyph_index(uint32_t cp) const {
    Reader s(data_.data() + cmap_sub_off_, uint32_t(data_.size()) - cmap_sub_off_);
    uint16_t format = s.u16();
    if (format == 0) {
        s.skip(4);
        if (cp > 255) return 0;
        s.skip(cp);
        return s.u8();
    }
    if (format == 4) {
        s.skip(4);
        uint16_t seg_x2 = s.u16();
        s.skip(6);
        uint32_t end_base = s.pos;
        if (cp > 0xffff) return 0;
        for (uint32_t seg = 0; seg * 2 < seg_x2; ++seg) {
            s.seek(end_base + seg * 2);
            uint16_t end = s.u16();
            if (cp > end) continue;
            s.seek(end_base + seg_x2 + 2 + seg * 2);
            uint16_t start = s.u16();
            if (cp < start) return 0;
            s.seek(end_base + 2 * seg_x2 + 2 + seg * 2);
            int16_t delta = s.s16();
            uint32_t range_off_at = end_base + 3 * seg_x2 + 2 + seg * 2;
            s.seek(range_off_at);
            uint16_t range_off = s.u16();
            if (range_off == 0) return (uint16_t(cp) + delta) & 0xffff;
            // Offset is relative to the idRangeOffset entry itself.
            s.seek(range_off_at + range_off + 2 * (cp - start));
            uint16_t g = s.u16();
            if (g == 0) return 0;
            return (g + delta) & 0xffff;
        }
        return 0;
    }
    if (format == 6) {
        s.skip(4);
        uint16_t first = s.u16();
        uint16_t count = s.u16();
        if (cp < first || cp >= uint32_t(first) + count) return 0;
        s.skip((cp - first) * 2);
        return s.u16();
    }
    if (format == 12) {
        s.skip(10);
        uint32_t groups = s.u32();
        for (uint32_t i = 0; i < groups; ++i) {
            uint32_t start = s.u32(), end = s.u32(), gid = s.u32();
            if (cp >= start && cp <= end) return int(gid + (cp - start));
        }
        return 0;
    }
    return 0;
}

bool Font::glyph_range(int glyph_id, uint32_t& off, uint32_t& len) const {
    if (glyph_id < 0 || glyph_id >= num_glyphs_) return false;
    Reader r(data_.data() + loca_off_, loca_len_);
    uint32_t a, b;
    if (index_to_loc_format_ == 0) {
        r.seek(uint32_t(glyph_id) * 2);
        a = uint32_t(r.u16()) * 2;
        b = uint32_t(r.u16()) * 2;
    } else {
        r.seek(uint32_t(glyph_id) * 4);
        a = r.u32();
        b = r.u32();
    }
    if (b < a || b > glyf_len_) bad("corrupt loca entry");
    off = glyf_off_ + a;
    len = b - a;
    return true;
}

void Font::append_glyph(int glyph_id, const double xform[6], int depth, Outline& out) const {
    if (depth > 8) bad("composite glyph nesting too deep");
    uint32_t off, len;
    if (!glyph_range(glyph_id, off, len)) bad("glyph id out of range");
    if (len == 0) return; // empty glyph

    Reader r(data_.data() + off, len);
    int16_t n_contours = r.s16();
    r.skip(8); // bbox

    if (n_contours >= 0) {
        std::vector<uint16_t> ends(size_t(n_contours), 0);
        uint16_t n_points = 0;
        for (int i = 0; i < n_contours; ++i) {
            ends[size_t(i)] = r.u16();
            n_points = uint16_t(ends[size_t(i)] + 1);
        }
        uint16_t instr_len = r.u16();
        r.skip(instr_len);

        std::vector<uint8_t> flags;
        flags.reserve(n_points);
        while (flags.size() < n_points) {
            uint8_t f = r.u8();
            flags.push_back(f);
            if (f & 0x08) { // REPEAT
                uint8_t rep = r.u8();
                for (int j = 0; j < rep && flags.size() < n_points; ++j) flags.push_back(f);
            }
        }

        std::vector<Point> pts(n_points, Point{});
        int x = 0;
        for (uint16_t i = 0; i < n_points; ++i) {
            uint8_t f = flags[i];
            if (f & 0x02) {
                uint8_t d = r.u8();
                x += (f & 0x10) ? d : -d;
            } else if (!(f & 0x10)) {
                x += r.s16();
            }
            pts[i].x = x;
            pts[i].on_curve = (f & 0x01) != 0;
        }
        int y = 0;
        for (uint16_t i = 0; i < n_points; ++i) {
            uint8_t f = flags[i];
            if (f & 0x04) {
                uint8_t d = r.u8();
                y += (f & 0x20) ? d : -d;
            } else if (!(f & 0x20)) {
                y += r.s16();
            }
            pts[i].y = y;
        }
        for (Point& p : pts) apply(xform, p.x, p.y, p.x, p.y);

        size_t begin = 0;
        std::vector<Point> contour;
        for (int c = 0; c < n_contours; ++c) {
            size_t end = size_t(ends[size_t(c)]) + 1;
            if (end < begin + 1 || end > pts.size()) bad("corrupt contour ends");
            contour.assign(pts.begin() + long(begin), pts.begin() + long(end));
            emit_contour(contour, out.segments);
            begin = end;
        }
        return;
    }

    // Composite glyph.
    while (true) {
        uint16_t flags = r.u16();
        uint16_t component = r.u16();
        double dx = 0, dy = 0;
        if (flags & 0x0002) { // ARGS_ARE_XY_VALUES
            if (flags & 0x0001) {
                dx = r.s16();
                dy = r.s16();
            } else {
                dx = int8_t(r.u8());
                dy = int8_t(r.u8());
            }
        } else {
            // Point-matching placement is not supported.
            bad("composite glyph uses point matching");
        }
        Xform c = kIdentity;
        if (flags & 0x0008) { // WE_HAVE_A_SCALE
            double sc = r.s16() / 16384.0;
            c.m[0] = c.m[3] = sc;
        } else if (flags & 0x0040) { // X_AND_Y_SCALE
            c.m[0] = r.s16() / 16384.0;
            c.m[3] = r.s16() / 16384.0;
        } else if (flags & 0x0080) { // TWO_BY_TWO
            c.m[0] = r.s16() / 16384.0;
            c.m[1] = r.s16() / 16384.0;
            c.m[2] = r.s16() / 16384.0;
            c.m[3] = r.s16() / 16384.0;
        }
        c.m[4] = dx;
        c.m[5] = dy;
        Xform parent;
        std::memcpy(parent.m, xform, sizeof(parent.m));
        Xform total = compose(parent, c);
        append_glyph(component, total.m, depth + 1, out);
        if (!(flags & 0x0020)) break; // MORE_COMPONENTS
    }
}

Outline Font::glyph_outline(int glyph_id) const {
    Outline out;
    append_glyph(glyph_id, kIdentity.m, 0, out);
    return out;
}

// --- coverage rasterizer -------------------------------------------------

void Raster::add_line(double x0, double y0, double x1, double y1) {
    if (y0 == y1) return;
    double dir = 1.0;
    if (y0 > y1) {
        dir = -1.0;
        std::swap(x0, x1);
        std::swap(y0, y1);
    }
    // Clamp x into the padded grid; the dataset transform keeps real
    // glyphs inside the margin so this only absorbs numeric fuzz.
    auto cx = [this](double x) { return std::clamp(x, 0.0, double(width) - 1e-9); };
    double dxdy = (x1 - x0) / (y1 - y0);
    if (y0 < 0) {
        x0 -= y0 * dxdy; // x at y = 0
        y0 = 0;
    }
    if (y1 > height) y1 = height;
    if (y0 >= y1) return;

    int y_first = int(std::floor(y0));
    int y_last = int(std::ceil(y1));
    for (int y = y_first; y < y_last; ++y) {
        if (y < 0 || y >= height) continue;
        size_t row = size_t(y) * size_t(width + 1);
        double band_y0 = std::max(double(y), y0);
        double band_y1 = std::min(double(y + 1), y1);
        double dy = band_y1 - band_y0;
        if (dy <= 0) continue;
        double x_start = x0 + (band_y0 - y0) * dxdy;
        double x_end = x0 + (band_y1 - y0) * dxdy;
        double xl = cx(std::min(x_start, x_end));
        double xr = cx(std::max(x_start, x_end));
        double d = dy * dir;

        int x0i = int(std::floor(xl));
        int x1i = int(std::ceil(xr));
        if (x1i <= x0i + 1) {
            double xmf = 0.5 * (xl + xr) - x0i;
            acc[row + size_t(x0i)] += d * (1.0 - xmf);
            acc[row + size_t(x0i) + 1] += d * xmf;
        } else {
            double s = 1.0 / (xr - xl);
            double x0f = xl - x0i;
            double a0 = 0.5 * s * (1.0 - x0f) * (1.0 - x0f);
            double x1f = xr - (x1i - 1);
            double am = 0.5 * s * x1f * x1f;
            acc[row + size_t(x0i)] += d * a0;
            if (x1i == x0i + 2) {
                acc[row + size_t(x0i) + 1] += d * (1.0 - a0 - am);
            } else {
                double a1 = s * (1.5 - x0f);
                acc[row + size_t(x0i) + 1] += d * (a1 - a0);
                for (int xi = x0i + 2; xi < x1i - 1; ++xi)
                    acc[row + size_t(xi)] += d * s;
                double a2 = a1 + double(x1i - x0i - 3) * s;
                acc[row + size_t(x1i) - 1] += d * (1.0 - a2 - am);
            }
            acc[row + size_t(x1i)] += d * am;
        }
    }
}

void Raster::add_quad(double x0, double y0, double cx, double cy, double x1, double y1) {
    // Max deviation of the curve from its chord is |p0 - 2c + p1| / 4;
    // subdividing n times shrinks it by n^2. Tolerance 0.1 px.
    double ddx = x0 - 2 * cx + x1;
    double ddy = y0 - 2 * cy + y1;
    double dev = 0.25 * std::sqrt(ddx * ddx + ddy * ddy);
    int n = std::clamp(int(std::ceil(std::sqrt(dev / 0.1))), 1, 64);
    double px = x0, py = y0;
    for (int i = 1; i <= n; ++i) {
        double t = double(i) / n;
        double u = 1.0 - t;
        double qx = u * u * x0 + 2 * u * t * cx + t * t * x1;
        double qy = u * u * y0 + 2 * u * t * cy + t * t * y1;
        add_line(px, py, qx, qy);
        px = qx;
        py = qy;
    }
}

std::vector<double> Raster::coverage() const {
    std::vector<double> out(size_t(width) * size_t(height));
    for (int y = 0; y < height; ++y) {
        double sum = 0.0;
        const double* row = acc.data() + size_t(y) * size_t(width + 1);
        double* dst = out.data() + size_t(y) * size_t(width);
        for (int x = 0; x < width; ++x) {
            sum += row[x];
            dst[x] = std::min(1.0, std::fabs(sum));
        }
    }
    return out;
}

} // namespace fontpair::ttf
