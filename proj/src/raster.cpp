#include "fontpair/raster.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>

#include <json.hpp>

#include "fontpair/error.hpp"
#include "fontpair/parallel.hpp"
#include "fontpair/png_io.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace fontpair {

std::string font_id_from_path(const std::string& path, const std::string& root) {
    fs::path p(path);
    std::string rel;
    if (!root.empty()) {
        std::error_code ec;
        fs::path r = fs::relative(p, fs::path(root), ec);
        rel = ec ? p.filename().string() : r.generic_string();
    } else {
        rel = p.lexically_normal().generic_string();
    }
    std::string id;
    id.reserve(rel.size());
    for (char c : rel) {
        if (c == '/' || c == '\\')
            id += "__";
        else
            id += c;
    }
    return id;
}

FontRecord load_font(const std::string& path, const std::string& root) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("raster.UnreadableFile", "cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (!in.good() && !in.eof()) fail("raster.UnreadableFile", "read failed for " + path);
    try {
        ttf::Font::parse(std::move(bytes));
    } catch (const Error& e) {
        fail("raster.UnparseableFont", path + ": " + e.what());
    }
    return FontRecord{font_id_from_path(path, root), path, ""};
}

LoadedFont open_font(const FontRecord& record) {
    std::ifstream in(record.file_path, std::ios::binary);
    if (!in) fail("raster.UnreadableFile", "cannot open " + record.file_path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    try {
        return LoadedFont{record, ttf::Font::parse(std::move(bytes))};
    } catch (const Error& e) {
        fail("raster.UnparseableFont", record.file_path + ": " + e.what());
    }
}

GlyphImage rasterize_glyph(const LoadedFont& font, char char_class, int size) {
    if (char_class < 'A' || char_class > 'Z')
        fail("raster.InvalidChar", std::string("not an uppercase letter: ") + char_class);
    if (size < 16) fail("raster.InvalidSize", "size must be >= 16");

    int glyph_id = font.font.glyph_index(uint32_t(char_class));
    if (glyph_id == 0)
        fail("raster.MissingGlyph",
             font.record.font_id + std::string(" has no glyph for ") + char_class);

    ttf::Outline outline;
    try {
        outline = font.font.glyph_outline(glyph_id);
    } catch (const Error& e) {
        fail("raster.MissingGlyph", font.record.font_id + ": " + e.what());
    }
    if (outline.empty())
        fail("raster.MissingGlyph",
             font.record.font_id + std::string(" has an empty outline for ") + char_class);

    double min_x, min_y, max_x, max_y;
    outline.bounds(min_x, min_y, max_x, max_y);
    double w = max_x - min_x, h = max_y - min_y;
    if (w <= 0 && h <= 0)
        fail("raster.MissingGlyph",
             font.record.font_id + std::string(" has a degenerate outline for ") + char_class);

    int margin = int(std::ceil(0.05 * size));
    double inset = double(size - 2 * margin);
    double scale = inset / std::max(std::max(w, h), 1e-9);
    double cx = (min_x + max_x) / 2, cy = (min_y + max_y) / 2;
    double half = double(size) / 2;

    // Font units are y-up, images are y-down.
    auto tx = [&](double x) { return (x - cx) * scale + half; };
    auto ty = [&](double y) { return (cy - y) * scale + half; };

    ttf::Raster raster(size, size);
    for (const ttf::Segment& s : outline.segments) {
        if (s.is_line)
            raster.add_line(tx(s.x0), ty(s.y0), tx(s.x1), ty(s.y1));
        else
            raster.add_quad(tx(s.x0), ty(s.y0), tx(s.cx), ty(s.cy), tx(s.x1), ty(s.y1));
    }
    std::vector<double> cov = raster.coverage();

    GlyphImage img;
    img.size = size;
    img.char_class = char_class;
    img.font_id = font.record.font_id;
    img.pixels.resize(cov.size());
    for (size_t i = 0; i < cov.size(); ++i)
        img.pixels[i] = cov[i] >= kBinarizeThreshold ? 1 : 0;

    if (img.foreground_count() == 0)
        fail("raster.MissingGlyph",
             font.record.font_id + std::string(" rasterized to empty for ") + char_class);
    return img;
}

double RasterizedFont::mean_ink_fraction() const {
    if (glyphs.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [ch, g] : glyphs) sum += g.ink_fraction();
    return sum / double(glyphs.size());
}

RasterizedFont rasterize_font(const LoadedFont& font, int size) {
    RasterizedFont out;
    out.record = font.record;
    std::vector<char> failing;
    for (const char* c = kUppercase; *c; ++c) {
        try {
            out.glyphs[*c] = rasterize_glyph(font, *c, size);
        } catch (const Error&) {
            failing.push_back(*c);
        }
    }
    if (!failing.empty()) {
        std::string letters(failing.begin(), failing.end());
        fail("raster.FontRejected", font.record.font_id + " missing glyphs: " + letters);
    }
    return out;
}

std::vector<RasterizedFont> filter_fonts(std::vector<RasterizedFont> fonts,
                                         const std::vector<std::string>& exclusion_list,
                                         double ink_low, double ink_high,
                                         std::vector<FilterAudit>& audit) {
    if (!(ink_low >= 0.0 && ink_low < ink_high && ink_high <= 1.0))
        fail("raster.InvalidInkBounds", "require 0 <= low < high <= 1");
    std::set<std::string> excluded(exclusion_list.begin(), exclusion_list.end());
    std::vector<RasterizedFont> kept;
    kept.reserve(fonts.size());
    for (auto& f : fonts) {
        if (excluded.count(f.record.font_id)) {
            audit.push_back({f.record.font_id, "manual"});
            continue;
        }
        double ink = f.mean_ink_fraction();
        if (ink < ink_low || ink > ink_high) {
            audit.push_back({f.record.font_id, "ink_fraction"});
            continue;
        }
        kept.push_back(std::move(f));
    }
    return kept;
}

// --- dataset on disk ------------------------------------------------------

void write_glyph_png(const std::string& path, const GlyphImage& glyph) {
    PngImage png;
    png.width = glyph.size;
    png.height = glyph.size;
    png.channels = 1;
    png.pixels.resize(glyph.pixels.size());
    for (size_t i = 0; i < glyph.pixels.size(); ++i)
        png.pixels[i] = glyph.pixels[i] ? 0 : 255; // black glyph on white
    write_png(path, png);
}

GlyphImage read_glyph_png(const std::string& path, char char_class,
                          const std::string& font_id) {
    PngImage png = read_png(path);
    if (png.channels != 1 || png.width != png.height)
        fail("raster.BadGlyphFile", path + " is not a square grayscale glyph");
    GlyphImage img;
    img.size = png.width;
    img.char_class = char_class;
    img.font_id = font_id;
    img.pixels.resize(png.pixels.size());
    for (size_t i = 0; i < png.pixels.size(); ++i)
        img.pixels[i] = png.pixels[i] < 128 ? 1 : 0;
    return img;
}

namespace {

void write_manifests(const std::string& out_dir, int size,
                     const std::vector<DatasetEntry>& entries,
                     const std::vector<FilterAudit>& rejected) {
    {
        std::ofstream out(fs::path(out_dir) / "fonts.jsonl", std::ios::trunc);
        if (!out) fail("raster.WriteFailed", "cannot write fonts.jsonl");
        for (const auto& e : entries) {
            ordered_json rec;
            rec["font_id"] = e.font_id;
            rec["file_path"] = e.file_path;
            rec["size"] = size;
            ordered_json glyphs = ordered_json::object();
            for (const auto& [ch, path] : e.glyph_paths) glyphs[std::string(1, ch)] = path;
            rec["glyphs"] = glyphs;
            out << rec.dump() << "\n";
        }
    }
    {
        std::ofstream out(fs::path(out_dir) / "rejected.jsonl", std::ios::trunc);
        if (!out) fail("raster.WriteFailed", "cannot write rejected.jsonl");
        for (const auto& r : rejected) {
            ordered_json rec;
            rec["font_id"] = r.font_id;
            rec["reason"] = r.reason;
            out << rec.dump() << "\n";
        }
    }
}

std::vector<DatasetEntry> write_font_dirs(const std::string& out_dir,
                                          const std::vector<RasterizedFont>& fonts) {
    std::vector<DatasetEntry> entries;
    for (const auto& f : fonts) {
        fs::create_directories(fs::path(out_dir) / f.record.font_id);
        DatasetEntry e;
        e.font_id = f.record.font_id;
        e.file_path = f.record.file_path;
        for (const auto& [ch, glyph] : f.glyphs) {
            std::string rel = f.record.font_id + "/" + std::string(1, ch) + ".png";
            write_glyph_png((fs::path(out_dir) / rel).string(), glyph);
            e.glyph_paths[ch] = rel;
        }
        entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(),
              [](const DatasetEntry& a, const DatasetEntry& b) { return a.font_id < b.font_id; });
    return entries;
}

} // namespace

void write_dataset(const std::string& out_dir, int size,
                   const std::vector<RasterizedFont>& fonts,
                   const std::vector<FilterAudit>& rejected) {
    fs::create_directories(out_dir);
    std::vector<DatasetEntry> entries = write_font_dirs(out_dir, fonts);
    write_manifests(out_dir, size, entries, rejected);
}

BuildStats build_dataset(const std::string& fonts_dir, const std::string& out_dir,
                         int size, const std::vector<std::string>& exclusions,
                         double ink_low, double ink_high, int workers) {
    if (!fs::is_directory(fonts_dir))
        fail("raster.UnreadableFile", fonts_dir + " is not a directory");
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(fonts_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return char(std::tolower(c)); });
        if (ext == ".ttf" || ext == ".otf") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());

    // Rasterize in parallel; results are gathered per input index so output
    // order (and the manifests) do not depend on scheduling.
    std::vector<std::optional<RasterizedFont>> done(files.size());
    std::vector<std::optional<FilterAudit>> failures(files.size());
    parallel_chunks(int64_t(files.size()), workers, [&](int, int64_t begin, int64_t end) {
        for (int64_t i = begin; i < end; ++i) {
            const std::string& path = files[size_t(i)];
            std::string font_id = font_id_from_path(path, fonts_dir);
            try {
                FontRecord rec = load_font(path, fonts_dir);
                LoadedFont loaded = open_font(rec);
                done[size_t(i)] = rasterize_font(loaded, size);
            } catch (const Error& e) {
                std::string reason = e.code() == "raster.FontRejected" ? "missing_glyph"
                                   : e.code() == "raster.UnparseableFont" ? "unparseable"
                                                                          : "unreadable";
                failures[size_t(i)] = FilterAudit{font_id, reason};
            }
        }
    });

    std::vector<RasterizedFont> rasterized;
    std::vector<FilterAudit> audit;
    for (size_t i = 0; i < files.size(); ++i) {
        if (done[i])
            rasterized.push_back(std::move(*done[i]));
        else if (failures[i])
            audit.push_back(*failures[i]);
    }

    std::vector<RasterizedFont> kept =
        filter_fonts(std::move(rasterized), exclusions, ink_low, ink_high, audit);

    BuildStats stats;
    stats.scanned = int(files.size());
    stats.kept = int(kept.size());
    stats.rejected = int(audit.size());
    write_dataset(out_dir, size, kept, audit);
    return stats;
}

const DatasetEntry& DatasetIndex::entry(const std::string& font_id) const {
    auto it = std::lower_bound(fonts.begin(), fonts.end(), font_id,
                               [](const DatasetEntry& e, const std::string& id) {
                                   return e.font_id < id;
                               });
    if (it == fonts.end() || it->font_id != font_id)
        fail("raster.UnknownFont", font_id + " not in dataset");
    return *it;
}

std::vector<std::string> DatasetIndex::font_ids() const {
    std::vector<std::string> ids;
    ids.reserve(fonts.size());
    for (const auto& f : fonts) ids.push_back(f.font_id);
    return ids;
}

DatasetIndex load_dataset(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "fonts.jsonl");
    if (!in) fail("raster.UnreadableFile", "no fonts.jsonl in " + dir);
    DatasetIndex index;
    index.dir = dir;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ordered_json rec = ordered_json::parse(line, nullptr, false);
        if (rec.is_discarded()) fail("raster.BadManifest", "malformed fonts.jsonl line in " + dir);
        DatasetEntry e;
        e.font_id = rec.at("font_id").get<std::string>();
        e.file_path = rec.value("file_path", "");
        if (rec.contains("size")) index.size = rec["size"].get<int>();
        for (const auto& [ch, path] : rec.at("glyphs").items()) {
            if (ch.size() != 1) fail("raster.BadManifest", "bad glyph key in " + dir);
            e.glyph_paths[ch[0]] = path.get<std::string>();
        }
        if (e.glyph_paths.size() != 26)
            fail("raster.BadManifest", e.font_id + " does not have 26 glyphs");
        index.fonts.push_back(std::move(e));
    }
    std::sort(index.fonts.begin(), index.fonts.end(),
              [](const DatasetEntry& a, const DatasetEntry& b) { return a.font_id < b.font_id; });
    return index;
}

} // namespace fontpair
