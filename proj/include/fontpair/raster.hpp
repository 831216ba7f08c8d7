#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fontpair/image.hpp"
#include "fontpair/ttf.hpp"

namespace fontpair {

constexpr int kDefaultGlyphSize = 100;
constexpr double kBinarizeThreshold = 0.5;
inline const char* kUppercase = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";

struct FontRecord {
    std::string font_id;    // derived from path, stable
    std::string file_path;
    std::string family_tag; // optional free-form label
};

// A record plus its parsed outline data, ready for rasterization.
struct LoadedFont {
    FontRecord record;
    ttf::Font font;
};

// Derives the font_id naming rule: path relative to `root` (or as given when
// root is empty), separators replaced by "__".
std::string font_id_from_path(const std::string& path, const std::string& root = "");

// Validates that the file parses as a scalable font.
// Errors: raster.UnreadableFile, raster.UnparseableFont.
FontRecord load_font(const std::string& path, const std::string& root = "");

// Opens a previously validated record for rasterization.
LoadedFont open_font(const FontRecord& record);

// Scales the glyph outline uniformly so its tight bounding box fits a
// (size - 2*margin)^2 box with margin = ceil(0.05 * size), centers it by
// bounding-box center, thresholds antialiased coverage at 0.5.
// Errors: raster.MissingGlyph (no outline or zero foreground pixels).
GlyphImage rasterize_glyph(const LoadedFont& font, char char_class,
                           int size = kDefaultGlyphSize);

struct RasterizedFont {
    FontRecord record;
    std::map<char, GlyphImage> glyphs; // exactly the 26 uppercase letters
    double mean_ink_fraction() const;
};

// All 26 uppercase glyphs or rejection.
// Errors: raster.FontRejected listing the failing letters.
RasterizedFont rasterize_font(const LoadedFont& font, int size = kDefaultGlyphSize);

struct FilterAudit {
    std::string font_id;
    std::string reason; // "manual" or "ink_fraction"
};

// Drops excluded fonts and fonts whose mean ink fraction over the 26 glyphs
// falls outside [ink_low, ink_high]; emits an audit entry per drop.
std::vector<RasterizedFont> filter_fonts(std::vector<RasterizedFont> fonts,
                                         const std::vector<std::string>& exclusion_list,
                                         double ink_low, double ink_high,
                                         std::vector<FilterAudit>& audit);

// --- dataset on disk ------------------------------------------------------
// Layout: <dir>/<font_id>/<LETTER>.png (8-bit gray, glyph black on white),
// plus fonts.jsonl and rejected.jsonl.

struct DatasetEntry {
    std::string font_id;
    std::string file_path;
    std::map<char, std::string> glyph_paths; // letter -> path relative to dataset dir
};

struct DatasetIndex {
    std::string dir;
    int size = 0;
    std::vector<DatasetEntry> fonts; // sorted by font_id

    const DatasetEntry& entry(const std::string& font_id) const;
    std::vector<std::string> font_ids() const;
};

struct BuildStats {
    int scanned = 0;
    int kept = 0;
    int rejected = 0;
};

void write_glyph_png(const std::string& path, const GlyphImage& glyph);
GlyphImage read_glyph_png(const std::string& path, char char_class = 0,
                          const std::string& font_id = "");

BuildStats build_dataset(const std::string& fonts_dir, const std::string& out_dir,
                         int size, const std::vector<std::string>& exclusions,
                         double ink_low, double ink_high, int workers);

// Writes the dataset layout from pre-rasterized glyph maps (used by the
// synthetic corpora in tests and by cross-dataset tooling).
void write_dataset(const std::string& out_dir, int size,
                   const std::vector<RasterizedFont>& fonts,
                   const std::vector<FilterAudit>& rejected);

DatasetIndex load_dataset(const std::string& dir);

} // namespace fontpair
