#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fontpair/raster.hpp"

namespace fontpair {

// One labelled pair in a manifest. Characters are always stored in canonical
// order (char_a < char_b); label 1 = same font, 0 = different fonts.
struct PairRecord {
    char char_a, char_b;
    std::string font_a, font_b;
    std::string image_a, image_b; // paths relative to the dataset dir
    int label;
};

struct SplitManifest {
    uint64_t seed = 0;
    std::vector<std::string> train_fonts, val_fonts, test_fonts;
    std::vector<std::vector<std::string>> folds; // optional, partitions all fonts
};

// The 325 unordered letter pairs (X, Y) with X < Y.
const std::vector<std::pair<char, char>>& char_pairs();

// pairs_per_font = C(n_chars, 2); positives = n_fonts * pairs_per_font.
std::pair<int64_t, int64_t> count_pairs(int64_t n_fonts, int n_chars = 26);

// One positive pair per font per canonical character pair.
// Errors: pairgen.MissingGlyphFile.
std::vector<PairRecord> gen_positive(const DatasetIndex& index,
                                     const std::vector<std::string>& fonts);

// `count` negative pairs: canonical character pair uniform over the 325,
// two distinct fonts uniform. Errors: pairgen.InsufficientFonts.
std::vector<PairRecord> gen_negative(const DatasetIndex& index,
                                     const std::vector<std::string>& fonts,
                                     int64_t count, uint64_t seed);

// Seeded shuffle then slice. Errors: pairgen.SizeMismatch.
SplitManifest split_fonts(const std::vector<std::string>& fonts,
                          int64_t n_train, int64_t n_val, int64_t n_test,
                          uint64_t seed);

// Seeded shuffle then k chunks with sizes differing by at most one.
// Errors: pairgen.TooFewFonts.
SplitManifest make_folds(const std::vector<std::string>& fonts, int k, uint64_t seed);

// Balanced pair manifest for one font subset: all positives plus an equal
// number of seeded negatives.
std::vector<PairRecord> gen_balanced(const DatasetIndex& index,
                                     const std::vector<std::string>& fonts,
                                     uint64_t seed);

// Deterministic subsample without replacement, preserving class balance.
std::vector<PairRecord> subsample_pairs(const std::vector<PairRecord>& pairs,
                                        int64_t max_total, uint64_t seed);

void write_pairs(const std::string& path, const std::vector<PairRecord>& pairs);
std::vector<PairRecord> read_pairs(const std::string& path);

void write_split(const std::string& path, const SplitManifest& split);
SplitManifest read_split(const std::string& path);

// Distinct font ids appearing in a pair manifest (either side).
std::vector<std::string> fonts_of_pairs(const std::vector<PairRecord>& pairs);

} // namespace fontpair
