#include "fontpair/pairgen.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "fontpair/error.hpp"
#include "fontpair/rng.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace fontpair {

const std::vector<std::pair<char, char>>& char_pairs() {
    static const std::vector<std::pair<char, char>> pairs = [] {
        std::vector<std::pair<char, char>> v;
        for (char a = 'A'; a <= 'Z'; ++a)
            for (char b = char(a + 1); b <= 'Z'; ++b) v.emplace_back(a, b);
        return v;
    }();
    return pairs;
}

std::pair<int64_t, int64_t> count_pairs(int64_t n_fonts, int n_chars) {
    if (n_chars < 2) fail("pairgen.InvalidCharCount", "need at least 2 character classes");
    int64_t per_font = int64_t(n_chars) * (n_chars - 1) / 2;
    return {n_fonts * per_font, per_font};
}

namespace {

void check_glyphs_on_disk(const DatasetIndex& index, const std::string& font_id) {
    const DatasetEntry& e = index.entry(font_id);
    for (const auto& [ch, rel] : e.glyph_paths) {
        fs::path p = fs::path(index.dir) / rel;
        if (!fs::exists(p))
            fail("pairgen.MissingGlyphFile", p.string() + " referenced by " + font_id);
    }
}

PairRecord make_record(const DatasetIndex& index, char ca, char cb,
                       const std::string& fa, const std::string& fb, int label) {
    PairRecord r;
    r.char_a = ca;
    r.char_b = cb;
    r.font_a = fa;
    r.font_b = fb;
    r.image_a = index.entry(fa).glyph_paths.at(ca);
    r.image_b = index.entry(fb).glyph_paths.at(cb);
    r.label = label;
    return r;
}

} // namespace

std::vector<PairRecord> gen_positive(const DatasetIndex& index,
                                     const std::vector<std::string>& fonts) {
    std::vector<PairRecord> out;
    out.reserve(fonts.size() * char_pairs().size());
    for (const std::string& f : fonts) {
        check_glyphs_on_disk(index, f);
        for (const auto& [ca, cb] : char_pairs())
            out.push_back(make_record(index, ca, cb, f, f, 1));
    }
    return out;
}

std::vector<PairRecord> gen_negative(const DatasetIndex& index,
                                     const std::vector<std::string>& fonts,
                                     int64_t count, uint64_t seed) {
    if (fonts.size() < 2)
        fail("pairgen.InsufficientFonts", "negative pairs need at least 2 fonts");
    if (count < 1) fail("pairgen.InvalidCount", "count must be >= 1");
    for (const std::string& f : fonts) check_glyphs_on_disk(index, f);

    Rng rng(seed);
    const auto& cps = char_pairs();
    std::vector<PairRecord> out;
    out.reserve(size_t(count));
    for (int64_t i = 0; i < count; ++i) {
        const auto& [ca, cb] = cps[size_t(rng.below(cps.size()))];
        uint64_t ia = rng.below(fonts.size());
        uint64_t ib = rng.below(fonts.size() - 1);
        if (ib >= ia) ++ib; // uniform over ordered distinct pairs
        out.push_back(make_record(index, ca, cb, fonts[size_t(ia)], fonts[size_t(ib)], 0));
    }
    return out;
}

SplitManifest split_fonts(const std::vector<std::string>& fonts,
                          int64_t n_train, int64_t n_val, int64_t n_test,
                          uint64_t seed) {
    if (n_train < 0 || n_val < 0 || n_test < 0 ||
        n_train + n_val + n_test > int64_t(fonts.size()))
        fail("pairgen.SizeMismatch",
             "requested sizes exceed corpus of " + std::to_string(fonts.size()) + " fonts");
    std::vector<std::string> shuffled = fonts;
    Rng rng(seed);
    rng.shuffle(shuffled);
    SplitManifest m;
    m.seed = seed;
    m.train_fonts.assign(shuffled.begin(), shuffled.begin() + n_train);
    m.val_fonts.assign(shuffled.begin() + n_train, shuffled.begin() + n_train + n_val);
    m.test_fonts.assign(shuffled.begin() + n_train + n_val,
                        shuffled.begin() + n_train + n_val + n_test);
    return m;
}

SplitManifest make_folds(const std::vector<std::string>& fonts, int k, uint64_t seed) {
    if (k < 2) fail("pairgen.TooFewFonts", "k must be >= 2");
    if (int64_t(fonts.size()) < k)
        fail("pairgen.TooFewFonts",
             std::to_string(fonts.size()) + " fonts cannot fill " + std::to_string(k) + " folds");
    std::vector<std::string> shuffled = fonts;
    Rng rng(seed);
    rng.shuffle(shuffled);
    SplitManifest m;
    m.seed = seed;
    int64_t n = int64_t(fonts.size());
    int64_t base = n / k, extra = n % k;
    int64_t at = 0;
    for (int i = 0; i < k; ++i) {
        int64_t len = base + (i < extra ? 1 : 0);
        m.folds.emplace_back(shuffled.begin() + at, shuffled.begin() + at + len);
        at += len;
    }
    return m;
}

std::vector<PairRecord> gen_balanced(const DatasetIndex& index,
                                     const std::vector<std::string>& fonts,
                                     uint64_t seed) {
    std::vector<PairRecord> pairs = gen_positive(index, fonts);
    std::vector<PairRecord> negs =
        gen_negative(index, fonts, int64_t(pairs.size()), seed);
    pairs.insert(pairs.end(), negs.begin(), negs.end());
    return pairs;
}

std::vector<PairRecord> subsample_pairs(const std::vector<PairRecord>& pairs,
                                        int64_t max_total, uint64_t seed) {
    if (int64_t(pairs.size()) <= max_total) return pairs;
    std::vector<size_t> pos, neg;
    for (size_t i = 0; i < pairs.size(); ++i)
        (pairs[i].label == 1 ? pos : neg).push_back(i);
    Rng rng(seed);
    rng.shuffle(pos);
    rng.shuffle(neg);
    int64_t half = max_total / 2;
    int64_t n_pos = std::min<int64_t>(half, int64_t(pos.size()));
    int64_t n_neg = std::min<int64_t>(max_total - n_pos, int64_t(neg.size()));
    std::vector<size_t> take(pos.begin(), pos.begin() + n_pos);
    take.insert(take.end(), neg.begin(), neg.begin() + n_neg);
    std::sort(take.begin(), take.end());
    std::vector<PairRecord> out;
    out.reserve(take.size());
    for (size_t i : take) out.push_back(pairs[i]);
    return out;
}

void write_pairs(const std::string& path, const std::vector<PairRecord>& pairs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail("pairgen.WriteFailed", "cannot write " + path);
    for (const PairRecord& p : pairs) {
        ordered_json rec;
        rec["char_a"] = std::string(1, p.char_a);
        rec["char_b"] = std::string(1, p.char_b);
        rec["font_a"] = p.font_a;
        rec["font_b"] = p.font_b;
        rec["image_a_path"] = p.image_a;
        rec["image_b_path"] = p.image_b;
        rec["label"] = p.label;
        out << rec.dump() << "\n";
    }
}

std::vector<PairRecord> read_pairs(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("pairgen.UnreadableFile", "cannot open " + path);
    std::vector<PairRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ordered_json rec = ordered_json::parse(line, nullptr, false);
        if (rec.is_discarded()) fail("pairgen.BadManifest", "malformed pair line in " + path);
        PairRecord p;
        p.char_a = rec.at("char_a").get<std::string>().at(0);
        p.char_b = rec.at("char_b").get<std::string>().at(0);
        p.font_a = rec.at("font_a").get<std::string>();
        p.font_b = rec.at("font_b").get<std::string>();
        p.image_a = rec.at("image_a_path").get<std::string>();
        p.image_b = rec.at("image_b_path").get<std::string>();
        p.label = rec.at("label").get<int>();
        out.push_back(std::move(p));
    }
    return out;
}

void write_split(const std::string& path, const SplitManifest& split) {
    ordered_json j;
    j["seed"] = split.seed;
    j["train_fonts"] = split.train_fonts;
    j["val_fonts"] = split.val_fonts;
    j["test_fonts"] = split.test_fonts;
    if (!split.folds.empty()) j["folds"] = split.folds;
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail("pairgen.WriteFailed", "cannot write " + path);
    out << j.dump(2) << "\n";
}

SplitManifest read_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("pairgen.UnreadableFile", "cannot open " + path);
    ordered_json j = ordered_json::parse(in, nullptr, false);
    if (j.is_discarded()) fail("pairgen.BadManifest", "malformed split file " + path);
    SplitManifest m;
    m.seed = j.value("seed", uint64_t(0));
    m.train_fonts = j.value("train_fonts", std::vector<std::string>{});
    m.val_fonts = j.value("val_fonts", std::vector<std::string>{});
    m.test_fonts = j.value("test_fonts", std::vector<std::string>{});
    if (j.contains("folds")) m.folds = j["folds"].get<std::vector<std::vector<std::string>>>();
    return m;
}

std::vector<std::string> fonts_of_pairs(const std::vector<PairRecord>& pairs) {
    std::set<std::string> fonts;
    for (const PairRecord& p : pairs) {
        fonts.insert(p.font_a);
        fonts.insert(p.font_b);
    }
    return {fonts.begin(), fonts.end()};
}

} // namespace fontpair
