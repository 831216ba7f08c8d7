#include "fontpair/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "fontpair/error.hpp"
#include "fontpair/parallel.hpp"
#include "fontpair/trainer.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace fontpair {

double accuracy_from_confusion(const Confusion& c) {
    int64_t n = c.total();
    if (n == 0) fail("evaluator.EmptyDataset", "confusion matrix is empty");
    return double(c.same_same + c.diff_diff) / double(n);
}

std::vector<Prediction> predict(const ModelCheckpoint& checkpoint,
                                const std::vector<PairRecord>& pairs,
                                const ImageCache& cache, int workers) {
    std::vector<Prediction> out(pairs.size());
    parallel_chunks(int64_t(pairs.size()), workers, [&](int, int64_t begin, int64_t end) {
        PairTrace trace;
        for (int64_t i = begin; i < end; ++i) {
            const PairRecord& p = pairs[size_t(i)];
            forward_pair(checkpoint.params, cache.input(p.image_a),
                         cache.input(p.image_b), false, 0, trace);
            out[size_t(i)].p_same = trace.probs[1];
            out[size_t(i)].label = trace.probs[1] > trace.probs[0] ? 1 : 0;
        }
    });
    return out;
}

EvalReport aggregate_predictions(const std::vector<PairRecord>& pairs,
                                 const std::vector<Prediction>& predictions) {
    if (pairs.empty()) fail("evaluator.EmptyDataset", "no pairs to evaluate");
    if (pairs.size() != predictions.size())
        fail("evaluator.ShapeMismatch", "predictions do not match pairs");

    EvalReport r;
    r.n_pairs = int64_t(pairs.size());

    for (size_t i = 0; i < pairs.size(); ++i) {
        const PairRecord& p = pairs[i];
        int pred = predictions[i].label;
        bool correct = pred == p.label;

        if (p.label == 1)
            (pred == 1 ? r.confusion.same_same : r.confusion.same_diff)++;
        else
            (pred == 1 ? r.confusion.diff_same : r.confusion.diff_diff)++;

        int a = p.char_a - 'A', b = p.char_b - 'A';
        r.charpair_totals[size_t(a)][size_t(b)]++;
        r.charpair_totals[size_t(b)][size_t(a)]++;
        if (!correct) {
            r.charpair_errors[size_t(a)][size_t(b)]++;
            r.charpair_errors[size_t(b)][size_t(a)]++;
            CharMatrix& split = p.label == 1 ? r.charpair_errors_pos : r.charpair_errors_neg;
            split[size_t(a)][size_t(b)]++;
            split[size_t(b)][size_t(a)]++;
        }

        if (p.label == 1) {
            int64_t& count = r.per_font_errors[p.font_a];
            if (!correct) ++count;
        }
    }

    r.accuracy = accuracy_from_confusion(r.confusion);

    for (const auto& [ca, cb] : char_pairs()) {
        PairRank pr;
        pr.char_a = ca;
        pr.char_b = cb;
        pr.errors = r.charpair_errors[size_t(ca - 'A')][size_t(cb - 'A')];
        pr.totals = r.charpair_totals[size_t(ca - 'A')][size_t(cb - 'A')];
        r.ranked_pairs.push_back(pr);
    }
    std::sort(r.ranked_pairs.begin(), r.ranked_pairs.end(),
              [](const PairRank& x, const PairRank& y) {
                  if (x.observed() != y.observed()) return x.observed(); // unobserved last
                  if (x.observed() && x.accuracy() != y.accuracy())
                      return x.accuracy() < y.accuracy(); // worst first
                  if (x.char_a != y.char_a) return x.char_a < y.char_a;
                  return x.char_b < y.char_b;
              });
    return r;
}

EvalReport evaluate(const ModelCheckpoint& checkpoint,
                    const std::vector<PairRecord>& pairs, const DatasetIndex& index,
                    int workers) {
    if (pairs.empty()) fail("evaluator.EmptyDataset", "no pairs to evaluate");
    ImageCache cache(index);
    cache.preload(pairs);
    return aggregate_predictions(pairs, predict(checkpoint, pairs, cache, workers));
}

std::pair<std::vector<PairRank>, std::vector<PairRank>> rank_charpairs(
    const EvalReport& report, int n) {
    std::vector<PairRank> observed;
    for (const PairRank& p : report.ranked_pairs)
        if (p.observed()) observed.push_back(p); // already worst-first
    std::vector<PairRank> worst(observed.begin(),
                                observed.begin() + std::min<size_t>(size_t(n), observed.size()));
    std::vector<PairRank> best = observed;
    std::sort(best.begin(), best.end(), [](const PairRank& x, const PairRank& y) {
        if (x.accuracy() != y.accuracy()) return x.accuracy() > y.accuracy();
        if (x.char_a != y.char_a) return x.char_a < y.char_a;
        return x.char_b < y.char_b;
    });
    best.resize(std::min<size_t>(size_t(n), best.size()));
    return {worst, best};
}

std::vector<std::pair<std::string, int64_t>> worst_fonts(const EvalReport& report, int n) {
    std::vector<std::pair<std::string, int64_t>> fonts(report.per_font_errors.begin(),
                                                       report.per_font_errors.end());
    std::sort(fonts.begin(), fonts.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    fonts.resize(std::min<size_t>(size_t(n), fonts.size()));
    return fonts;
}

EvalReport cross_evaluate(const ModelCheckpoint& checkpoint,
                          const std::string& corpus_dir, uint64_t seed, int workers,
                          int64_t* n_positive) {
    DatasetIndex index = load_dataset(corpus_dir);
    if (index.fonts.empty()) fail("evaluator.EmptyCorpus", corpus_dir + " has no fonts");

    std::vector<std::string> fonts = index.font_ids();
    if (checkpoint.metadata.contains("train_fonts")) {
        std::set<std::string> train(
            checkpoint.metadata["train_fonts"].get<std::vector<std::string>>().begin(),
            checkpoint.metadata["train_fonts"].get<std::vector<std::string>>().end());
        for (const std::string& f : fonts)
            if (train.count(f))
                fail("evaluator.TrainingOverlap",
                     f + " appears in the checkpoint's training provenance");
    } else {
        std::cerr << "warning: checkpoint carries no training provenance; "
                     "cross-dataset disjointness unverified\n";
    }

    std::vector<PairRecord> positives = gen_positive(index, fonts);
    std::vector<PairRecord> negatives =
        gen_negative(index, fonts, int64_t(positives.size()), seed);
    if (n_positive) *n_positive = int64_t(positives.size());
    positives.insert(positives.end(), negatives.begin(), negatives.end());
    return evaluate(checkpoint, positives, index, workers);
}

// --- report files ----------------------------------------------------------

namespace {

ordered_json matrix_to_json(const CharMatrix& m) {
    ordered_json rows = ordered_json::array();
    for (const auto& row : m) rows.push_back(row);
    return rows;
}

CharMatrix matrix_from_json(const ordered_json& j) {
    CharMatrix m{};
    for (size_t y = 0; y < 26; ++y)
        for (size_t x = 0; x < 26; ++x) m[y][x] = j.at(y).at(x).get<int64_t>();
    return m;
}

void write_char_matrix_csv(const std::string& path, const CharMatrix& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail("evaluator.WriteFailed", "cannot write " + path);
    out << "char";
    for (char c = 'A'; c <= 'Z'; ++c) out << "," << c;
    out << "\n";
    for (int y = 0; y < 26; ++y) {
        out << char('A' + y);
        for (int x = 0; x < 26; ++x) out << "," << m[size_t(y)][size_t(x)];
        out << "\n";
    }
}

} // namespace

void write_report(const std::string& dir, const EvalReport& r) {
    fs::create_directories(dir);

    ordered_json j;
    j["n_pairs"] = r.n_pairs;
    j["accuracy"] = r.accuracy;
    j["confusion"] = {{"same_same", r.confusion.same_same},
                      {"same_diff", r.confusion.same_diff},
                      {"diff_same", r.confusion.diff_same},
                      {"diff_diff", r.confusion.diff_diff}};
    j["charpair_errors"] = matrix_to_json(r.charpair_errors);
    j["charpair_errors_pos"] = matrix_to_json(r.charpair_errors_pos);
    j["charpair_errors_neg"] = matrix_to_json(r.charpair_errors_neg);
    j["charpair_totals"] = matrix_to_json(r.charpair_totals);
    ordered_json ranked = ordered_json::array();
    for (const PairRank& p : r.ranked_pairs) {
        ordered_json e;
        e["pair"] = std::string(1, p.char_a) + "-" + std::string(1, p.char_b);
        e["errors"] = p.errors;
        e["totals"] = p.totals;
        if (p.observed())
            e["accuracy"] = p.accuracy();
        else
            e["accuracy"] = nullptr;
        ranked.push_back(e);
    }
    j["ranked_pairs"] = ranked;
    j["per_font_errors"] = r.per_font_errors;

    {
        std::ofstream out(fs::path(dir) / "report.json", std::ios::trunc);
        if (!out) fail("evaluator.WriteFailed", "cannot write report.json");
        out << j.dump(2) << "\n";
    }
    {
        std::ofstream out(fs::path(dir) / "confusion.csv", std::ios::trunc);
        if (!out) fail("evaluator.WriteFailed", "cannot write confusion.csv");
        out << "gt\\predicted,same,different\n";
        out << "same," << r.confusion.same_same << "," << r.confusion.same_diff << "\n";
        out << "different," << r.confusion.diff_same << "," << r.confusion.diff_diff << "\n";
    }
    write_char_matrix_csv((fs::path(dir) / "charpair_matrix.csv").string(),
                          r.charpair_errors);
    write_char_matrix_csv((fs::path(dir) / "charpair_totals.csv").string(),
                          r.charpair_totals);
    {
        std::ofstream out(fs::path(dir) / "ranked_pairs.csv", std::ios::trunc);
        if (!out) fail("evaluator.WriteFailed", "cannot write ranked_pairs.csv");
        out << "rank,pair,errors,totals,accuracy\n";
        int rank = 1;
        char buf[128];
        for (const PairRank& p : r.ranked_pairs) {
            if (p.observed())
                std::snprintf(buf, sizeof(buf), "%d,%c-%c,%lld,%lld,%.6f\n", rank,
                              p.char_a, p.char_b, (long long)p.errors, (long long)p.totals,
                              p.accuracy());
            else
                std::snprintf(buf, sizeof(buf), "%d,%c-%c,0,0,\n", rank, p.char_a, p.char_b);
            out << buf;
            ++rank;
        }
    }
}

EvalReport read_report(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) fail("evaluator.MissingReport", "cannot open " + json_path);
    ordered_json j = ordered_json::parse(in, nullptr, false);
    if (j.is_discarded()) fail("evaluator.BadReport", "malformed " + json_path);

    EvalReport r;
    r.n_pairs = j.at("n_pairs").get<int64_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.confusion.same_same = j.at("confusion").at("same_same").get<int64_t>();
    r.confusion.same_diff = j.at("confusion").at("same_diff").get<int64_t>();
    r.confusion.diff_same = j.at("confusion").at("diff_same").get<int64_t>();
    r.confusion.diff_diff = j.at("confusion").at("diff_diff").get<int64_t>();
    r.charpair_errors = matrix_from_json(j.at("charpair_errors"));
    r.charpair_errors_pos = matrix_from_json(j.at("charpair_errors_pos"));
    r.charpair_errors_neg = matrix_from_json(j.at("charpair_errors_neg"));
    r.charpair_totals = matrix_from_json(j.at("charpair_totals"));
    for (const auto& e : j.at("ranked_pairs")) {
        PairRank p;
        std::string pair = e.at("pair").get<std::string>();
        p.char_a = pair.at(0);
        p.char_b = pair.at(2);
        p.errors = e.at("errors").get<int64_t>();
        p.totals = e.at("totals").get<int64_t>();
        r.ranked_pairs.push_back(p);
    }
    if (j.contains("per_font_errors"))
        for (const auto& [k, v] : j.at("per_font_errors").items())
            r.per_font_errors[k] = v.get<int64_t>();
    return r;
}

} // namespace fontpair
