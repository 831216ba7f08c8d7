#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fontpair/netmodel.hpp"
#include "fontpair/pairgen.hpp"

namespace fontpair {

class ImageCache;

struct Prediction {
    double p_same = 0.0;
    int label = 0; // argmax, tie broken toward 0 ("different")
};

// Rows are ground truth {same, different}, columns predicted {same, different}.
struct Confusion {
    int64_t same_same = 0, same_diff = 0;
    int64_t diff_same = 0, diff_diff = 0;
    int64_t total() const { return same_same + same_diff + diff_same + diff_diff; }
};

double accuracy_from_confusion(const Confusion& c);

struct PairRank {
    char char_a = 0, char_b = 0;
    int64_t errors = 0, totals = 0;
    bool observed() const { return totals > 0; }
    double accuracy() const { return observed() ? 1.0 - double(errors) / double(totals) : 0.0; }
};

using CharMatrix = std::array<std::array<int64_t, 26>, 26>;

struct EvalReport {
    int64_t n_pairs = 0;
    double accuracy = 0.0;
    Confusion confusion;
    CharMatrix charpair_errors{};     // symmetric, zero diagonal, both labels
    CharMatrix charpair_errors_pos{}; // breakdown: ground-truth same only
    CharMatrix charpair_errors_neg{};
    CharMatrix charpair_totals{};
    std::vector<PairRank> ranked_pairs; // all 325, worst accuracy first
    std::map<std::string, int64_t> per_font_errors; // positive-pair errors
};

std::vector<Prediction> predict(const ModelCheckpoint& checkpoint,
                                const std::vector<PairRecord>& pairs,
                                const ImageCache& cache, int workers = 1);

// Pure aggregation from scripted predictions (also the oracle entry point).
EvalReport aggregate_predictions(const std::vector<PairRecord>& pairs,
                                 const std::vector<Prediction>& predictions);

// Errors: evaluator.EmptyDataset.
EvalReport evaluate(const ModelCheckpoint& checkpoint,
                    const std::vector<PairRecord>& pairs, const DatasetIndex& index,
                    int workers = 1);

// (worst_n, best_n) over observed pairs; ties alphabetical.
std::pair<std::vector<PairRank>, std::vector<PairRank>> rank_charpairs(
    const EvalReport& report, int n = 20);

// Fonts by descending positive-pair error count; ties alphabetical.
std::vector<std::pair<std::string, int64_t>> worst_fonts(const EvalReport& report, int n);

// Generates 325*|fonts| positives plus equal seeded negatives from an
// external corpus directory and evaluates. Errors: evaluator.EmptyCorpus,
// evaluator.TrainingOverlap (fonts shared with checkpoint provenance).
EvalReport cross_evaluate(const ModelCheckpoint& checkpoint,
                          const std::string& corpus_dir, uint64_t seed,
                          int workers = 1, int64_t* n_positive = nullptr);

void write_report(const std::string& dir, const EvalReport& report);
EvalReport read_report(const std::string& json_path);

} // namespace fontpair
