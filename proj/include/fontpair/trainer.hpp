#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "fontpair/netmodel.hpp"
#include "fontpair/pairgen.hpp"

namespace fontpair {

struct TrainConfig {
    int batch_size = 128;
    double learning_rate = 1e-4; // adaptive-moment gradient descent
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int max_epochs = 50;
    int patience = 5; // epochs without val-accuracy improvement
    uint64_t seed = 0;
    int workers = 1;

    void validate() const;
    nlohmann::ordered_json to_json() const;
};

struct EpochRecord {
    int epoch; // 1-based
    double train_loss, train_acc;
    double val_loss, val_acc;
    double wall_time; // seconds for this epoch
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_val_acc = 0.0;
};

void write_train_log_csv(const std::string& path, const TrainLog& log);

// Decodes glyph PNGs once and serves them as network inputs.
class ImageCache {
public:
    explicit ImageCache(const DatasetIndex& index) : index_(&index) {}

    // Loads every image referenced by the pairs (deterministic order).
    void preload(const std::vector<PairRecord>& pairs);
    // Thread-safe after preload for the preloaded paths.
    std::vector<double> input(const std::string& rel_path) const;
    int image_size() const { return size_; }

private:
    const DatasetIndex* index_;
    std::unordered_map<std::string, std::vector<uint8_t>> images_;
    int size_ = 0;
};

// Trains with seeded shuffling, adaptive-moment updates, validation-accuracy
// model selection and early stopping.
// Errors: trainer.LeakageDetected, trainer.EmptyDataset.
std::pair<ModelCheckpoint, TrainLog> train(const ModelConfig& model_config,
                                           const std::vector<PairRecord>& train_pairs,
                                           const std::vector<PairRecord>& val_pairs,
                                           const TrainConfig& config,
                                           const DatasetIndex& index);

struct CvRound {
    ModelCheckpoint checkpoint;
    TrainLog log;
    double test_accuracy = 0.0;
    std::vector<std::string> test_fonts;
};

struct CvResult {
    std::vector<CvRound> rounds;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0; // sample standard deviation
};

// k independent trainings, each tested on its held-out fold; the remaining
// fonts are split train:val at the given ratio (default 5:1).
CvResult run_cv(const ModelConfig& model_config, const TrainConfig& config,
                const DatasetIndex& index, const SplitManifest& folds,
                double val_ratio = 1.0 / 6.0);

} // namespace fontpair
