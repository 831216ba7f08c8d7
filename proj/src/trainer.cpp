#include "fontpair/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "fontpair/error.hpp"
#include "fontpair/evaluator.hpp"
#include "fontpair/parallel.hpp"
#include "fontpair/rng.hpp"

namespace fs = std::filesystem;

namespace fontpair {

void TrainConfig::validate() const {
    if (batch_size < 1) fail("trainer.InvalidConfig", "batch_size must be >= 1");
    if (patience < 1) fail("trainer.InvalidConfig", "patience must be >= 1");
    if (max_epochs < 1) fail("trainer.InvalidConfig", "max_epochs must be >= 1");
    if (learning_rate <= 0) fail("trainer.InvalidConfig", "learning_rate must be > 0");
    if (workers < 1) fail("trainer.InvalidConfig", "workers must be >= 1");
}

nlohmann::ordered_json TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["batch_size"] = batch_size;
    j["learning_rate"] = learning_rate;
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    j["adam_epsilon"] = adam_epsilon;
    j["max_epochs"] = max_epochs;
    j["patience"] = patience;
    j["seed"] = seed;
    j["workers"] = workers;
    return j;
}

void write_train_log_csv(const std::string& path, const TrainLog& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail("trainer.WriteFailed", "cannot write " + path);
    out << "epoch,train_loss,train_acc,val_loss,val_acc,wall_time\n";
    char buf[256];
    for (const EpochRecord& r : log.epochs) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.3f\n", r.epoch,
                      r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.wall_time);
        out << buf;
    }
}

void ImageCache::preload(const std::vector<PairRecord>& pairs) {
    std::set<std::string> paths;
    for (const PairRecord& p : pairs) {
        paths.insert(p.image_a);
        paths.insert(p.image_b);
    }
    for (const std::string& rel : paths) {
        if (images_.count(rel)) continue;
        GlyphImage g = read_glyph_png((fs::path(index_->dir) / rel).string());
        if (size_ == 0) size_ = g.size;
        if (g.size != size_)
            fail("trainer.ShapeMismatch", rel + " has size " + std::to_string(g.size) +
                                              ", expected " + std::to_string(size_));
        images_.emplace(rel, std::move(g.pixels));
    }
}

std::vector<double> ImageCache::input(const std::string& rel_path) const {
    auto it = images_.find(rel_path);
    if (it == images_.end())
        fail("trainer.MissingImage", rel_path + " was not preloaded");
    std::vector<double> v(it->second.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = double(it->second[i]);
    return v;
}

namespace {

struct Adam {
    Gradients m, v;
    int64_t t = 0;

    explicit Adam(const ModelConfig& cfg)
        : m(Params::zeros(cfg)), v(Params::zeros(cfg)) {}

    void step(Params& params, const Gradients& g, const TrainConfig& tc) {
        ++t;
        double bc1 = 1.0 - std::pow(tc.beta1, double(t));
        double bc2 = 1.0 - std::pow(tc.beta2, double(t));
        auto upd = [&](Array& p, const Array& gr, Array& ma, Array& va) {
            for (size_t i = 0; i < p.v.size(); ++i) {
                double gi = gr.v[i];
                ma.v[i] = tc.beta1 * ma.v[i] + (1.0 - tc.beta1) * gi;
                va.v[i] = tc.beta2 * va.v[i] + (1.0 - tc.beta2) * gi * gi;
                double mh = ma.v[i] / bc1;
                double vh = va.v[i] / bc2;
                p.v[i] -= tc.learning_rate * mh / (std::sqrt(vh) + tc.adam_epsilon);
            }
        };
        for (int i = 0; i < 4; ++i) {
            upd(params.conv_w[size_t(i)], g.conv_w[size_t(i)], m.conv_w[size_t(i)], v.conv_w[size_t(i)]);
            upd(params.conv_b[size_t(i)], g.conv_b[size_t(i)], m.conv_b[size_t(i)], v.conv_b[size_t(i)]);
        }
        for (int i = 0; i < 3; ++i) {
            upd(params.fc_w[size_t(i)], g.fc_w[size_t(i)], m.fc_w[size_t(i)], v.fc_w[size_t(i)]);
            upd(params.fc_b[size_t(i)], g.fc_b[size_t(i)], m.fc_b[size_t(i)], v.fc_b[size_t(i)]);
        }
    }
};

void add_scaled(Gradients& dst, const Gradients& src, double scale) {
    auto add = [&](Array& d, const Array& s) {
        for (size_t i = 0; i < d.v.size(); ++i) d.v[i] += scale * s.v[i];
    };
    for (int i = 0; i < 4; ++i) {
        add(dst.conv_w[size_t(i)], src.conv_w[size_t(i)]);
        add(dst.conv_b[size_t(i)], src.conv_b[size_t(i)]);
    }
    for (int i = 0; i < 3; ++i) {
        add(dst.fc_w[size_t(i)], src.fc_w[size_t(i)]);
        add(dst.fc_b[size_t(i)], src.fc_b[size_t(i)]);
    }
}

struct EvalStats {
    double loss_sum = 0.0;
    int64_t correct = 0;
    int64_t count = 0;
};

EvalStats eval_pass(const Params& params, const std::vector<PairRecord>& pairs,
                    const ImageCache& cache, int workers) {
    std::vector<EvalStats> partial(size_t(std::max(workers, 1)), EvalStats{});
    parallel_chunks(int64_t(pairs.size()), workers, [&](int w, int64_t begin, int64_t end) {
        PairTrace trace;
        EvalStats& st = partial[size_t(w)];
        for (int64_t i = begin; i < end; ++i) {
            const PairRecord& p = pairs[size_t(i)];
            forward_pair(params, cache.input(p.image_a), cache.input(p.image_b),
                         false, 0, trace);
            st.loss_sum += loss(trace.probs, p.label);
            int pred = trace.probs[1] > trace.probs[0] ? 1 : 0;
            if (pred == p.label) ++st.correct;
            ++st.count;
        }
    });
    EvalStats total;
    for (const EvalStats& st : partial) {
        total.loss_sum += st.loss_sum;
        total.correct += st.correct;
        total.count += st.count;
    }
    return total;
}

} // namespace

std::pair<ModelCheckpoint, TrainLog> train(const ModelConfig& model_config,
                                           const std::vector<PairRecord>& train_pairs,
                                           const std::vector<PairRecord>& val_pairs,
                                           const TrainConfig& config,
                                           const DatasetIndex& index) {
    model_config.validate();
    config.validate();
    if (train_pairs.empty() || val_pairs.empty())
        fail("trainer.EmptyDataset", "train and validation pair sets must be non-empty");

    // No font may appear on both sides of the split.
    {
        std::vector<std::string> tf = fonts_of_pairs(train_pairs);
        std::vector<std::string> vf = fonts_of_pairs(val_pairs);
        std::vector<std::string> shared;
        std::set_intersection(tf.begin(), tf.end(), vf.begin(), vf.end(),
                              std::back_inserter(shared));
        if (!shared.empty())
            fail("trainer.LeakageDetected",
                 "fonts shared between train and val, e.g. " + shared.front());
    }

    ImageCache cache(index);
    cache.preload(train_pairs);
    cache.preload(val_pairs);
    if (cache.image_size() != model_config.input_size)
        fail("trainer.ShapeMismatch",
             "dataset images are " + std::to_string(cache.image_size()) +
                 "px but model expects " + std::to_string(model_config.input_size));

    ModelCheckpoint ckpt = init_params(model_config, config.seed);
    Adam adam(model_config);
    TrainLog log;
    Params best_params = ckpt.params;
    int epochs_run = 0;

    std::vector<size_t> order(train_pairs.size());
    std::iota(order.begin(), order.end(), 0);

    int workers = std::max(1, config.workers);
    std::vector<Gradients> worker_grads;
    worker_grads.reserve(size_t(workers));
    for (int w = 0; w < workers; ++w) worker_grads.push_back(Params::zeros(model_config));

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        Rng shuffle_rng = Rng::child(config.seed, 0x10000u + uint64_t(epoch));
        shuffle_rng.shuffle(order);

        double train_loss_sum = 0.0;
        int64_t train_correct = 0;

        for (size_t batch_start = 0; batch_start < order.size();
             batch_start += size_t(config.batch_size)) {
            size_t batch_end =
                std::min(order.size(), batch_start + size_t(config.batch_size));
            int64_t batch_n = int64_t(batch_end - batch_start);

            std::vector<EvalStats> stats(size_t(workers), EvalStats{});
            parallel_chunks(batch_n, workers, [&](int w, int64_t begin, int64_t end) {
                PairTrace trace;
                Gradients& g = worker_grads[size_t(w)];
                for (int64_t i = begin; i < end; ++i) {
                    size_t idx = order[batch_start + size_t(i)];
                    const PairRecord& p = train_pairs[idx];
                    // Dropout stream keyed by (epoch, shuffled slot) so every
                    // presentation of a sample gets a fresh mask.
                    uint64_t dseed = Rng::child(config.seed,
                                                (uint64_t(epoch) << 32) ^
                                                    uint64_t(batch_start + size_t(i)))
                                         .next_u64();
                    forward_pair(ckpt.params, cache.input(p.image_a),
                                 cache.input(p.image_b), true, dseed, trace);
                    stats[size_t(w)].loss_sum += loss(trace.probs, p.label);
                    int pred = trace.probs[1] > trace.probs[0] ? 1 : 0;
                    if (pred == p.label) ++stats[size_t(w)].correct;
                    backward_pair(ckpt.params, trace, p.label, g);
                }
            });

            // Deterministic reduction in worker order, then mean over batch.
            Gradients total = Params::zeros(model_config);
            for (int w = 0; w < workers; ++w) {
                add_scaled(total, worker_grads[size_t(w)], 1.0 / double(batch_n));
                worker_grads[size_t(w)] = Params::zeros(model_config);
            }
            for (const EvalStats& st : stats) {
                train_loss_sum += st.loss_sum;
                train_correct += st.correct;
            }
            adam.step(ckpt.params, total, config);
        }

        EvalStats val = eval_pass(ckpt.params, val_pairs, cache, workers);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = train_loss_sum / double(train_pairs.size());
        rec.train_acc = double(train_correct) / double(train_pairs.size());
        rec.val_loss = val.loss_sum / double(val.count);
        rec.val_acc = double(val.correct) / double(val.count);
        rec.wall_time =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.epochs.push_back(rec);
        epochs_run = epoch;

        if (log.best_epoch == 0 || rec.val_acc > log.best_val_acc) {
            log.best_epoch = epoch;
            log.best_val_acc = rec.val_acc;
            best_params = ckpt.params;
        }
        if (epoch - log.best_epoch >= config.patience) break;
    }

    ckpt.params = best_params;
    ckpt.trained_epochs = epochs_run;
    ckpt.metadata["seed"] = config.seed;
    ckpt.metadata["best_epoch"] = log.best_epoch;
    ckpt.metadata["best_val_acc"] = log.best_val_acc;
    {
        std::vector<std::string> tf = fonts_of_pairs(train_pairs);
        std::vector<std::string> vf = fonts_of_pairs(val_pairs);
        ckpt.metadata["train_fonts"] = tf;
        ckpt.metadata["val_fonts"] = vf;
    }
    return {std::move(ckpt), std::move(log)};
}

CvResult run_cv(const ModelConfig& model_config, const TrainConfig& config,
                const DatasetIndex& index, const SplitManifest& folds,
                double val_ratio) {
    if (folds.folds.size() < 2)
        fail("trainer.MissingFolds", "cross-validation needs a fold manifest with k >= 2");

    CvResult result;
    int k = int(folds.folds.size());
    for (int round = 0; round < k; ++round) {
        const std::vector<std::string>& test_fonts = folds.folds[size_t(round)];
        std::vector<std::string> rest;
        for (int j = 0; j < k; ++j)
            if (j != round)
                rest.insert(rest.end(), folds.folds[size_t(j)].begin(),
                            folds.folds[size_t(j)].end());

        Rng rng = Rng::child(folds.seed, 0x20000u + uint64_t(round));
        rng.shuffle(rest);
        int64_t n_val = std::max<int64_t>(1, int64_t(std::llround(double(rest.size()) * val_ratio)));
        if (n_val >= int64_t(rest.size()))
            fail("trainer.TooFewFonts", "not enough fonts to carve a validation set");
        std::vector<std::string> val_fonts(rest.begin(), rest.begin() + n_val);
        std::vector<std::string> train_fonts(rest.begin() + n_val, rest.end());

        uint64_t base = folds.seed ^ (0x5151u + uint64_t(round) * 7919u);
        std::vector<PairRecord> train_pairs = gen_balanced(index, train_fonts, base + 1);
        std::vector<PairRecord> val_pairs = gen_balanced(index, val_fonts, base + 2);
        std::vector<PairRecord> test_pairs = gen_balanced(index, test_fonts, base + 3);

        TrainConfig round_config = config;
        round_config.seed = config.seed + uint64_t(round);
        auto [ckpt, tlog] = train(model_config, train_pairs, val_pairs, round_config, index);
        ckpt.metadata["cv_round"] = round;
        ckpt.metadata["test_fonts"] = test_fonts;

        EvalReport report = evaluate(ckpt, test_pairs, index, config.workers);

        CvRound r;
        r.checkpoint = std::move(ckpt);
        r.log = std::move(tlog);
        r.test_accuracy = report.accuracy;
        r.test_fonts = test_fonts;
        result.rounds.push_back(std::move(r));
    }

    double mean = 0.0;
    for (const CvRound& r : result.rounds) mean += r.test_accuracy;
    mean /= double(result.rounds.size());
    double var = 0.0;
    for (const CvRound& r : result.rounds) {
        double d = r.test_accuracy - mean;
        var += d * d;
    }
    result.mean_accuracy = mean;
    result.std_accuracy = result.rounds.size() > 1
                              ? std::sqrt(var / double(result.rounds.size() - 1))
                              : 0.0;
    return result;
}

} // namespace fontpair
