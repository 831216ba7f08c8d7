#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fontpair/error.hpp"
#include "fontpair/evaluator.hpp"
#include "fontpair/explain.hpp"
#include "fontpair/netmodel.hpp"
#include "fontpair/pairgen.hpp"
#include "fontpair/parallel.hpp"
#include "fontpair/raster.hpp"
#include "fontpair/sha256.hpp"
#include "fontpair/toml.hpp"
#include "fontpair/trainer.hpp"

#ifndef FONTPAIR_VERSION
#define FONTPAIR_VERSION "dev"
#endif

namespace fs = std::filesystem;
using fontpair::Error;
using ordered_json = nlohmann::ordered_json;

namespace {

struct GlobalOpts {
    uint64_t seed = 0;
    bool seed_given = false;
    int workers = fontpair::default_workers();
    bool deterministic = false;

    int effective_workers() const { return deterministic ? 1 : workers; }
};

uint64_t env_seed() {
    const char* s = std::getenv("FONTPAIR_SEED");
    if (!s) return 0;
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        return 0;
    }
}

// Every run that resolves an output directory records its configuration
// there, before doing any work, so failed runs are auditable too.
class RunMeta {
public:
    RunMeta(std::string out_dir, std::string subcommand, const GlobalOpts& g)
        : out_dir_(std::move(out_dir)) {
        j_["subcommand"] = std::move(subcommand);
        j_["version"] = FONTPAIR_VERSION;
        j_["seed"] = g.seed;
        j_["workers"] = g.effective_workers();
        j_["deterministic"] = g.deterministic;
        j_["config"] = ordered_json::object();
        j_["inputs"] = ordered_json::object();
        j_["status"] = "started";
    }

    void config(const std::string& key, const ordered_json& value) { j_["config"][key] = value; }
    void input(const std::string& path) {
        if (fs::exists(path) && fs::is_regular_file(path))
            j_["inputs"][path] = fontpair::sha256_file_hex(path);
    }
    void write() const {
        fs::create_directories(out_dir_);
        std::ofstream out(fs::path(out_dir_) / "run_meta.json", std::ios::trunc);
        out << j_.dump(2) << "\n";
    }
    void finish(const std::string& status) {
        j_["status"] = status;
        write();
    }

private:
    std::string out_dir_;
    ordered_json j_;
};

std::vector<std::string> parse_exclusions(const std::string& spec) {
    std::vector<std::string> out;
    if (spec.empty()) return out;
    if (spec.front() == '@') {
        std::ifstream in(spec.substr(1));
        if (!in) fontpair::fail("cli.UnreadableFile", "cannot open exclusion list " + spec.substr(1));
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) out.push_back(line);
        return out;
    }
    std::string item;
    for (char c : spec) {
        if (c == ',') {
            if (!item.empty()) out.push_back(item);
            item.clear();
        } else {
            item += c;
        }
    }
    if (!item.empty()) out.push_back(item);
    return out;
}

// Configuration precedence: explicit flags > config file > defaults.
struct ConfigStack {
    fontpair::ModelConfig model;
    fontpair::TrainConfig train;

    void load_file(const std::string& path) {
        fontpair::minitoml::Table t = fontpair::minitoml::parse_file(path);
        using fontpair::minitoml::Value;
        auto section = [&](const std::string& name) -> const std::map<std::string, Value>* {
            auto it = t.find(name);
            return it == t.end() ? nullptr : &it->second;
        };
        if (const auto* m = section("model")) {
            for (const auto& [key, v] : *m) {
                if (key == "input_size") model.input_size = int(v.integer);
                else if (key == "dropout_keep") model.dropout_keep = v.as_number();
                else if (key == "conv_channels") {
                    if (v.array.size() != 4)
                        fontpair::fail("config.BadToml", "conv_channels needs 4 entries");
                    for (size_t i = 0; i < 4; ++i) model.conv_channels[i] = int(v.array[i].integer);
                } else if (key == "fc_sizes") {
                    if (v.array.size() != 3)
                        fontpair::fail("config.BadToml", "fc_sizes needs 3 entries");
                    for (size_t i = 0; i < 3; ++i) model.fc_sizes[i] = int(v.array[i].integer);
                } else {
                    fontpair::fail("config.BadToml", "unknown [model] key " + key);
                }
            }
        }
        if (const auto* s = section("train")) {
            for (const auto& [key, v] : *s) {
                if (key == "batch_size") train.batch_size = int(v.integer);
                else if (key == "learning_rate") train.learning_rate = v.as_number();
                else if (key == "beta1") train.beta1 = v.as_number();
                else if (key == "beta2") train.beta2 = v.as_number();
                else if (key == "adam_epsilon") train.adam_epsilon = v.as_number();
                else if (key == "max_epochs") train.max_epochs = int(v.integer);
                else if (key == "patience") train.patience = int(v.integer);
                else if (key == "seed") train.seed = uint64_t(v.integer);
                else fontpair::fail("config.BadToml", "unknown [train] key " + key);
            }
        }
    }
};

void emit_summary(const std::string& run_dir) {
    fs::path report_path = fs::path(run_dir) / "report.json";
    if (!fs::exists(report_path))
        fontpair::fail("cli.MissingReport", "no report.json in " + run_dir);
    fontpair::EvalReport report = fontpair::read_report(report_path.string());
    auto [worst, best] = fontpair::rank_charpairs(report, 20);

    ordered_json j;
    j["accuracy"] = report.accuracy;
    j["n_pairs"] = report.n_pairs;
    j["confusion"] = {{"same_same", report.confusion.same_same},
                      {"same_diff", report.confusion.same_diff},
                      {"diff_same", report.confusion.diff_same},
                      {"diff_diff", report.confusion.diff_diff}};
    auto rank_list = [](const std::vector<fontpair::PairRank>& v) {
        ordered_json a = ordered_json::array();
        for (const auto& p : v) {
            ordered_json e;
            e["pair"] = std::string(1, p.char_a) + "-" + std::string(1, p.char_b);
            e["accuracy"] = p.accuracy();
            a.push_back(e);
        }
        return a;
    };
    j["worst_pairs"] = rank_list(worst);
    j["best_pairs"] = rank_list(best);
    ordered_json figures = ordered_json::array();
    for (const char* f : {"pca_scatter.png", "gradcam_a.png", "gradcam_b.png"})
        if (fs::exists(fs::path(run_dir) / f)) figures.push_back(f);
    j["figures"] = figures;

    {
        std::ofstream out(fs::path(run_dir) / "summary.json", std::ios::trunc);
        out << j.dump(2) << "\n";
    }

    std::ostringstream text;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "pairs evaluated: %lld\naccuracy: %.4f\n",
                  (long long)report.n_pairs, report.accuracy);
    text << buf;
    std::snprintf(buf, sizeof(buf),
                  "confusion (gt x predicted):\n"
                  "  same:      same=%lld different=%lld\n"
                  "  different: same=%lld different=%lld\n",
                  (long long)report.confusion.same_same, (long long)report.confusion.same_diff,
                  (long long)report.confusion.diff_same, (long long)report.confusion.diff_diff);
    text << buf;
    text << "worst character pairs:";
    for (const auto& p : worst) {
        std::snprintf(buf, sizeof(buf), " %c-%c(%.3f)", p.char_a, p.char_b, p.accuracy());
        text << buf;
    }
    text << "\nbest character pairs:";
    for (const auto& p : best) {
        std::snprintf(buf, sizeof(buf), " %c-%c(%.3f)", p.char_a, p.char_b, p.accuracy());
        text << buf;
    }
    text << "\n";
    for (const auto& f : figures) text << "figure: " << f.get<std::string>() << "\n";

    std::ofstream out(fs::path(run_dir) / "summary.txt", std::ios::trunc);
    out << text.str();
    std::cout << text.str();
}

int run(int argc, char** argv) {
    CLI::App app{"character-independent font identification pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", FONTPAIR_VERSION);

    GlobalOpts g;
    g.seed = env_seed();
    auto* seed_opt = app.add_option("--seed", g.seed, "global random seed (default $FONTPAIR_SEED)");
    app.add_option("--workers", g.workers, "parallel workers");
    app.add_flag("--deterministic", g.deterministic, "single-worker deterministic mode");

    // --- build-dataset ---
    auto* build = app.add_subcommand("build-dataset", "rasterize a font directory into a dataset");
    std::string fonts_dir, out_dir, exclude_spec;
    int size = fontpair::kDefaultGlyphSize;
    double ink_low = 0.01, ink_high = 0.60;
    build->add_option("--fonts-dir", fonts_dir, "directory of .ttf/.otf files")->required();
    build->add_option("--out", out_dir, "output dataset directory")->required();
    build->add_option("--size", size, "glyph raster size");
    build->add_option("--exclude", exclude_spec, "comma list of font ids, or @file");
    build->add_option("--ink-low", ink_low, "minimum mean ink fraction");
    build->add_option("--ink-high", ink_high, "maximum mean ink fraction");

    // --- split ---
    auto* split_cmd = app.add_subcommand("split", "font-disjoint split plus pair manifests");
    std::string dataset_dir;
    int64_t n_train = 0, n_val = 0, n_test = 0;
    split_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
    split_cmd->add_option("--train", n_train, "training fonts")->required();
    split_cmd->add_option("--val", n_val, "validation fonts")->required();
    split_cmd->add_option("--test", n_test, "test fonts")->required();
    split_cmd->add_option("--out", out_dir, "output directory")->required();

    // --- folds ---
    auto* folds_cmd = app.add_subcommand("folds", "k-fold manifest over a dataset");
    int k_folds = 6;
    folds_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
    folds_cmd->add_option("--k", k_folds, "number of folds");
    folds_cmd->add_option("--out", out_dir, "output directory")->required();

    // --- count-pairs ---
    auto* count_cmd = app.add_subcommand("count-pairs", "pair combinatorics for a corpus size");
    int64_t count_fonts = 0;
    int count_chars = 26;
    count_cmd->add_option("--fonts", count_fonts, "number of fonts")->required();
    count_cmd->add_option("--chars", count_chars, "number of character classes");

    // --- train ---
    auto* train_cmd = app.add_subcommand("train", "train on pair manifests");
    std::string pairs_dir, train_pairs_path, val_pairs_path, split_path, config_path;
    fontpair::ModelConfig flag_model;
    fontpair::TrainConfig flag_train;
    train_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
    train_cmd->add_option("--pairs", pairs_dir, "directory holding pairs_train/pairs_val manifests");
    train_cmd->add_option("--train-pairs", train_pairs_path, "train pair manifest");
    train_cmd->add_option("--val-pairs", val_pairs_path, "validation pair manifest");
    train_cmd->add_option("--split", split_path, "split.json for provenance");
    train_cmd->add_option("--config", config_path, "train.toml");
    train_cmd->add_option("--out", out_dir, "output directory")->required();
    auto* t_bs = train_cmd->add_option("--batch-size", flag_train.batch_size);
    auto* t_lr = train_cmd->add_option("--learning-rate", flag_train.learning_rate);
    auto* t_ep = train_cmd->add_option("--max-epochs", flag_train.max_epochs);
    auto* t_pt = train_cmd->add_option("--patience", flag_train.patience);
    auto* m_is = train_cmd->add_option("--input-size", flag_model.input_size);

    // --- cv ---
    auto* cv_cmd = app.add_subcommand("cv", "k-fold cross-validation");
    cv_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
    cv_cmd->add_option("--k", k_folds, "number of folds");
    cv_cmd->add_option("--config", config_path, "train.toml");
    cv_cmd->add_option("--out", out_dir, "output directory")->required();
    auto* cv_is = cv_cmd->add_option("--input-size", flag_model.input_size);

    // --- eval ---
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a pair manifest");
    std::string ckpt_path, pairs_path;
    eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    eval_cmd->add_option("--pairs", pairs_path, "pair manifest")->required();
    eval_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
    eval_cmd->add_option("--out", out_dir, "report directory")->required();

    // --- cross-eval ---
    auto* cross_cmd = app.add_subcommand("cross-eval", "evaluate on an external corpus");
    std::string cross_fonts_dir, cross_corpus_dir;
    cross_cmd->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    cross_cmd->add_option("--fonts-dir", cross_fonts_dir, "raw font files to rasterize");
    cross_cmd->add_option("--corpus", cross_corpus_dir, "already-built dataset directory");
    cross_cmd->add_option("--out", out_dir, "report directory")->required();

    // --- pca ---
    auto* pca_cmd = app.add_subcommand("pca", "stream-feature PCA for a character pair");
    std::vector<std::string> pca_chars;
    pca_cmd->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    pca_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
    pca_cmd->add_option("--split", split_path, "split.json (uses its test fonts)")->required();
    pca_cmd->add_option("--chars", pca_chars, "two characters, e.g. --chars D E")
        ->expected(2)
        ->required();
    pca_cmd->add_option("--out", out_dir, "output directory")->required();

    // --- gradcam ---
    auto* cam_cmd = app.add_subcommand("gradcam", "contribution maps for one pair");
    std::string pair_manifest;
    int64_t pair_index = 0;
    std::string target = "auto";
    bool nearest = false;
    cam_cmd->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    cam_cmd->add_option("--pair-manifest", pair_manifest, "pair manifest")->required();
    cam_cmd->add_option("--index", pair_index, "pair index in the manifest")->required();
    cam_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
    cam_cmd->add_option("--target", target, "auto | same | different");
    cam_cmd->add_flag("--nearest", nearest, "nearest-neighbor upsampling");
    cam_cmd->add_option("--out", out_dir, "output directory")->required();

    // --- report ---
    auto* report_cmd = app.add_subcommand("report", "consolidated summary for a run directory");
    std::string run_dir;
    report_cmd->add_option("--run", run_dir, "run directory containing report.json")->required();

    // --- defaults ---
    auto* defaults_cmd = app.add_subcommand("defaults", "print all default settings");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }
    if (seed_opt->count() > 0) g.seed_given = true;

    if (build->parsed()) {
        RunMeta meta(out_dir, "build-dataset", g);
        meta.config("fonts_dir", fonts_dir);
        meta.config("size", size);
        meta.config("ink_low", ink_low);
        meta.config("ink_high", ink_high);
        meta.config("exclude", exclude_spec);
        meta.write();
        try {
            fontpair::BuildStats stats =
                fontpair::build_dataset(fonts_dir, out_dir, size, parse_exclusions(exclude_spec),
                                        ink_low, ink_high, g.effective_workers());
            std::cout << "scanned " << stats.scanned << " files, kept " << stats.kept
                      << ", rejected " << stats.rejected << "\n";
            meta.finish("ok");
        } catch (...) {
            meta.finish("error");
            throw;
        }
        return 0;
    }

    if (split_cmd->parsed()) {
        RunMeta meta(out_dir, "split", g);
        meta.config("dataset", dataset_dir);
        meta.config("sizes", std::vector<int64_t>{n_train, n_val, n_test});
        meta.input((fs::path(dataset_dir) / "fonts.jsonl").string());
        meta.write();
        try {
            fontpair::DatasetIndex index = fontpair::load_dataset(dataset_dir);
            fontpair::SplitManifest split =
                fontpair::split_fonts(index.font_ids(), n_train, n_val, n_test, g.seed);
            fs::create_directories(out_dir);
            fontpair::write_split((fs::path(out_dir) / "split.json").string(), split);
            fontpair::write_pairs((fs::path(out_dir) / "pairs_train.jsonl").string(),
                                  fontpair::gen_balanced(index, split.train_fonts, g.seed + 1));
            fontpair::write_pairs((fs::path(out_dir) / "pairs_val.jsonl").string(),
                                  fontpair::gen_balanced(index, split.val_fonts, g.seed + 2));
            fontpair::write_pairs((fs::path(out_dir) / "pairs_test.jsonl").string(),
                                  fontpair::gen_balanced(index, split.test_fonts, g.seed + 3));
            std::cout << "split " << split.train_fonts.size() << "/" << split.val_fonts.size()
                      << "/" << split.test_fonts.size() << " fonts written to " << out_dir << "\n";
            meta.finish("ok");
        } catch (...) {
            meta.finish("error");
            throw;
        }
        return 0;
    }

    if (folds_cmd->parsed()) {
        RunMeta meta(out_dir, "folds", g);
        meta.config("dataset", dataset_dir);
        meta.config("k", k_folds);
        meta.input((fs::path(dataset_dir) / "fonts.jsonl").string());
        meta.write();
        try {
            fontpair::DatasetIndex index = fontpair::load_dataset(dataset_dir);
            fontpair::SplitManifest folds = fontpair::make_folds(index.font_ids(), k_folds, g.seed);
            fs::create_directories(out_dir);
            fontpair::write_split((fs::path(out_dir) / "folds.json").string(), folds);
            std::cout << k_folds << " folds over " << index.fonts.size() << " fonts written to "
                      << out_dir << "\n";
            meta.finish("ok");
        } catch (...) {
            meta.finish("error");
            throw;
        }
        return 0;
    }

    if (count_cmd->parsed()) {
        auto [positives, per_font] = fontpair::count_pairs(count_fonts, count_chars);
        std::cout << per_font << " pairs per font; " << positives << " positive pairs over "
                  << count_fonts << " fonts\n";
        return 0;
    }

    if (train_cmd->parsed() || cv_cmd->parsed()) {
        ConfigStack cfg;
        if (!config_path.empty()) cfg.load_file(config_path);
        // Flags override the file.
        if (t_bs->count()) cfg.train.batch_size = flag_train.batch_size;
        if (t_lr->count()) cfg.train.learning_rate = flag_train.learning_rate;
        if (t_ep->count()) cfg.train.max_epochs = flag_train.max_epochs;
        if (t_pt->count()) cfg.train.patience = flag_train.patience;
        if (m_is->count()) cfg.model.input_size = flag_model.input_size;
        if (cv_cmd->parsed() && cv_is->count()) cfg.model.input_size = flag_model.input_size;
        if (g.seed_given || cfg.train.seed == 0) cfg.train.seed = g.seed;
        cfg.train.workers = g.effective_workers();

        RunMeta meta(out_dir, train_cmd->parsed() ? "train" : "cv", g);
        meta.config("model", cfg.model.to_json());
        meta.config("train", cfg.train.to_json());
        meta.input((fs::path(dataset_dir) / "fonts.jsonl").string());
        if (!split_path.empty()) meta.input(split_path);
        meta.write();
        try {
            fontpair::DatasetIndex index = fontpair::load_dataset(dataset_dir);
            fs::create_directories(out_dir);
            if (train_cmd->parsed()) {
                std::string tp = train_pairs_path, vp = val_pairs_path;
                if (!pairs_dir.empty()) {
                    if (tp.empty()) tp = (fs::path(pairs_dir) / "pairs_train.jsonl").string();
                    if (vp.empty()) vp = (fs::path(pairs_dir) / "pairs_val.jsonl").string();
                }
                if (tp.empty() || vp.empty())
                    fontpair::fail("cli.MissingArgument",
                                   "provide --pairs DIR or --train-pairs/--val-pairs");
                meta.input(tp);
                meta.input(vp);
                meta.write();
                std::vector<fontpair::PairRecord> train_pairs = fontpair::read_pairs(tp);
                std::vector<fontpair::PairRecord> val_pairs = fontpair::read_pairs(vp);
                auto [ckpt, log] =
                    fontpair::train(cfg.model, train_pairs, val_pairs, cfg.train, index);
                if (!split_path.empty()) ckpt.metadata["split_file"] = split_path;
                fontpair::save_checkpoint((fs::path(out_dir) / "model.ckpt").string(), ckpt);
                fontpair::write_train_log_csv((fs::path(out_dir) / "train_log.csv").string(), log);
                std::cout << "best epoch " << log.best_epoch << ", val accuracy "
                          << log.best_val_acc << "\n";
            } else {
                fontpair::SplitManifest folds =
                    fontpair::make_folds(index.font_ids(), k_folds, g.seed);
                fontpair::write_split((fs::path(out_dir) / "folds.json").string(), folds);
                fontpair::CvResult cv = fontpair::run_cv(cfg.model, cfg.train, index, folds);
                ordered_json summary;
                summary["k"] = k_folds;
                summary["mean_accuracy"] = cv.mean_accuracy;
                summary["std_accuracy"] = cv.std_accuracy;
                ordered_json rounds = ordered_json::array();
                for (size_t i = 0; i < cv.rounds.size(); ++i) {
                    const fontpair::CvRound& r = cv.rounds[i];
                    std::string round_dir = (fs::path(out_dir) / ("round_" + std::to_string(i))).string();
                    fs::create_directories(round_dir);
                    fontpair::save_checkpoint((fs::path(round_dir) / "model.ckpt").string(),
                                              r.checkpoint);
                    fontpair::write_train_log_csv((fs::path(round_dir) / "train_log.csv").string(),
                                                  r.log);
                    ordered_json e;
                    e["round"] = i;
                    e["test_accuracy"] = r.test_accuracy;
                    e["test_fonts"] = r.test_fonts.size();
                    rounds.push_back(e);
                }
                summary["rounds"] = rounds;
                std::ofstream out(fs::path(out_dir) / "cv_summary.json", std::ios::trunc);
                out << summary.dump(2) << "\n";
                std::cout << "cv accuracy " << cv.mean_accuracy << " +/- " << cv.std_accuracy
                          << "\n";
            }
            meta.finish("ok");
        } catch (...) {
            meta.finish("error");
            throw;
        }
        return 0;
    }

    if (eval_cmd->parsed()) {
        RunMeta meta(out_dir, "eval", g);
        meta.input(ckpt_path);
        meta.input(pairs_path);
        meta.write();
        try {
            fontpair::DatasetIndex index = fontpair::load_dataset(dataset_dir);
            fontpair::ModelCheckpoint ckpt = fontpair::load_checkpoint(ckpt_path);
            std::vector<fontpair::PairRecord> pairs = fontpair::read_pairs(pairs_path);
            fontpair::EvalReport report =
                fontpair::evaluate(ckpt, pairs, index, g.effective_workers());
            fontpair::write_report(out_dir, report);
            std::cout << "accuracy " << report.accuracy << " over " << report.n_pairs
                      << " pairs\n";
            meta.finish("ok");
        } catch (...) {
            meta.finish("error");
            throw;
        }
        return 0;
    }

    if (cross_cmd->parsed()) {
        RunMeta meta(out_dir, "cross-eval", g);
        meta.input(ckpt_path);
        meta.write();
        try {
            fontpair::ModelCheckpoint ckpt = fontpair::load_checkpoint(ckpt_path);
            std::string corpus = cross_corpus_dir;
            if (corpus.empty()) {
                if (cross_fonts_dir.empty())
                    fontpair::fail("cli.MissingArgument", "provide --fonts-dir or --corpus");
                corpus = (fs::path(out_dir) / "corpus").string();
                fontpair::build_dataset(cross_fonts_dir, corpus, ckpt.params.config.input_size,
                                        {}, 0.01, 0.60, g.effective_workers());
            }
            fontpair::EvalReport report =
                fontpair::cross_evaluate(ckpt, corpus, g.seed, g.effective_workers());
            fontpair::write_report(out_dir, report);
            std::cout << "cross-dataset accuracy " << report.accuracy << " over "
                      << report.n_pairs << " pairs\n";
            meta.finish("ok");
        } catch (...) {
            meta.finish("error");
            throw;
        }
        return 0;
    }

    if (pca_cmd->parsed()) {
        RunMeta meta(out_dir, "pca", g);
        meta.input(ckpt_path);
        meta.input(split_path);
        meta.config("chars", pca_chars);
        meta.write();
        try {
            if (pca_chars[0].size() != 1 || pca_chars[1].size() != 1)
                fontpair::fail("cli.BadArgument", "--chars wants single letters");
            fontpair::DatasetIndex index = fontpair::load_dataset(dataset_dir);
            fontpair::ModelCheckpoint ckpt = fontpair::load_checkpoint(ckpt_path);
            fontpair::SplitManifest split = fontpair::read_split(split_path);
            if (split.test_fonts.empty())
                fontpair::fail("cli.BadArgument", "split has no test fonts");
            fontpair::PcaProjection proj =
                fontpair::pca_project(ckpt, index, split.test_fonts, pca_chars[0][0],
                                      pca_chars[1][0], g.effective_workers());
            fs::create_directories(out_dir);
            fontpair::render_scatter(proj, (fs::path(out_dir) / "pca_scatter.png").string(),
                                     (fs::path(out_dir) / "pca_points.csv").string());
            ordered_json j;
            j["char_a"] = std::string(1, proj.char_a);
            j["char_b"] = std::string(1, proj.char_b);
            j["fonts"] = proj.fonts.size();
            j["explained_variance"] = proj.explained_variance;
            j["overlap_score"] = proj.overlap_score;
            std::ofstream out(fs::path(out_dir) / "pca_meta.json", std::ios::trunc);
            out << j.dump(2) << "\n";
            std::cout << "overlap score " << proj.overlap_score << " for " << pca_chars[0]
                      << "-" << pca_chars[1] << "\n";
            meta.finish("ok");
        } catch (...) {
            meta.finish("error");
            throw;
        }
        return 0;
    }

    if (cam_cmd->parsed()) {
        RunMeta meta(out_dir, "gradcam", g);
        meta.input(ckpt_path);
        meta.input(pair_manifest);
        meta.config("index", pair_index);
        meta.config("target", target);
        meta.write();
        try {
            fontpair::DatasetIndex index = fontpair::load_dataset(dataset_dir);
            fontpair::ModelCheckpoint ckpt = fontpair::load_checkpoint(ckpt_path);
            std::vector<fontpair::PairRecord> pairs = fontpair::read_pairs(pair_manifest);
            if (pair_index < 0 || pair_index >= int64_t(pairs.size()))
                fontpair::fail("cli.BadArgument", "pair index out of range");
            const fontpair::PairRecord& p = pairs[size_t(pair_index)];
            fontpair::GlyphImage ga = fontpair::read_glyph_png(
                (fs::path(index.dir) / p.image_a).string(), p.char_a, p.font_a);
            fontpair::GlyphImage gb = fontpair::read_glyph_png(
                (fs::path(index.dir) / p.image_b).string(), p.char_b, p.font_b);
            int tgt = -1;
            if (target == "same") tgt = 1;
            else if (target == "different") tgt = 0;
            else if (target != "auto")
                fontpair::fail("cli.BadArgument", "--target wants auto|same|different");
            fontpair::GradCamResult cam = fontpair::grad_cam(
                ckpt, fontpair::glyph_to_input(ga), fontpair::glyph_to_input(gb), tgt);
            fs::create_directories(out_dir);
            fontpair::render_heatmap(cam.map_a, ga,
                                     (fs::path(out_dir) / "gradcam_a.png").string(), nearest);
            fontpair::render_heatmap(cam.map_b, gb,
                                     (fs::path(out_dir) / "gradcam_b.png").string(), nearest);
            auto alpha_stats = [](const std::vector<double>& a) {
                double mn = a.empty() ? 0 : a[0], mx = mn, sum = 0;
                for (double x : a) {
                    mn = std::min(mn, x);
                    mx = std::max(mx, x);
                    sum += x;
                }
                ordered_json j;
                j["min"] = mn;
                j["max"] = mx;
                j["mean"] = a.empty() ? 0.0 : sum / double(a.size());
                return j;
            };
            ordered_json j;
            j["pair_index"] = pair_index;
            j["label"] = p.label;
            j["target_class"] = cam.target == 1 ? "same" : "different";
            j["p_same"] = cam.probs[1];
            j["alpha_a"] = alpha_stats(cam.alpha_a);
            j["alpha_b"] = alpha_stats(cam.alpha_b);
            std::ofstream out(fs::path(out_dir) / "gradcam_meta.json", std::ios::trunc);
            out << j.dump(2) << "\n";
            std::cout << "target " << j["target_class"].get<std::string>() << ", p_same "
                      << cam.probs[1] << "\n";
            meta.finish("ok");
        } catch (...) {
            meta.finish("error");
            throw;
        }
        return 0;
    }

    if (report_cmd->parsed()) {
        emit_summary(run_dir);
        return 0;
    }

    if (defaults_cmd->parsed()) {
        ordered_json j;
        j["model"] = fontpair::ModelConfig{}.to_json();
        j["train"] = fontpair::TrainConfig{}.to_json();
        j["raster"] = {{"size", fontpair::kDefaultGlyphSize},
                       {"ink_low", 0.01},
                       {"ink_high", 0.60},
                       {"binarize_threshold", fontpair::kBinarizeThreshold}};
        j["workers"] = fontpair::default_workers();
        std::cout << j.dump(2) << "\n";
        return 0;
    }

    return 2;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error internal: " << e.what() << "\n";
        return 1;
    }
}
