#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fontpair/image.hpp"

namespace fontpair {

// Dense row-major array of doubles. Checkpoints store float32; all
// computation runs in double so gradient checks are meaningful.
struct Array {
    std::vector<int> shape;
    std::vector<double> v;

    Array() = default;
    explicit Array(std::vector<int> s) : shape(std::move(s)) {
        size_t n = 1;
        for (int d : shape) n *= size_t(d);
        v.assign(n, 0.0);
    }
    int64_t size() const { return int64_t(v.size()); }
    double* data() { return v.data(); }
    const double* data() const { return v.data(); }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

// Fixed topology per the model: four 3x3 stride-1 pad-1 conv layers, max
// pooling (2x2, stride 2) after conv 2 and conv 4, three fully-connected
// layers on the concatenated stream outputs, binary softmax. Dropout after
// the first pooling layer and between the fully-connected layers.
struct ModelConfig {
    int input_size = 100;
    std::array<int, 4> conv_channels{16, 16, 32, 32};
    std::array<int, 3> fc_sizes{512, 256, 2};
    double dropout_keep = 0.5;

    static constexpr int kKernel = 3;
    static constexpr int kPool = 2;

    void validate() const; // throws netmodel.InvalidConfig
    int half_size() const { return input_size / 2; }
    int pooled_size() const { return input_size / 4; }
    int stream_feature_len() const {
        return conv_channels[3] * pooled_size() * pooled_size();
    }

    nlohmann::ordered_json to_json() const;
    static ModelConfig from_json(const nlohmann::ordered_json& j);
};

// One shared parameter set serves both streams.
struct Params {
    ModelConfig config;
    std::array<Array, 4> conv_w, conv_b; // conv_w[i]: [C_out, C_in, 3, 3]
    std::array<Array, 3> fc_w, fc_b;     // fc_w[i]: [out, in]

    static Params zeros(const ModelConfig& cfg);

    template <typename F>
    void for_each(F&& f) {
        static const char* conv_names[4] = {"conv1", "conv2", "conv3", "conv4"};
        static const char* fc_names[3] = {"fc1", "fc2", "fc3"};
        for (int i = 0; i < 4; ++i) {
            f(std::string(conv_names[i]) + ".w", conv_w[size_t(i)]);
            f(std::string(conv_names[i]) + ".b", conv_b[size_t(i)]);
        }
        for (int i = 0; i < 3; ++i) {
            f(std::string(fc_names[i]) + ".w", fc_w[size_t(i)]);
            f(std::string(fc_names[i]) + ".b", fc_b[size_t(i)]);
        }
    }
    template <typename F>
    void for_each(F&& f) const {
        const_cast<Params*>(this)->for_each([&](const std::string& n, Array& a) {
            f(n, const_cast<const Array&>(a));
        });
    }
};

using Gradients = Params;

struct ModelCheckpoint {
    Params params;
    int trained_epochs = 0;
    uint64_t rng_seed = 0;
    nlohmann::ordered_json metadata; // split/seed provenance etc.
};

// Deterministic fan-in-scaled initialization, zero biases.
ModelCheckpoint init_params(const ModelConfig& config, uint64_t seed);

// All intermediate activations of one stream pass, kept for backprop and
// for the explanation taps.
struct StreamTrace {
    Array input;                  // [1, S, S]
    std::array<Array, 4> conv;    // post-ReLU maps
    Array pool1, pool2;
    std::vector<int> argmax1, argmax2;
    std::vector<uint8_t> drop_mask; // after pool1, train mode only
    std::vector<double> flat;       // pool2 flattened (stream output)
};

struct PairTrace {
    StreamTrace a, b;
    std::vector<double> concat;
    std::vector<double> fc1_act, fc2_act;       // post-ReLU
    std::vector<uint8_t> drop1_mask, drop2_mask;
    std::vector<double> fc1_dropped, fc2_dropped;
    std::array<double, 2> logits{}, probs{};
    bool train_mode = false;
};

// Public per-operation surface -------------------------------------------

struct StreamFeatures {
    std::vector<Array> per_layer_maps; // conv1, conv2, pool1, conv3, conv4, pool2
    Array last_conv;                   // the stream's final map, (C4, S/4, S/4)
    std::vector<double> flat;          // last_conv flattened
};

// slot selects the dropout substream (0 = a, 1 = b); irrelevant in eval mode.
StreamFeatures stream_forward(const Params& params, const std::vector<double>& image,
                              bool train_mode = false, uint64_t dropout_seed = 0,
                              int slot = 0);

// Probabilities (p_different, p_same); index 1 = same font.
std::array<double, 2> forward(const Params& params, const std::vector<double>& image_a,
                              const std::vector<double>& image_b,
                              bool train_mode = false, uint64_t dropout_seed = 0);

// Cross-entropy with probability floor 1e-12.
double loss(const std::array<double, 2>& probs, int label);

// Exact gradients of loss w.r.t. every parameter; shared conv gradients sum
// both streams' contributions.
Gradients backward(const Params& params, const std::vector<double>& image_a,
                   const std::vector<double>& image_b, int label,
                   uint64_t dropout_seed = 0, bool train_mode = true);

// Trace-level interface used by the trainer and the explanation module.
void forward_pair(const Params& params, const std::vector<double>& image_a,
                  const std::vector<double>& image_b, bool train_mode,
                  uint64_t dropout_seed, PairTrace& trace);
void backward_pair(const Params& params, const PairTrace& trace, int label,
                   Gradients& grad_accum);

// d(logit[target]) / d(last stream map) for each stream, eval mode.
void logit_grad_last_conv(const Params& params, const PairTrace& trace, int target,
                          std::vector<double>& grad_a, std::vector<double>& grad_b);

// Head recomputation from externally supplied last stream maps (eval mode).
std::array<double, 2> head_logits_from_maps(const Params& params,
                                            const std::vector<double>& map_a,
                                            const std::vector<double>& map_b);

std::vector<double> glyph_to_input(const GlyphImage& glyph);

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::string& path);

} // namespace fontpair
