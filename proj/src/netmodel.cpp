#include "fontpair/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "fontpair/error.hpp"
#include "fontpair/rng.hpp"

namespace fontpair {

void ModelConfig::validate() const {
    if (input_size < 8 || input_size % 4 != 0)
        fail("netmodel.InvalidConfig", "input_size must be >= 8 and divisible by 4");
    for (int c : conv_channels)
        if (c < 1) fail("netmodel.InvalidConfig", "conv channels must be >= 1");
    for (int f : fc_sizes)
        if (f < 1) fail("netmodel.InvalidConfig", "fc sizes must be >= 1");
    if (fc_sizes[2] != 2)
        fail("netmodel.InvalidConfig", "last fc size must be 2 (binary softmax)");
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0))
        fail("netmodel.InvalidConfig", "dropout_keep must be in (0, 1]");
}

nlohmann::ordered_json ModelConfig::to_json() const {
    nlohmann::ordered_json j;
    j["input_size"] = input_size;
    j["conv_channels"] = conv_channels;
    j["fc_sizes"] = fc_sizes;
    j["dropout_keep"] = dropout_keep;
    return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::ordered_json& j) {
    ModelConfig c;
    c.input_size = j.value("input_size", 100);
    if (j.contains("conv_channels")) {
        auto v = j["conv_channels"].get<std::vector<int>>();
        if (v.size() != 4) fail("netmodel.InvalidConfig", "conv_channels needs 4 entries");
        std::copy(v.begin(), v.end(), c.conv_channels.begin());
    }
    if (j.contains("fc_sizes")) {
        auto v = j["fc_sizes"].get<std::vector<int>>();
        if (v.size() != 3) fail("netmodel.InvalidConfig", "fc_sizes needs 3 entries");
        std::copy(v.begin(), v.end(), c.fc_sizes.begin());
    }
    c.dropout_keep = j.value("dropout_keep", 0.5);
    c.validate();
    return c;
}

Params Params::zeros(const ModelConfig& cfg) {
    cfg.validate();
    Params p;
    p.config = cfg;
    int in_ch = 1;
    for (int i = 0; i < 4; ++i) {
        int out_ch = cfg.conv_channels[size_t(i)];
        p.conv_w[size_t(i)] = Array({out_ch, in_ch, 3, 3});
        p.conv_b[size_t(i)] = Array({out_ch});
        in_ch = out_ch;
    }
    int fc_in = 2 * cfg.stream_feature_len();
    for (int i = 0; i < 3; ++i) {
        int fc_out = cfg.fc_sizes[size_t(i)];
        p.fc_w[size_t(i)] = Array({fc_out, fc_in});
        p.fc_b[size_t(i)] = Array({fc_out});
        fc_in = fc_out;
    }
    return p;
}

ModelCheckpoint init_params(const ModelConfig& config, uint64_t seed) {
    ModelCheckpoint ckpt;
    ckpt.params = Params::zeros(config);
    ckpt.rng_seed = seed;
    Rng rng(seed);
    ckpt.params.for_each([&](const std::string& name, Array& a) {
        if (name.ends_with(".b")) return; // zero biases
        int64_t fan_in = 1;
        for (size_t d = 1; d < a.shape.size(); ++d) fan_in *= a.shape[d];
        double std_dev = std::sqrt(2.0 / double(fan_in));
        for (double& w : a.v) w = rng.normal() * std_dev;
    });
    return ckpt;
}

// --- low-level kernels -----------------------------------------------------

namespace {

constexpr double kProbFloor = 1e-12;

// im2col for 3x3 / stride 1 / pad 1: cols is (C*9) x (H*W).
void im2col3(const double* in, int channels, int h, int w, double* cols) {
    int n = h * w;
    for (int c = 0; c < channels; ++c) {
        const double* plane = in + size_t(c) * size_t(n);
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                double* dst = cols + (size_t(c) * 9 + size_t(ky) * 3 + size_t(kx)) * size_t(n);
                int shift = kx - 1;
                for (int y = 0; y < h; ++y) {
                    int sy = y + ky - 1;
                    double* row = dst + size_t(y) * size_t(w);
                    if (sy < 0 || sy >= h) {
                        std::memset(row, 0, size_t(w) * sizeof(double));
                        continue;
                    }
                    const double* src = plane + size_t(sy) * size_t(w);
                    if (shift == 0) {
                        std::memcpy(row, src, size_t(w) * sizeof(double));
                    } else if (shift < 0) {
                        row[0] = 0.0;
                        std::memcpy(row + 1, src, size_t(w - 1) * sizeof(double));
                    } else {
                        std::memcpy(row, src + 1, size_t(w - 1) * sizeof(double));
                        row[w - 1] = 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-add transpose of im2col3.
void col2im3(const double* cols, int channels, int h, int w, double* din) {
    int n = h * w;
    std::memset(din, 0, size_t(channels) * size_t(n) * sizeof(double));
    for (int c = 0; c < channels; ++c) {
        double* plane = din + size_t(c) * size_t(n);
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const double* src = cols + (size_t(c) * 9 + size_t(ky) * 3 + size_t(kx)) * size_t(n);
                int shift = kx - 1;
                for (int y = 0; y < h; ++y) {
                    int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    double* drow = plane + size_t(sy) * size_t(w);
                    const double* srow = src + size_t(y) * size_t(w);
                    if (shift == 0) {
                        for (int x = 0; x < w; ++x) drow[x] += srow[x];
                    } else if (shift < 0) {
                        for (int x = 1; x < w; ++x) drow[x - 1] += srow[x];
                    } else {
                        for (int x = 0; x < w - 1; ++x) drow[x + 1] += srow[x];
                    }
                }
            }
        }
    }
}

// out[M x N] = W[M x K] * cols[K x N] + b, then ReLU.
void conv_apply(const double* w, const double* b, const double* cols,
                int m, int k, int n, double* out) {
    for (int i = 0; i < m; ++i) {
        double* row = out + size_t(i) * size_t(n);
        std::fill(row, row + n, b[i]);
        const double* wrow = w + size_t(i) * size_t(k);
        for (int j = 0; j < k; ++j) {
            double wj = wrow[j];
            if (wj == 0.0) continue;
            const double* crow = cols + size_t(j) * size_t(n);
            for (int t = 0; t < n; ++t) row[t] += wj * crow[t];
        }
        for (int t = 0; t < n; ++t)
            if (row[t] < 0.0) row[t] = 0.0;
    }
}

void maxpool2(const double* in, int channels, int h, int w, double* out, int* argmax) {
    int oh = h / 2, ow = w / 2;
    for (int c = 0; c < channels; ++c) {
        const double* plane = in + size_t(c) * size_t(h) * size_t(w);
        size_t plane_off = size_t(c) * size_t(h) * size_t(w);
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                int iy = 2 * y, ix = 2 * x;
                int best = iy * w + ix;
                double bv = plane[best];
                int cand[3] = {iy * w + ix + 1, (iy + 1) * w + ix, (iy + 1) * w + ix + 1};
                for (int idx : cand) {
                    if (plane[idx] > bv) { // ties keep the first (scan order)
                        bv = plane[idx];
                        best = idx;
                    }
                }
                size_t o = (size_t(c) * size_t(oh) + size_t(y)) * size_t(ow) + size_t(x);
                out[o] = bv;
                argmax[o] = int(plane_off) + best;
            }
        }
    }
}

void dropout_mask(std::vector<uint8_t>& mask, size_t n, double keep, Rng& rng) {
    mask.resize(n);
    for (size_t i = 0; i < n; ++i) mask[i] = rng.next_double() < keep ? 1 : 0;
}

void fc_apply(const double* w, const double* b, const double* x,
              int out_n, int in_n, double* out) {
    for (int o = 0; o < out_n; ++o) {
        const double* wrow = w + size_t(o) * size_t(in_n);
        double acc = b[o];
        for (int i = 0; i < in_n; ++i) acc += wrow[i] * x[i];
        out[o] = acc;
    }
}

void softmax2(const std::array<double, 2>& logits, std::array<double, 2>& probs) {
    double m = std::max(logits[0], logits[1]);
    double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
    double z = e0 + e1;
    probs[0] = e0 / z;
    probs[1] = e1 / z;
}

void check_image(const ModelConfig& cfg, const std::vector<double>& img, const char* which) {
    if (int64_t(img.size()) != int64_t(cfg.input_size) * cfg.input_size)
        fail("netmodel.ShapeMismatch",
             std::string(which) + " image has " + std::to_string(img.size()) +
                 " values, expected " + std::to_string(cfg.input_size) + "^2");
}

// Dropout substreams: 0 = stream a, 1 = stream b, 2 = after fc1, 3 = after fc2.
void stream_run(const Params& p, const std::vector<double>& image, bool train,
                uint64_t dropout_seed, int slot, StreamTrace& t) {
    const ModelConfig& cfg = p.config;
    int s = cfg.input_size, hs = cfg.half_size(), qs = cfg.pooled_size();
    const auto& ch = cfg.conv_channels;

    t.input = Array({1, s, s});
    std::copy(image.begin(), image.end(), t.input.v.begin());

    std::vector<double> cols;

    auto conv = [&](const Array& in, int layer, int h, int w) {
        int cin = in.shape[0];
        int cout = ch[size_t(layer)];
        cols.resize(size_t(cin) * 9 * size_t(h) * size_t(w));
        im2col3(in.data(), cin, h, w, cols.data());
        t.conv[size_t(layer)] = Array({cout, h, w});
        conv_apply(p.conv_w[size_t(layer)].data(), p.conv_b[size_t(layer)].data(),
                   cols.data(), cout, cin * 9, h * w, t.conv[size_t(layer)].data());
    };

    conv(t.input, 0, s, s);
    conv(t.conv[0], 1, s, s);

    t.pool1 = Array({ch[1], hs, hs});
    t.argmax1.resize(t.pool1.v.size());
    maxpool2(t.conv[1].data(), ch[1], s, s, t.pool1.data(), t.argmax1.data());

    if (train && cfg.dropout_keep < 1.0) {
        Rng rng = Rng::child(dropout_seed, uint64_t(slot));
        dropout_mask(t.drop_mask, t.pool1.v.size(), cfg.dropout_keep, rng);
        double inv = 1.0 / cfg.dropout_keep;
        for (size_t i = 0; i < t.pool1.v.size(); ++i)
            t.pool1.v[i] = t.drop_mask[i] ? t.pool1.v[i] * inv : 0.0;
    } else {
        t.drop_mask.clear();
    }

    conv(t.pool1, 2, hs, hs);
    conv(t.conv[2], 3, hs, hs);

    t.pool2 = Array({ch[3], qs, qs});
    t.argmax2.resize(t.pool2.v.size());
    maxpool2(t.conv[3].data(), ch[3], hs, hs, t.pool2.data(), t.argmax2.data());

    t.flat = t.pool2.v;
}

void head_run(const Params& p, bool train, uint64_t dropout_seed, PairTrace& t) {
    const ModelConfig& cfg = p.config;
    int f = cfg.stream_feature_len();
    t.concat.resize(size_t(2 * f));
    std::copy(t.a.flat.begin(), t.a.flat.end(), t.concat.begin());
    std::copy(t.b.flat.begin(), t.b.flat.end(), t.concat.begin() + f);

    auto relu = [](std::vector<double>& v) {
        for (double& x : v)
            if (x < 0.0) x = 0.0;
    };

    t.fc1_act.resize(size_t(cfg.fc_sizes[0]));
    fc_apply(p.fc_w[0].data(), p.fc_b[0].data(), t.concat.data(),
             cfg.fc_sizes[0], 2 * f, t.fc1_act.data());
    relu(t.fc1_act);

    double inv = cfg.dropout_keep > 0 ? 1.0 / cfg.dropout_keep : 0.0;
    t.fc1_dropped = t.fc1_act;
    if (train && cfg.dropout_keep < 1.0) {
        Rng rng = Rng::child(dropout_seed, 2);
        dropout_mask(t.drop1_mask, t.fc1_dropped.size(), cfg.dropout_keep, rng);
        for (size_t i = 0; i < t.fc1_dropped.size(); ++i)
            t.fc1_dropped[i] = t.drop1_mask[i] ? t.fc1_dropped[i] * inv : 0.0;
    } else {
        t.drop1_mask.clear();
    }

    t.fc2_act.resize(size_t(cfg.fc_sizes[1]));
    fc_apply(p.fc_w[1].data(), p.fc_b[1].data(), t.fc1_dropped.data(),
             cfg.fc_sizes[1], cfg.fc_sizes[0], t.fc2_act.data());
    relu(t.fc2_act);

    t.fc2_dropped = t.fc2_act;
    if (train && cfg.dropout_keep < 1.0) {
        Rng rng = Rng::child(dropout_seed, 3);
        dropout_mask(t.drop2_mask, t.fc2_dropped.size(), cfg.dropout_keep, rng);
        for (size_t i = 0; i < t.fc2_dropped.size(); ++i)
            t.fc2_dropped[i] = t.drop2_mask[i] ? t.fc2_dropped[i] * inv : 0.0;
    } else {
        t.drop2_mask.clear();
    }

    double logits[2];
    fc_apply(p.fc_w[2].data(), p.fc_b[2].data(), t.fc2_dropped.data(),
             2, cfg.fc_sizes[1], logits);
    t.logits = {logits[0], logits[1]};
    softmax2(t.logits, t.probs);
    t.train_mode = train;
}

// Backprop from a gradient at the conv4 post-ReLU map down to nothing (conv1
// input), accumulating parameter gradients. Used by backward_pair per stream.
void stream_backward(const Params& p, const StreamTrace& t, std::vector<double>& d_conv4,
                     Gradients& g) {
    const ModelConfig& cfg = p.config;
    int s = cfg.input_size, hs = cfg.half_size();
    const auto& ch = cfg.conv_channels;

    std::vector<double> cols, dcols;

    // d_out is the gradient at conv layer `layer`'s post-ReLU output; returns
    // gradient at that layer's input.
    auto conv_back = [&](const Array& in, const Array& out, int layer, int h, int w,
                         std::vector<double>& d_out, std::vector<double>& d_in) {
        int cin = in.shape[0];
        int cout = ch[size_t(layer)];
        int n = h * w;
        // ReLU mask
        for (size_t i = 0; i < d_out.size(); ++i)
            if (out.v[i] <= 0.0) d_out[i] = 0.0;
        cols.resize(size_t(cin) * 9 * size_t(n));
        im2col3(in.data(), cin, h, w, cols.data());
        double* dw = g.conv_w[size_t(layer)].data();
        double* db = g.conv_b[size_t(layer)].data();
        const double* w_ = p.conv_w[size_t(layer)].data();
        int k = cin * 9;
        for (int co = 0; co < cout; ++co) {
            const double* drow = d_out.data() + size_t(co) * size_t(n);
            double bsum = 0.0;
            for (int i = 0; i < n; ++i) bsum += drow[i];
            db[co] += bsum;
            double* dwrow = dw + size_t(co) * size_t(k);
            for (int j = 0; j < k; ++j) {
                const double* crow = cols.data() + size_t(j) * size_t(n);
                double acc = 0.0;
                for (int i = 0; i < n; ++i) acc += drow[i] * crow[i];
                dwrow[j] += acc;
            }
        }
        dcols.assign(size_t(k) * size_t(n), 0.0);
        for (int co = 0; co < cout; ++co) {
            const double* drow = d_out.data() + size_t(co) * size_t(n);
            const double* wrow = w_ + size_t(co) * size_t(k);
            for (int j = 0; j < k; ++j) {
                double wj = wrow[j];
                if (wj == 0.0) continue;
                double* crow = dcols.data() + size_t(j) * size_t(n);
                for (int i = 0; i < n; ++i) crow[i] += wj * drow[i];
            }
        }
        d_in.resize(size_t(cin) * size_t(n));
        col2im3(dcols.data(), cin, h, w, d_in.data());
    };

    // pool2 backward happened upstream: d_conv4 arrives at conv4's map.
    std::vector<double> d3, d_pool1, d2, d1, d0;
    conv_back(t.conv[2], t.conv[3], 3, hs, hs, d_conv4, d3);
    conv_back(t.pool1, t.conv[2], 2, hs, hs, d3, d_pool1);

    // dropout after pool1
    if (!t.drop_mask.empty()) {
        double inv = 1.0 / cfg.dropout_keep;
        for (size_t i = 0; i < d_pool1.size(); ++i)
            d_pool1[i] = t.drop_mask[i] ? d_pool1[i] * inv : 0.0;
    }

    // unpool1
    d2.assign(size_t(ch[1]) * size_t(s) * size_t(s), 0.0);
    for (size_t o = 0; o < t.argmax1.size(); ++o) d2[size_t(t.argmax1[o])] += d_pool1[o];

    conv_back(t.conv[0], t.conv[1], 1, s, s, d2, d1);
    conv_back(t.input, t.conv[0], 0, s, s, d1, d0);
}

} // namespace

StreamFeatures stream_forward(const Params& params, const std::vector<double>& image,
                              bool train_mode, uint64_t dropout_seed, int slot) {
    params.config.validate();
    check_image(params.config, image, "stream");
    StreamTrace t;
    stream_run(params, image, train_mode, dropout_seed, slot, t);
    StreamFeatures f;
    f.per_layer_maps = {t.conv[0], t.conv[1], t.pool1, t.conv[2], t.conv[3], t.pool2};
    f.last_conv = t.pool2; // the stream's final map, (C4, S/4, S/4)
    f.flat = t.flat;
    return f;
}

void forward_pair(const Params& params, const std::vector<double>& image_a,
                  const std::vector<double>& image_b, bool train_mode,
                  uint64_t dropout_seed, PairTrace& trace) {
    check_image(params.config, image_a, "first");
    check_image(params.config, image_b, "second");
    stream_run(params, image_a, train_mode, dropout_seed, 0, trace.a);
    stream_run(params, image_b, train_mode, dropout_seed, 1, trace.b);
    head_run(params, train_mode, dropout_seed, trace);
}

std::array<double, 2> forward(const Params& params, const std::vector<double>& image_a,
                              const std::vector<double>& image_b, bool train_mode,
                              uint64_t dropout_seed) {
    PairTrace t;
    forward_pair(params, image_a, image_b, train_mode, dropout_seed, t);
    return t.probs;
}

double loss(const std::array<double, 2>& probs, int label) {
    if (label != 0 && label != 1) fail("netmodel.BadLabel", "label must be 0 or 1");
    return -std::log(std::max(probs[size_t(label)], kProbFloor));
}

void backward_pair(const Params& params, const PairTrace& t, int label,
                   Gradients& g) {
    const ModelConfig& cfg = params.config;
    if (label != 0 && label != 1) fail("netmodel.BadLabel", "label must be 0 or 1");

    std::array<double, 2> dlogits{};
    if (t.probs[size_t(label)] < kProbFloor) {
        // Loss is flat at the floor; gradient is exactly zero.
        return;
    }
    dlogits[0] = t.probs[0] - (label == 0 ? 1.0 : 0.0);
    dlogits[1] = t.probs[1] - (label == 1 ? 1.0 : 0.0);

    int f = cfg.stream_feature_len();
    double inv = 1.0 / cfg.dropout_keep;

    // fc3
    std::vector<double> d_fc2(size_t(cfg.fc_sizes[1]), 0.0);
    for (int o = 0; o < 2; ++o) {
        double dz = dlogits[size_t(o)];
        g.fc_b[2].v[size_t(o)] += dz;
        double* dwrow = g.fc_w[2].data() + size_t(o) * size_t(cfg.fc_sizes[1]);
        const double* wrow = params.fc_w[2].data() + size_t(o) * size_t(cfg.fc_sizes[1]);
        for (int i = 0; i < cfg.fc_sizes[1]; ++i) {
            dwrow[i] += dz * t.fc2_dropped[size_t(i)];
            d_fc2[size_t(i)] += wrow[i] * dz;
        }
    }
    if (!t.drop2_mask.empty())
        for (size_t i = 0; i < d_fc2.size(); ++i)
            d_fc2[i] = t.drop2_mask[i] ? d_fc2[i] * inv : 0.0;
    for (size_t i = 0; i < d_fc2.size(); ++i)
        if (t.fc2_act[i] <= 0.0) d_fc2[i] = 0.0;

    // fc2
    std::vector<double> d_fc1(size_t(cfg.fc_sizes[0]), 0.0);
    for (int o = 0; o < cfg.fc_sizes[1]; ++o) {
        double dz = d_fc2[size_t(o)];
        if (dz == 0.0) continue;
        g.fc_b[1].v[size_t(o)] += dz;
        double* dwrow = g.fc_w[1].data() + size_t(o) * size_t(cfg.fc_sizes[0]);
        const double* wrow = params.fc_w[1].data() + size_t(o) * size_t(cfg.fc_sizes[0]);
        for (int i = 0; i < cfg.fc_sizes[0]; ++i) {
            dwrow[i] += dz * t.fc1_dropped[size_t(i)];
            d_fc1[size_t(i)] += wrow[i] * dz;
        }
    }
    if (!t.drop1_mask.empty())
        for (size_t i = 0; i < d_fc1.size(); ++i)
            d_fc1[i] = t.drop1_mask[i] ? d_fc1[i] * inv : 0.0;
    for (size_t i = 0; i < d_fc1.size(); ++i)
        if (t.fc1_act[i] <= 0.0) d_fc1[i] = 0.0;

    // fc1
    std::vector<double> d_concat(size_t(2 * f), 0.0);
    for (int o = 0; o < cfg.fc_sizes[0]; ++o) {
        double dz = d_fc1[size_t(o)];
        if (dz == 0.0) continue;
        g.fc_b[0].v[size_t(o)] += dz;
        double* dwrow = g.fc_w[0].data() + size_t(o) * size_t(2 * f);
        const double* wrow = params.fc_w[0].data() + size_t(o) * size_t(2 * f);
        for (int i = 0; i < 2 * f; ++i) {
            dwrow[i] += dz * t.concat[size_t(i)];
            d_concat[size_t(i)] += wrow[i] * dz;
        }
    }

    // unpool2 per stream, then shared conv backprop (gradients accumulate).
    const auto& ch = cfg.conv_channels;
    int hs = cfg.half_size();
    for (int slot = 0; slot < 2; ++slot) {
        const StreamTrace& st = slot == 0 ? t.a : t.b;
        std::vector<double> d_conv4(size_t(ch[3]) * size_t(hs) * size_t(hs), 0.0);
        const double* d_flat = d_concat.data() + size_t(slot) * size_t(f);
        for (size_t o = 0; o < st.argmax2.size(); ++o)
            d_conv4[size_t(st.argmax2[o])] += d_flat[o];
        stream_backward(params, st, d_conv4, g);
    }
}

Gradients backward(const Params& params, const std::vector<double>& image_a,
                   const std::vector<double>& image_b, int label,
                   uint64_t dropout_seed, bool train_mode) {
    PairTrace t;
    forward_pair(params, image_a, image_b, train_mode, dropout_seed, t);
    Gradients g = Params::zeros(params.config);
    backward_pair(params, t, label, g);
    return g;
}

void logit_grad_last_conv(const Params& params, const PairTrace& t, int target,
                          std::vector<double>& grad_a, std::vector<double>& grad_b) {
    const ModelConfig& cfg = params.config;
    if (target != 0 && target != 1) fail("netmodel.BadLabel", "target must be 0 or 1");
    if (t.train_mode)
        fail("netmodel.EvalModeRequired", "logit gradients are defined in eval mode");

    // d logit[target] / d fc2_dropped
    std::vector<double> d_fc2(size_t(cfg.fc_sizes[1]));
    const double* w3row = params.fc_w[2].data() + size_t(target) * size_t(cfg.fc_sizes[1]);
    for (int i = 0; i < cfg.fc_sizes[1]; ++i)
        d_fc2[size_t(i)] = w3row[i] * (t.fc2_act[size_t(i)] > 0.0 ? 1.0 : 0.0);

    std::vector<double> d_fc1(size_t(cfg.fc_sizes[0]), 0.0);
    for (int o = 0; o < cfg.fc_sizes[1]; ++o) {
        double dz = d_fc2[size_t(o)];
        if (dz == 0.0) continue;
        const double* wrow = params.fc_w[1].data() + size_t(o) * size_t(cfg.fc_sizes[0]);
        for (int i = 0; i < cfg.fc_sizes[0]; ++i) d_fc1[size_t(i)] += wrow[i] * dz;
    }
    for (size_t i = 0; i < d_fc1.size(); ++i)
        if (t.fc1_act[i] <= 0.0) d_fc1[i] = 0.0;

    int f = cfg.stream_feature_len();
    std::vector<double> d_concat(size_t(2 * f), 0.0);
    for (int o = 0; o < cfg.fc_sizes[0]; ++o) {
        double dz = d_fc1[size_t(o)];
        if (dz == 0.0) continue;
        const double* wrow = params.fc_w[0].data() + size_t(o) * size_t(2 * f);
        for (int i = 0; i < 2 * f; ++i) d_concat[size_t(i)] += wrow[i] * dz;
    }

    // The stream's last map is pool2; its flattened form is the concat input,
    // so the gradient is just the matching slice.
    grad_a.assign(d_concat.begin(), d_concat.begin() + f);
    grad_b.assign(d_concat.begin() + f, d_concat.end());
}

std::array<double, 2> head_logits_from_maps(const Params& params,
                                            const std::vector<double>& map_a,
                                            const std::vector<double>& map_b) {
    const ModelConfig& cfg = params.config;
    int f = cfg.stream_feature_len();
    if (int64_t(map_a.size()) != f || int64_t(map_b.size()) != f)
        fail("netmodel.ShapeMismatch", "last-conv map size mismatch");

    std::vector<double> concat(size_t(2 * f));
    std::copy(map_a.begin(), map_a.end(), concat.begin());
    std::copy(map_b.begin(), map_b.end(), concat.begin() + f);

    std::vector<double> h1(size_t(cfg.fc_sizes[0]));
    fc_apply(params.fc_w[0].data(), params.fc_b[0].data(), concat.data(),
             cfg.fc_sizes[0], 2 * f, h1.data());
    for (double& x : h1)
        if (x < 0.0) x = 0.0;
    std::vector<double> h2(size_t(cfg.fc_sizes[1]));
    fc_apply(params.fc_w[1].data(), params.fc_b[1].data(), h1.data(),
             cfg.fc_sizes[1], cfg.fc_sizes[0], h2.data());
    for (double& x : h2)
        if (x < 0.0) x = 0.0;
    double logits[2];
    fc_apply(params.fc_w[2].data(), params.fc_b[2].data(), h2.data(), 2,
             cfg.fc_sizes[1], logits);
    return {logits[0], logits[1]};
}

std::vector<double> glyph_to_input(const GlyphImage& glyph) {
    std::vector<double> v(glyph.pixels.size());
    for (size_t i = 0; i < glyph.pixels.size(); ++i) v[i] = double(glyph.pixels[i]);
    return v;
}

// --- checkpoint I/O --------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'P', 'C', 'K', 'P', 'T', '0', '1'};

void put_u32le(std::ostream& out, uint32_t v) {
    char b[4] = {char(v), char(v >> 8), char(v >> 16), char(v >> 24)};
    out.write(b, 4);
}

uint32_t get_u32le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

} // namespace

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("netmodel.WriteFailed", "cannot write " + path);
    out.write(kMagic, 8);

    nlohmann::ordered_json header;
    header["config"] = ckpt.params.config.to_json();
    header["trained_epochs"] = ckpt.trained_epochs;
    header["rng_seed"] = ckpt.rng_seed;
    header["metadata"] = ckpt.metadata.is_null() ? nlohmann::ordered_json::object()
                                                 : ckpt.metadata;
    std::string hs = header.dump();
    put_u32le(out, uint32_t(hs.size()));
    out.write(hs.data(), std::streamsize(hs.size()));

    uint32_t n_arrays = 0;
    ckpt.params.for_each([&](const std::string&, const Array&) { ++n_arrays; });
    put_u32le(out, n_arrays);

    ckpt.params.for_each([&](const std::string& name, const Array& a) {
        uint16_t nl = uint16_t(name.size());
        char b[2] = {char(nl), char(nl >> 8)};
        out.write(b, 2);
        out.write(name.data(), nl);
        char dtype = 1; // float32
        out.write(&dtype, 1);
        char ndim = char(a.shape.size());
        out.write(&ndim, 1);
        for (int d : a.shape) put_u32le(out, uint32_t(d));
        std::vector<float> f32(a.v.size());
        for (size_t i = 0; i < a.v.size(); ++i) f32[i] = float(a.v[i]);
        out.write(reinterpret_cast<const char*>(f32.data()),
                  std::streamsize(f32.size() * sizeof(float)));
    });
    if (!out) fail("netmodel.WriteFailed", "short write to " + path);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("netmodel.UnreadableFile", "cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        fail("netmodel.BadCheckpoint", path + " is not a checkpoint file");

    uint32_t hlen = get_u32le(in);
    std::string hs(hlen, '\0');
    in.read(hs.data(), hlen);
    if (!in) fail("netmodel.BadCheckpoint", "truncated header in " + path);
    nlohmann::ordered_json header = nlohmann::ordered_json::parse(hs, nullptr, false);
    if (header.is_discarded()) fail("netmodel.BadCheckpoint", "bad header JSON in " + path);

    ModelCheckpoint ckpt;
    ckpt.params = Params::zeros(ModelConfig::from_json(header.at("config")));
    ckpt.trained_epochs = header.value("trained_epochs", 0);
    ckpt.rng_seed = header.value("rng_seed", uint64_t(0));
    ckpt.metadata = header.value("metadata", nlohmann::ordered_json::object());

    uint32_t n_arrays = get_u32le(in);
    for (uint32_t i = 0; i < n_arrays; ++i) {
        unsigned char nb[2];
        in.read(reinterpret_cast<char*>(nb), 2);
        uint16_t nl = uint16_t(nb[0]) | uint16_t(nb[1]) << 8;
        std::string name(nl, '\0');
        in.read(name.data(), nl);
        char dtype = 0, ndim = 0;
        in.read(&dtype, 1);
        in.read(&ndim, 1);
        if (dtype != 1) fail("netmodel.BadCheckpoint", "unknown dtype in " + path);
        std::vector<int> shape(size_t(ndim), 0);
        size_t count = 1;
        for (int d = 0; d < ndim; ++d) {
            shape[size_t(d)] = int(get_u32le(in));
            count *= size_t(shape[size_t(d)]);
        }
        std::vector<float> f32(count);
        in.read(reinterpret_cast<char*>(f32.data()),
                std::streamsize(count * sizeof(float)));
        if (!in) fail("netmodel.BadCheckpoint", "truncated array data in " + path);

        bool matched = false;
        ckpt.params.for_each([&](const std::string& n, Array& a) {
            if (n != name) return;
            if (a.shape != shape)
                fail("netmodel.BadCheckpoint", "shape mismatch for " + name + " in " + path);
            for (size_t j = 0; j < count; ++j) a.v[j] = double(f32[j]);
            matched = true;
        });
        if (!matched) fail("netmodel.BadCheckpoint", "unexpected array " + name + " in " + path);
    }
    return ckpt;
}

} // namespace fontpair
