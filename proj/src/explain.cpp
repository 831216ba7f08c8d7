#include "fontpair/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fontpair/error.hpp"
#include "fontpair/parallel.hpp"
#include "fontpair/png_io.hpp"
#include "fontpair/trainer.hpp"

namespace fontpair {

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Rows of `vecs` are
// eigenvectors. Deterministic; fine for the few-hundred-dim matrices here.
void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& values,
                  std::vector<double>& vecs) {
    vecs.assign(size_t(n) * size_t(n), 0.0);
    for (int i = 0; i < n; ++i) vecs[size_t(i) * size_t(n) + size_t(i)] = 1.0;

    auto at = [&](int r, int c) -> double& { return a[size_t(r) * size_t(n) + size_t(c)]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < n; ++i) {
                    double aip = at(i, p), aiq = at(i, q);
                    at(i, p) = c * aip - s * aiq;
                    at(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    double api = at(p, i), aqi = at(q, i);
                    at(p, i) = c * api - s * aqi;
                    at(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    double vpi = vecs[size_t(p) * size_t(n) + size_t(i)];
                    double vqi = vecs[size_t(q) * size_t(n) + size_t(i)];
                    vecs[size_t(p) * size_t(n) + size_t(i)] = c * vpi - s * vqi;
                    vecs[size_t(q) * size_t(n) + size_t(i)] = s * vpi + c * vqi;
                }
            }
        }
    }
    values.resize(size_t(n));
    for (int i = 0; i < n; ++i) values[size_t(i)] = at(i, i);
}

// Sign convention: largest-magnitude coefficient positive.
void fix_sign(std::vector<double>& v) {
    double best = 0.0;
    for (double x : v)
        if (std::fabs(x) > std::fabs(best)) best = x;
    if (best < 0.0)
        for (double& x : v) x = -x;
}

} // namespace

PcaFit pca_fit(const std::vector<std::vector<double>>& samples, int k) {
    int64_t m = int64_t(samples.size());
    if (m < 2) fail("explain.TooFewSamples", "PCA needs at least 2 samples");
    int64_t dim = int64_t(samples.front().size());
    for (const auto& s : samples)
        if (int64_t(s.size()) != dim)
            fail("explain.ShapeMismatch", "inconsistent feature dimensions");
    if (k < 1 || int64_t(k) > std::min(m - 1, dim))
        fail("explain.InvalidConfig", "component count out of range");

    PcaFit fit;
    fit.mean.assign(size_t(dim), 0.0);
    for (const auto& s : samples)
        for (int64_t j = 0; j < dim; ++j) fit.mean[size_t(j)] += s[size_t(j)];
    for (double& x : fit.mean) x /= double(m);

    std::vector<std::vector<double>> centered(samples.size());
    double total = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) {
        centered[i].resize(size_t(dim));
        for (int64_t j = 0; j < dim; ++j) {
            double v = samples[i][size_t(j)] - fit.mean[size_t(j)];
            centered[i][size_t(j)] = v;
            total += v * v;
        }
    }
    fit.total_variance = total / double(m - 1);

    std::vector<double> values, vecs;
    if (dim <= m) {
        // Covariance route: C = X^T X / (m-1), dim x dim.
        std::vector<double> cov(size_t(dim) * size_t(dim), 0.0);
        for (const auto& x : centered)
            for (int64_t r = 0; r < dim; ++r) {
                double xr = x[size_t(r)];
                if (xr == 0.0) continue;
                double* row = cov.data() + size_t(r) * size_t(dim);
                for (int64_t c = 0; c < dim; ++c) row[size_t(c)] += xr * x[size_t(c)];
            }
        for (double& x : cov) x /= double(m - 1);
        jacobi_eigen(cov, int(dim), values, vecs);

        std::vector<int> order(size_t(dim), 0);
        for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
        std::sort(order.begin(), order.end(),
                  [&](int x, int y) { return values[size_t(x)] > values[size_t(y)]; });
        for (int c = 0; c < k; ++c) {
            int idx = order[size_t(c)];
            std::vector<double> comp(vecs.begin() + int64_t(idx) * dim,
                                     vecs.begin() + int64_t(idx + 1) * dim);
            fix_sign(comp);
            fit.components.push_back(std::move(comp));
            fit.eigenvalues.push_back(std::max(0.0, values[size_t(idx)]));
        }
    } else {
        // Gram route: G = X X^T / (m-1), m x m; v_i = X^T u_i / sqrt((m-1) g_i).
        std::vector<double> gram(size_t(m) * size_t(m), 0.0);
        for (int64_t r = 0; r < m; ++r)
            for (int64_t c = r; c < m; ++c) {
                double dot = 0.0;
                const double* xr = centered[size_t(r)].data();
                const double* xc = centered[size_t(c)].data();
                for (int64_t j = 0; j < dim; ++j) dot += xr[j] * xc[j];
                dot /= double(m - 1);
                gram[size_t(r) * size_t(m) + size_t(c)] = dot;
                gram[size_t(c) * size_t(m) + size_t(r)] = dot;
            }
        jacobi_eigen(gram, int(m), values, vecs);

        std::vector<int> order(size_t(m), 0);
        for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
        std::sort(order.begin(), order.end(),
                  [&](int x, int y) { return values[size_t(x)] > values[size_t(y)]; });
        for (int c = 0; c < k; ++c) {
            int idx = order[size_t(c)];
            double lambda = values[size_t(idx)];
            if (lambda <= 1e-18)
                fail("explain.DegenerateData", "not enough variance for requested components");
            std::vector<double> comp(size_t(dim), 0.0);
            for (int64_t i = 0; i < m; ++i) {
                double u = vecs[size_t(idx) * size_t(m) + size_t(i)];
                if (u == 0.0) continue;
                const double* x = centered[size_t(i)].data();
                for (int64_t j = 0; j < dim; ++j) comp[size_t(j)] += u * x[j];
            }
            double norm = std::sqrt(double(m - 1) * lambda);
            for (double& x : comp) x /= norm;
            fix_sign(comp);
            fit.components.push_back(std::move(comp));
            fit.eigenvalues.push_back(lambda);
        }
    }
    return fit;
}

std::array<double, 2> pca_point(const PcaFit& fit, const std::vector<double>& sample) {
    if (fit.components.size() < 2)
        fail("explain.InvalidConfig", "projection needs 2 components");
    std::array<double, 2> out{0.0, 0.0};
    for (int c = 0; c < 2; ++c) {
        const std::vector<double>& comp = fit.components[size_t(c)];
        double acc = 0.0;
        for (size_t j = 0; j < comp.size(); ++j)
            acc += comp[j] * (sample[j] - fit.mean[j]);
        out[size_t(c)] = acc;
    }
    return out;
}

double cloud_overlap(const std::vector<std::array<double, 2>>& points_a,
                     const std::vector<std::array<double, 2>>& points_b) {
    if (points_a.size() < 2 || points_b.size() < 2)
        fail("explain.TooFewFonts", "overlap needs at least 2 points per class");

    auto centroid = [](const std::vector<std::array<double, 2>>& pts, int64_t skip) {
        std::array<double, 2> c{0.0, 0.0};
        int64_t n = 0;
        for (int64_t i = 0; i < int64_t(pts.size()); ++i) {
            if (i == skip) continue;
            c[0] += pts[size_t(i)][0];
            c[1] += pts[size_t(i)][1];
            ++n;
        }
        c[0] /= double(n);
        c[1] /= double(n);
        return c;
    };
    auto dist2 = [](const std::array<double, 2>& p, const std::array<double, 2>& q) {
        double dx = p[0] - q[0], dy = p[1] - q[1];
        return dx * dx + dy * dy;
    };

    std::array<double, 2> full_a = centroid(points_a, -1);
    std::array<double, 2> full_b = centroid(points_b, -1);

    int64_t correct_a = 0;
    for (int64_t i = 0; i < int64_t(points_a.size()); ++i) {
        std::array<double, 2> own = centroid(points_a, i);
        if (dist2(points_a[size_t(i)], own) <= dist2(points_a[size_t(i)], full_b))
            ++correct_a;
    }
    int64_t correct_b = 0;
    for (int64_t i = 0; i < int64_t(points_b.size()); ++i) {
        std::array<double, 2> own = centroid(points_b, i);
        if (dist2(points_b[size_t(i)], own) <= dist2(points_b[size_t(i)], full_a))
            ++correct_b;
    }
    double balanced = 0.5 * (double(correct_a) / double(points_a.size()) +
                             double(correct_b) / double(points_b.size()));
    return std::clamp(2.0 * (1.0 - balanced), 0.0, 1.0);
}

PcaProjection pca_project(const ModelCheckpoint& checkpoint, const DatasetIndex& index,
                          const std::vector<std::string>& fonts, char char_a,
                          char char_b, int workers) {
    if (char_a == char_b)
        fail("explain.IdenticalCharacters", "PCA comparison needs two distinct characters");
    if (fonts.size() < 3)
        fail("explain.TooFewFonts", "PCA comparison needs at least 3 fonts");

    int64_t n = int64_t(fonts.size());
    std::vector<std::vector<double>> feats(size_t(2 * n));
    parallel_chunks(n, workers, [&](int, int64_t begin, int64_t end) {
        for (int64_t i = begin; i < end; ++i) {
            const DatasetEntry& e = index.entry(fonts[size_t(i)]);
            for (int which = 0; which < 2; ++which) {
                char ch = which == 0 ? char_a : char_b;
                GlyphImage g = read_glyph_png(
                    (std::filesystem::path(index.dir) / e.glyph_paths.at(ch)).string(), ch,
                    e.font_id);
                StreamFeatures f = stream_forward(checkpoint.params, glyph_to_input(g));
                feats[size_t(which * n + i)] = std::move(f.flat);
            }
        }
    });

    PcaFit fit = pca_fit(feats, 2);
    PcaProjection proj;
    proj.char_a = char_a;
    proj.char_b = char_b;
    proj.fonts = fonts;
    proj.components[0] = fit.components[0];
    proj.components[1] = fit.components[1];
    proj.explained_variance = {fit.eigenvalues[0], fit.eigenvalues[1]};
    proj.points_a.resize(size_t(n));
    proj.points_b.resize(size_t(n));
    for (int64_t i = 0; i < n; ++i) {
        proj.points_a[size_t(i)] = pca_point(fit, feats[size_t(i)]);
        proj.points_b[size_t(i)] = pca_point(fit, feats[size_t(n + i)]);
    }
    proj.overlap_score = cloud_overlap(proj.points_a, proj.points_b);
    return proj;
}

// --- Grad-CAM ----------------------------------------------------------------

namespace {

Array upsample_bilinear(const Array& raw, int out_size, bool nearest) {
    int in_size = raw.shape[0];
    Array out({out_size, out_size});
    double scale = double(in_size) / double(out_size);
    for (int y = 0; y < out_size; ++y) {
        double sy = (double(y) + 0.5) * scale - 0.5;
        for (int x = 0; x < out_size; ++x) {
            double sx = (double(x) + 0.5) * scale - 0.5;
            double v;
            if (nearest) {
                int iy = std::clamp(int(std::lround(sy)), 0, in_size - 1);
                int ix = std::clamp(int(std::lround(sx)), 0, in_size - 1);
                v = raw.v[size_t(iy) * size_t(in_size) + size_t(ix)];
            } else {
                double fy = std::clamp(sy, 0.0, double(in_size - 1));
                double fx = std::clamp(sx, 0.0, double(in_size - 1));
                int y0 = int(fy), x0 = int(fx);
                int y1 = std::min(y0 + 1, in_size - 1);
                int x1 = std::min(x0 + 1, in_size - 1);
                double wy = fy - y0, wx = fx - x0;
                auto at = [&](int yy, int xx) {
                    return raw.v[size_t(yy) * size_t(in_size) + size_t(xx)];
                };
                v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                    wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
            }
            out.v[size_t(y) * size_t(out_size) + size_t(x)] = v;
        }
    }
    return out;
}

ContributionMap build_map(const ModelConfig& cfg, const Array& activations,
                          const std::vector<double>& grads, int target, char slot,
                          std::vector<double>& alpha_out) {
    int channels = cfg.conv_channels[3];
    int q = cfg.pooled_size();
    int plane = q * q;

    alpha_out.assign(size_t(channels), 0.0);
    for (int c = 0; c < channels; ++c) {
        double sum = 0.0;
        for (int i = 0; i < plane; ++i) sum += grads[size_t(c) * size_t(plane) + size_t(i)];
        alpha_out[size_t(c)] = sum / double(plane);
    }

    ContributionMap m;
    m.target_class = target;
    m.slot = slot;
    m.raw = Array({q, q});
    for (int i = 0; i < plane; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c)
            acc += alpha_out[size_t(c)] * activations.v[size_t(c) * size_t(plane) + size_t(i)];
        m.raw.v[size_t(i)] = acc > 0.0 ? acc : 0.0; // ReLU
    }

    m.upsampled = upsample_bilinear(m.raw, cfg.input_size, false);
    double mx = 0.0;
    for (double v : m.upsampled.v) mx = std::max(mx, v);
    if (mx > 0.0)
        for (double& v : m.upsampled.v) v /= mx;
    return m;
}

} // namespace

GradCamResult grad_cam(const ModelCheckpoint& checkpoint,
                       const std::vector<double>& image_a,
                       const std::vector<double>& image_b, int target) {
    PairTrace trace;
    forward_pair(checkpoint.params, image_a, image_b, false, 0, trace);
    GradCamResult r;
    r.probs = trace.probs;
    r.target = target >= 0 ? target : (trace.probs[1] > trace.probs[0] ? 1 : 0);

    std::vector<double> ga, gb;
    logit_grad_last_conv(checkpoint.params, trace, r.target, ga, gb);
    r.map_a = build_map(checkpoint.params.config, trace.a.pool2, ga, r.target, 'a', r.alpha_a);
    r.map_b = build_map(checkpoint.params.config, trace.b.pool2, gb, r.target, 'b', r.alpha_b);
    return r;
}

// --- rendering ---------------------------------------------------------------

namespace {

void heat_color(double v, uint8_t& r, uint8_t& g, uint8_t& b) {
    auto clamp01 = [](double x) { return std::clamp(x, 0.0, 1.0); };
    double rr = clamp01(1.5 - std::fabs(4.0 * v - 3.0));
    double gg = clamp01(1.5 - std::fabs(4.0 * v - 2.0));
    double bb = clamp01(1.5 - std::fabs(4.0 * v - 1.0));
    r = uint8_t(std::lround(255.0 * rr));
    g = uint8_t(std::lround(255.0 * gg));
    b = uint8_t(std::lround(255.0 * bb));
}

void put_disc(PngImage& img, int cx, int cy, int radius, uint8_t r, uint8_t g, uint8_t b) {
    for (int y = cy - radius; y <= cy + radius; ++y) {
        for (int x = cx - radius; x <= cx + radius; ++x) {
            if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
            int dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy > radius * radius) continue;
            size_t o = (size_t(y) * size_t(img.width) + size_t(x)) * 3;
            img.pixels[o] = r;
            img.pixels[o + 1] = g;
            img.pixels[o + 2] = b;
        }
    }
}

} // namespace

void render_heatmap(const ContributionMap& map, const GlyphImage& base,
                    const std::string& path, bool nearest) {
    if (map.upsampled.shape.size() != 2 || map.upsampled.shape[0] != base.size)
        fail("explain.ShapeMismatch", "map and base glyph resolutions differ");
    const Array& m = nearest ? upsample_bilinear(map.raw, base.size, true) : map.upsampled;

    PngImage img;
    img.width = base.size;
    img.height = base.size;
    img.channels = 3;
    img.pixels.resize(size_t(base.size) * size_t(base.size) * 3);
    for (int i = 0; i < base.size * base.size; ++i) {
        uint8_t glyph = base.pixels[size_t(i)] ? 0 : 255; // black glyph on white
        uint8_t hr, hg, hb;
        heat_color(m.v[size_t(i)], hr, hg, hb);
        img.pixels[size_t(i) * 3] = uint8_t((glyph + hr) / 2);
        img.pixels[size_t(i) * 3 + 1] = uint8_t((glyph + hg) / 2);
        img.pixels[size_t(i) * 3 + 2] = uint8_t((glyph + hb) / 2);
    }
    write_png(path, img);
}

void render_scatter(const PcaProjection& proj, const std::string& png_path,
                    const std::string& csv_path) {
    {
        std::ofstream out(csv_path, std::ios::trunc);
        if (!out) fail("explain.WriteFailed", "cannot write " + csv_path);
        out << "char,font_id,pc1,pc2\n";
        char buf[512];
        for (size_t i = 0; i < proj.points_a.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%c,%s,%.17g,%.17g\n", proj.char_a,
                          proj.fonts[i].c_str(), proj.points_a[i][0], proj.points_a[i][1]);
            out << buf;
        }
        for (size_t i = 0; i < proj.points_b.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%c,%s,%.17g,%.17g\n", proj.char_b,
                          proj.fonts[i].c_str(), proj.points_b[i][0], proj.points_b[i][1]);
            out << buf;
        }
    }

    const int side = 640, pad = 40;
    PngImage img;
    img.width = side;
    img.height = side;
    img.channels = 3;
    img.pixels.assign(size_t(side) * size_t(side) * 3, 255);

    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    auto grow = [&](const std::array<double, 2>& p) {
        min_x = std::min(min_x, p[0]);
        max_x = std::max(max_x, p[0]);
        min_y = std::min(min_y, p[1]);
        max_y = std::max(max_y, p[1]);
    };
    for (const auto& p : proj.points_a) grow(p);
    for (const auto& p : proj.points_b) grow(p);
    double span_x = std::max(max_x - min_x, 1e-9);
    double span_y = std::max(max_y - min_y, 1e-9);

    auto px = [&](double x) {
        return pad + int(std::lround((x - min_x) / span_x * (side - 2 * pad)));
    };
    auto py = [&](double y) { // plot y up
        return side - pad - int(std::lround((y - min_y) / span_y * (side - 2 * pad)));
    };

    // Axis lines through zero when visible.
    if (min_x <= 0 && max_x >= 0) {
        int x = px(0);
        for (int y = 0; y < side; ++y) {
            size_t o = (size_t(y) * size_t(side) + size_t(x)) * 3;
            img.pixels[o] = img.pixels[o + 1] = img.pixels[o + 2] = 220;
        }
    }
    if (min_y <= 0 && max_y >= 0) {
        int y = py(0);
        for (int x = 0; x < side; ++x) {
            size_t o = (size_t(y) * size_t(side) + size_t(x)) * 3;
            img.pixels[o] = img.pixels[o + 1] = img.pixels[o + 2] = 220;
        }
    }

    for (const auto& p : proj.points_a)
        put_disc(img, px(p[0]), py(p[1]), 3, 220, 50, 47); // first character in red
    for (const auto& p : proj.points_b)
        put_disc(img, px(p[0]), py(p[1]), 3, 38, 139, 210); // second in blue

    write_png(png_path, img);
}

void read_scatter_csv(const std::string& csv_path,
                      std::vector<std::array<double, 2>>& points_a,
                      std::vector<std::array<double, 2>>& points_b) {
    std::ifstream in(csv_path);
    if (!in) fail("explain.UnreadableFile", "cannot open " + csv_path);
    points_a.clear();
    points_b.clear();
    std::string line;
    std::getline(in, line); // header
    char first_char = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        size_t c1 = line.find(',');
        size_t c2 = line.find(',', c1 + 1);
        size_t c3 = line.find(',', c2 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos || c3 == std::string::npos)
            fail("explain.BadCsv", "malformed row in " + csv_path);
        char ch = line[0];
        double x = std::stod(line.substr(c2 + 1, c3 - c2 - 1));
        double y = std::stod(line.substr(c3 + 1));
        if (first_char == 0) first_char = ch;
        (ch == first_char ? points_a : points_b).push_back({x, y});
    }
}

} // namespace fontpair
