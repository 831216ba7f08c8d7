#pragma once

#include <array>
#include <string>
#include <vector>

#include "fontpair/evaluator.hpp"
#include "fontpair/netmodel.hpp"
#include "fontpair/raster.hpp"

namespace fontpair {

// --- PCA -------------------------------------------------------------------

// Principal-component fit of mean-centered samples (covariance with 1/(m-1)).
// Uses the Gram matrix route when the dimension exceeds the sample count.
struct PcaFit {
    std::vector<double> mean;
    std::vector<std::vector<double>> components; // top-k, orthonormal
    std::vector<double> eigenvalues;             // matching components, nonincreasing
    double total_variance = 0.0;                 // trace of the covariance
};

PcaFit pca_fit(const std::vector<std::vector<double>>& samples, int k);
std::array<double, 2> pca_point(const PcaFit& fit, const std::vector<double>& sample);

struct PcaProjection {
    char char_a = 0, char_b = 0;
    std::vector<std::string> fonts;
    std::array<std::vector<double>, 2> components;
    std::array<double, 2> explained_variance{};
    std::vector<std::array<double, 2>> points_a, points_b;
    double overlap_score = 0.0; // 1 = indistinguishable clouds, 0 = separated
};

// Leave-one-out nearest-centroid overlap in the 2-D space:
// 2 * (1 - balanced accuracy), clamped to [0, 1].
double cloud_overlap(const std::vector<std::array<double, 2>>& points_a,
                     const std::vector<std::array<double, 2>>& points_b);

// Fits PCA on the combined stream features of (font, char_a) and
// (font, char_b) over the given fonts and projects both sets.
// Errors: explain.TooFewFonts, explain.IdenticalCharacters.
PcaProjection pca_project(const ModelCheckpoint& checkpoint, const DatasetIndex& index,
                          const std::vector<std::string>& fonts, char char_a,
                          char char_b, int workers = 1);

// --- Grad-CAM ----------------------------------------------------------------

struct ContributionMap {
    Array raw;       // (S/4) x (S/4), nonnegative
    Array upsampled; // S x S, max-normalized to 1 when nonzero
    int target_class = 0;
    char slot = 'a';
};

struct GradCamResult {
    ContributionMap map_a, map_b;
    std::array<double, 2> probs{};
    int target = 0;
    std::vector<double> alpha_a, alpha_b; // channel weights
};

// target < 0 selects the predicted class.
GradCamResult grad_cam(const ModelCheckpoint& checkpoint,
                       const std::vector<double>& image_a,
                       const std::vector<double>& image_b, int target = -1);

// --- rendering ---------------------------------------------------------------

// Color ramp at 50% opacity over the glyph; writes an RGB PNG.
void render_heatmap(const ContributionMap& map, const GlyphImage& base,
                    const std::string& path, bool nearest = false);

// Scatter PNG plus a CSV of coordinates (char,font_id,pc1,pc2).
void render_scatter(const PcaProjection& projection, const std::string& png_path,
                    const std::string& csv_path);

// Reads back a scatter CSV (round-trip support).
void read_scatter_csv(const std::string& csv_path,
                      std::vector<std::array<double, 2>>& points_a,
                      std::vector<std::array<double, 2>>& points_b);

} // namespace fontpair
