#ifndef HSVIDEO_RENDER_HPP
#define HSVIDEO_RENDER_HPP

#include "hsvideo/types.hpp"
#include "hsvideo/warp.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace hsvideo {

constexpr int kLabelCount = 8;

/// Selection triple (source, previous reference, next reference) of each
/// label number 1..8.
constexpr std::array<std::array<int, 3>, kLabelCount> kLabelBits = {{
    {0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 1, 1}, {1, 0, 1}, {1, 1, 0}, {1, 1, 1},
}};

inline const std::array<int, 3>& label_bits(int label) { return kLabelBits[label - 1]; }
/// Label number of a selection triple.
int label_of(int s, int prev, int next);

/// Bit (label - 1) set when the label is usable at a pixel.
using LabelSet = std::uint8_t;

/// Per-pixel label ids, 1..8.
using LabelMap = IdPlane;

struct RenderParams {
    double k_source = 1.0;
    double k_reference = 1.5;
    double alpha = 3.0;
    double beta = 8.0;
    double gamma = 2.0;
    double epsilon = 0.01;
    double hole_cost = 10.0;
    double sentinel = 1e9;
    int sweeps = 10;
    bool restarts = true;  ///< also expand from all-hole and per-label starts, keep the best
};

/// A label is usable iff it selects only covered samples; label 1 always is.
LabelSet valid_labels(const std::array<bool, 3>& covered);
inline bool is_valid(LabelSet set, int label) { return (set >> (label - 1)) & 1u; }

/// Cost of one label given the three samples (their order matches the triple).
/// Validity is not checked here.
double data_cost(int label, const std::array<Color, 3>& samples, const RenderParams& params);

/// Squared distance between two labels' indicator vectors.
inline int smoothness_cost(int a, int b)
{
    const auto& x = label_bits(a);
    const auto& y = label_bits(b);
    return (x[0] != y[0]) + (x[1] != y[1]) + (x[2] != y[2]);
}

struct PixelCosts {
    int width = 0;
    int height = 0;
    Eigen::Array<double, Eigen::Dynamic, kLabelCount, Eigen::RowMajor> cost;  // row per pixel (raster order)
    Eigen::Array<LabelSet, Eigen::Dynamic, 1> valid;

    double at(int pixel, int label) const { return cost(pixel, label - 1); }
};

PixelCosts compute_costs(const std::array<WarpedLayer, 3>& layers, const RenderParams& params);

/// Per-pixel argmin over valid labels; ties go to the lower label number.
LabelMap init_labels(const PixelCosts& costs);

double labeling_energy(const LabelMap& labels, const PixelCosts& costs, double gamma);

/// Describes the run that produced the returned labelling; truncations and
/// starts are totals over every start.
struct LabelingStats {
    std::vector<double> energies;  // initial energy then one entry per accepted move
    int sweeps = 0;
    int truncations = 0;
    int accepted_moves = 0;
    int starts = 0;
    double initial_energy = 0;  // of `init`
};

/// Alpha-expansion over labels 1..8 on the 4-neighbour grid, started from
/// `init` and, with `restarts`, from further fixed starting labellings.
/// The result never has higher energy than `init`.
LabelMap optimize_labels(const LabelMap& init, const PixelCosts& costs, const RenderParams& params,
                         LabelingStats* stats = nullptr);

/// Label selecting every covered sample (plain averaging).
LabelMap all_covered_labels(const std::array<WarpedLayer, 3>& layers);

struct BlendResult {
    Image image;
    Mask holes;
};

BlendResult blend(const std::array<WarpedLayer, 3>& layers, const LabelMap& labels);

/// Zero-gradient fill: harmonic interpolation of hole pixels from the known
/// pixels around them, per channel. Throws when nothing is known.
Image inpaint_holes(const Image& image, const Mask& holes);

/// Counts of labels 1..8 (index 0 holds label 1).
std::array<long, kLabelCount> label_histogram(const LabelMap& labels);

/// Indexed-colour visualisation of a label map.
Image colorize_labels(const LabelMap& labels);

}  // namespace hsvideo

#endif  // HSVIDEO_RENDER_HPP
