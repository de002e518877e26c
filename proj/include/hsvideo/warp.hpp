#ifndef HSVIDEO_WARP_HPP
#define HSVIDEO_WARP_HPP

#include "hsvideo/flow.hpp"
#include "hsvideo/superpixel.hpp"
#include "hsvideo/types.hpp"

#include <array>
#include <string>
#include <vector>

namespace hsvideo {

using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// Regular lattice over an axis-aligned box. Each cell is split along its
/// top-left to bottom-right diagonal.
struct MeshGrid {
    Vec2 origin = Vec2::Zero();
    double cell = 16.0;
    int rows = 1;  // cells
    int cols = 1;
    Vertices vertices;

    int vertex_rows() const { return rows + 1; }
    int vertex_cols() const { return cols + 1; }
    int vertex_count() const { return vertex_rows() * vertex_cols(); }
    int index(int r, int c) const { return r * vertex_cols() + c; }

    /// (V1, V2, V3) triples: V1 is the corner off the diagonal, V2-V3 the diagonal.
    std::vector<std::array<int, 3>> triangles() const;

    /// Cell containing `p` (clamped to the lattice) as (row, col).
    std::pair<int, int> cell_of(const Vec2& p) const;
    /// Corner indices of a cell in TL, TR, BL, BR order.
    std::array<int, 4> cell_corners(int r, int c) const;
};

/// Lattice covering `box` (pixel centres at integer coordinates), one
/// vertex row/column more than ceil(extent / cell).
MeshGrid build_mesh(const BoundingBox& box, double cell);

/// Coefficients (TL, TR, BL, BR) such that their weighted corner sum
/// reproduces `p`. Throws when `p` lies outside the quad.
std::array<double, 4> inverse_bilinear(const Vec2& p, const std::array<Vec2, 4>& corners);

/// Target displacement of a pixel in the given frame at time t.
FlowField displacement_field(FrameSlot slot, double t, const FlowBundle& flows);
Vec2 target_position(const Vec2& p, FrameSlot slot, double t, const FlowBundle& flows);

struct WarpControl {
    Vec2 position;
    Vec2 target;
    double alpha = 1.0;
    double weight = 1.0;  // validation weight at `position`
};

struct WarpOptions {
    bool weight_by_validation = true;
};

struct WarpSolution {
    Vertices vertices;
    double relative_residual = 0.0;  // of the normal equations
    bool identity = false;           // no controls: lattice returned unchanged
    bool translation_only = false;   // all controls at one point
};

/// Minimises alpha-weighted re-projection error plus the per-triangle
/// similarity term as a sparse linear least-squares problem.
WarpSolution solve_warp(const MeshGrid& mesh, const std::vector<WarpControl>& controls,
                        const WarpOptions& options = {}, const std::string& region_name = "region");

/// Energy of a vertex configuration under the same terms solve_warp uses.
double warp_energy(const MeshGrid& mesh, const std::vector<WarpControl>& controls, const Vertices& warped,
                   const WarpOptions& options = {});

/// Value of the similarity term alone.
double similarity_energy(const MeshGrid& mesh, const Vertices& warped);

struct WarpedLayer {
    Image color;
    WeightMap weight;
    Mask coverage;

    WarpedLayer() = default;
    WarpedLayer(int width, int height)
        : color(width, height), weight(WeightMap::Zero(height, width)), coverage(Mask::Constant(height, width, false))
    {
    }
};

struct RasterStats {
    int degenerate_triangles = 0;
    int pixels_written = 0;
};

/// Texture-maps `image` and `weights` through the warped mesh. Only output
/// pixels whose pre-image rounds to a pixel set in `mask` are written; an
/// already covered pixel is replaced only by a strictly higher weight.
RasterStats rasterize(const Image& image, const WeightMap& weights, const Mask& mask, const MeshGrid& mesh,
                      const Vertices& warped, WarpedLayer& layer);

struct WarpParams {
    double cell = 16.0;
    int stride = 2;
    int min_controls_dense = 50;
    double edge_threshold = 0.1;
    double alpha_edge = 1.0;
    double alpha_flat = 0.5;
    double good_weight = 0.96;  // th_sp
    bool weight_by_validation = true;
    bool merge_source = true;   // false leaves bad source regions on their own controls
    // Reference pixels rejected by the three-way check, but consistent with
    // the other reference, cover pixels no validated reference reaches.
    bool fallback_coverage = true;
    ValidationParams validation;
};

struct WarpReport {
    int degenerate_triangles = 0;
    int regions_warped = 0;
    int regions_dropped = 0;
    int identity_regions = 0;
    long fallback_pixels = 0;
    double max_relative_residual = 0.0;
};

struct WarpTaskResult {
    std::array<WarpedLayer, 3> layers;
    WarpReport report;
};

/// Warps every unit (region, or merged group on the source frame) of the
/// three task frames to the target time. Units are processed in ascending
/// id so overlapping writes resolve reproducibly.
WarpTaskResult warp_task(const std::array<const Image*, 3>& frames, const FlowBundle& flows, double t,
                         const std::array<WeightMap, 3>& weights, const std::array<SuperpixelMap, 3>& maps,
                         const WarpParams& params);

/// Central-difference luminance gradient magnitude.
Plane<double> gradient_magnitude(const Image& image);

}  // namespace hsvideo

#endif  // HSVIDEO_WARP_HPP
