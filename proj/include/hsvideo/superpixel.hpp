#ifndef HSVIDEO_SUPERPIXEL_HPP
#define HSVIDEO_SUPERPIXEL_HPP

#include "hsvideo/flow.hpp"
#include "hsvideo/types.hpp"

#include <string>
#include <vector>

namespace hsvideo {

struct BoundingBox {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive

    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
    bool empty() const { return x1 < x0 || y1 < y0; }
    void extend(int x, int y)
    {
        if (empty()) {
            x0 = x1 = x;
            y0 = y1 = y;
            return;
        }
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
    }
    void extend(const BoundingBox& o)
    {
        if (o.empty()) return;
        extend(o.x0, o.y0);
        extend(o.x1, o.y1);
    }
};

struct Region {
    int pixel_count = 0;
    Color mean_color = Color::Zero();
    Vec2 mean_flow = Vec2::Zero();
    BoundingBox bbox;
    std::vector<int> neighbors;  // sorted, symmetric
    bool good = false;
    std::vector<int> members;    // ids merged into this region's warp unit (itself first)
};

/// A bad seed region plus the neighbors recruited to guide it. `rendered`
/// lists the bad members this group is responsible for drawing.
struct MergedGroup {
    int seed = -1;
    std::vector<int> members;
    std::vector<int> rendered;
};

struct SuperpixelMap {
    IdPlane labels;
    std::vector<Region> regions;
    std::vector<MergedGroup> groups;

    int width() const { return static_cast<int>(labels.cols()); }
    int height() const { return static_cast<int>(labels.rows()); }
    int size() const { return static_cast<int>(regions.size()); }
};

struct SegmentParams {
    int count = 0;              ///< target region count; 0 derives it from mean_area
    double mean_area = 600.0;
    double compactness = 10.0;
    double lambda_flow = 0.5;
    int iterations = 10;
};

/// SLIC-style clustering on CIELab color, position and normalised flow
/// magnitude, followed by a connectivity pass. Ids are contiguous from 0.
SuperpixelMap segment(const Image& image, const Plane<double>& flow_magnitude, const SegmentParams& params);

/// Recomputes counts, mean colors, boxes and adjacency from `labels`.
void compute_region_stats(SuperpixelMap& map, const Image& image);

/// Mean displacement per region over pixels with weight above `threshold`,
/// falling back to all pixels of the region when none qualify.
void compute_region_motion(SuperpixelMap& map, const FlowField& displacement, const WeightMap& weights,
                           double threshold);

/// good <=> more than `min_pixels` pixels with weight above `threshold`.
/// Returns the number of good regions.
int classify(SuperpixelMap& map, const WeightMap& weights, int min_pixels, double threshold);

/// Breadth-style expansion from every bad region until a good neighbor is
/// recruited. Fills `groups` and the seeds' `members`. Throws, naming
/// `frame_name`, when no region of the frame is good.
void merge_bad(SuperpixelMap& map, const std::string& frame_name = "source");

}  // namespace hsvideo

#endif  // HSVIDEO_SUPERPIXEL_HPP
