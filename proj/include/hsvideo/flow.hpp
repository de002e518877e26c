#ifndef HSVIDEO_FLOW_HPP
#define HSVIDEO_FLOW_HPP

#include "hsvideo/types.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

namespace hsvideo {

/// Dense displacement field in pixels: +u to the right, +v downward.
template <typename Scalar>
struct FlowFieldT {
    Plane<Scalar> u, v;

    FlowFieldT() = default;
    FlowFieldT(int width, int height)
        : u(Plane<Scalar>::Zero(height, width)), v(Plane<Scalar>::Zero(height, width))
    {
    }

    int width() const { return static_cast<int>(u.cols()); }
    int height() const { return static_cast<int>(u.rows()); }

    Vec2 at(int x, int y) const { return Vec2(u(y, x), v(y, x)); }
    void set(int x, int y, const Vec2& d)
    {
        u(y, x) = static_cast<Scalar>(d.x());
        v(y, x) = static_cast<Scalar>(d.y());
    }
    Vec2 sample(double x, double y) const { return Vec2(sample_bilinear(u, x, y), sample_bilinear(v, x, y)); }

    Plane<double> magnitude() const
    {
        return (u.template cast<double>().square() + v.template cast<double>().square()).sqrt();
    }

    bool finite() const { return u.allFinite() && v.allFinite(); }

    bool operator==(const FlowFieldT& o) const
    {
        return u.rows() == o.u.rows() && u.cols() == o.u.cols() && (u == o.u).all() && (v == o.v).all();
    }
};

/// Storage precision matches the Middlebury container.
using FlowField = FlowFieldT<float>;

constexpr float kFloMagic = 202021.25f;

/// Middlebury .flo: little-endian float magic, int32 width, int32 height,
/// then row-major interleaved float32 (u, v).
FlowField read_flow(const std::filesystem::path& file);
void write_flow(const FlowField& field, const std::filesystem::path& file);

struct FlowEstimatorParams {
    int levels = 4;
    int radius = 3;
    int patch_radius = 2;
};

/// Coarse-to-fine block matching; deterministic, returns the exact zero
/// field for identical inputs.
FlowField estimate_flow(const Image& a, const Image& b, const FlowEstimatorParams& params = {});

/// The three frames of one synthesis task, indexed by FrameSlot.
enum FrameSlot : int { kSource = 0, kRefPrev = 1, kRefNext = 2 };

/// Correspondence fields tied to one task. "prev"/"next" are the bracketing
/// reference frames. The last three reach one lens period further, are
/// optional, and only feed the segmentation motion channel.
struct FlowBundle {
    std::optional<FlowField> src_to_prev;   // source  -> ref_prev
    std::optional<FlowField> src_to_next;   // source  -> ref_next
    std::optional<FlowField> prev_to_src;   // ref_prev -> source
    std::optional<FlowField> next_to_src;   // ref_next -> source
    std::optional<FlowField> prev_to_next;  // ref_prev -> ref_next
    std::optional<FlowField> next_to_prev;  // ref_next -> ref_prev
    std::optional<FlowField> src_to_prev_src;  // source -> previous frame of the same lens
    std::optional<FlowField> src_to_next_src;  // source -> next frame of the same lens
    std::optional<FlowField> next_to_next_ref; // ref_next -> following reference frame

    /// Names of the six required fields that are missing.
    std::vector<std::string_view> missing_required() const;
    /// Throws when a required field is absent or any present field has the
    /// wrong size or non-finite entries.
    void check(int width, int height) const;

    static FlowBundle zero(int width, int height);
};

/// How a pixel of one frame reaches the other two frames, plus the reverse
/// fields used for the forward/backward check.
struct CorrespondenceRoute {
    FrameSlot first_target;
    const FlowField* first;
    const FlowField* first_back;
    FrameSlot second_target;
    const FlowField* second;
    const FlowField* second_back;
};

CorrespondenceRoute route_for(FrameSlot slot, const FlowBundle& flows);

struct ValidationParams {
    int patch_radius = 3;
    double sigma = 0.05;
    double fb_threshold = 1.0;
};

/// Larger of the two mean-squared patch differences between the patch at
/// `p` in frame `slot` and its flow-located partners. Only overlapping
/// pixels are compared; a partner with no overlap yields +infinity.
double patch_distance(const std::array<const Image*, 3>& frames, FrameSlot slot, int x, int y,
                      const FlowBundle& flows, int patch_radius);

/// Lower-level form used by the above: squared patch distance between
/// (x1,y1) in `a` and the subpixel location (x2,y2) in `b`.
double patch_msd(const Image& a, int x1, int y1, const Image& b, double x2, double y2, int patch_radius);

inline double validation_weight(double d_c, double sigma)
{
    if (!std::isfinite(d_c)) return 0.0;
    return std::exp(-d_c * d_c / (2.0 * sigma * sigma));
}

/// True when following `fwd` from (x,y) and then `bwd` back lands within
/// `threshold` pixels of the start. Leaving the frame counts as failure.
bool forward_backward_ok(const FlowField& fwd, const FlowField& bwd, int x, int y, double threshold);

using WeightMap = Plane<double>;

/// Weight of each pixel of a reference frame judged against the other
/// reference alone (its first route partner); same kernel and check.
WeightMap reference_pair_weight(const std::array<const Image*, 3>& frames, FrameSlot slot, const FlowBundle& flows,
                                const ValidationParams& params = {});

/// Validation weights for the three task frames, indexed by FrameSlot.
std::array<WeightMap, 3> validate_flow(const std::array<const Image*, 3>& frames, const FlowBundle& flows,
                                       const ValidationParams& params = {});

}  // namespace hsvideo

#endif  // HSVIDEO_FLOW_HPP
