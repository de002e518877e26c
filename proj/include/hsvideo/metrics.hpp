#ifndef HSVIDEO_METRICS_HPP
#define HSVIDEO_METRICS_HPP

#include "hsvideo/types.hpp"

#include <vector>

namespace hsvideo {

struct FrameMetrics {
    double ssim = 0.0;
    double mse = 0.0;
    double psnr = 0.0;  // +inf for identical frames
};

/// Mean SSIM of the luminance over all fully-inside 11x11 Gaussian windows
/// (sigma 1.5, K1 0.01, K2 0.03, dynamic range 1).
double ssim(const Image& a, const Image& b);

/// Mean over channels of the per-channel mean squared error.
double mse(const Image& a, const Image& b);

inline double psnr_from_mse(double m) { return m > 0.0 ? 10.0 * std::log10(1.0 / m) : INFINITY; }

FrameMetrics evaluate(const Image& prediction, const Image& truth);

struct TrackParams {
    int template_radius = 5;
    int search_radius = 6;
    double min_correlation = 0.8;
    double min_std = 5e-3;  // textureless below this template deviation
};

struct Trajectory {
    std::vector<Vec2> points;  // one per frame that was tracked
    bool lost = false;
};

/// Follows the patch around `start` through `frames` by normalised cross
/// correlation against the first frame's template, with parabolic
/// sub-pixel refinement. Stops and flags the track when correlation drops.
Trajectory track_trajectory(const std::vector<Image>& frames, const Vec2& start, const TrackParams& params = {});

}  // namespace hsvideo

#endif  // HSVIDEO_METRICS_HPP
