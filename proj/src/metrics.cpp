#include "hsvideo/metrics.hpp"

#include <cmath>

namespace hsvideo {

namespace {

void require_same_size(const Image& a, const Image& b, const char* what)
{
    if (a.width() != b.width() || a.height() != b.height())
        throw Error(std::string(what) + ": dimension mismatch (" + std::to_string(a.width()) + "x" +
                    std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                    std::to_string(b.height()) + ")");
}

// Separable "valid" Gaussian filter.
Plane<double> filter_valid(const Plane<double>& p, const Eigen::VectorXd& k)
{
    const int n = static_cast<int>(k.size());
    const int h = static_cast<int>(p.rows());
    const int w = static_cast<int>(p.cols());
    Plane<double> rows = Plane<double>::Zero(h, w - n + 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + n <= w; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[i] * p(y, x + i);
            rows(y, x) = s;
        }
    Plane<double> out = Plane<double>::Zero(h - n + 1, w - n + 1);
    for (int y = 0; y + n <= h; ++y)
        for (int x = 0; x < w - n + 1; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[i] * rows(y + i, x);
            out(y, x) = s;
        }
    return out;
}

// Template of (2r+1)^2 luminance samples around a subpixel point.
Eigen::VectorXd patch(const Plane<double>& lum, const Vec2& c, int r)
{
    Eigen::VectorXd v((2 * r + 1) * (2 * r + 1));
    int k = 0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) v[k++] = sample_bilinear(lum, c.x() + dx, c.y() + dy);
    return v;
}

double ncc(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    const Eigen::VectorXd za = a.array() - a.mean();
    const Eigen::VectorXd zb = b.array() - b.mean();
    const double d = za.norm() * zb.norm();
    return d > 0.0 ? za.dot(zb) / d : 0.0;
}

double parabola_offset(double left, double mid, double right)
{
    const double den = left - 2.0 * mid + right;
    if (den >= 0.0) return 0.0;  // not a maximum
    return std::clamp(0.5 * (left - right) / den, -0.5, 0.5);
}

}  // namespace

double ssim(const Image& a, const Image& b)
{
    require_same_size(a, b, "ssim");
    constexpr int n = 11;
    if (a.width() < n || a.height() < n) throw Error("ssim: frame smaller than the 11x11 window");
    Eigen::VectorXd k(n);
    for (int i = 0; i < n; ++i) {
        const double d = i - (n - 1) / 2.0;
        k[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    }
    k /= k.sum();
    const Plane<double> x = a.luminance();
    const Plane<double> y = b.luminance();
    const double c1 = (0.01 * 1.0) * (0.01 * 1.0);
    const double c2 = (0.03 * 1.0) * (0.03 * 1.0);
    const Plane<double> mx = filter_valid(x, k);
    const Plane<double> my = filter_valid(y, k);
    const Plane<double> sxx = filter_valid(x * x, k) - mx * mx;
    const Plane<double> syy = filter_valid(y * y, k) - my * my;
    const Plane<double> sxy = filter_valid(x * y, k) - mx * my;
    const Plane<double> map =
        ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    return map.mean();
}

double mse(const Image& a, const Image& b)
{
    require_same_size(a, b, "mse");
    double total = 0.0;
    for (int c = 0; c < 3; ++c) total += (a.channel(c) - b.channel(c)).square().mean();
    return total / 3.0;
}

FrameMetrics evaluate(const Image& prediction, const Image& truth)
{
    FrameMetrics m;
    m.ssim = ssim(prediction, truth);
    m.mse = mse(prediction, truth);
    m.psnr = psnr_from_mse(m.mse);
    return m;
}

Trajectory track_trajectory(const std::vector<Image>& frames, const Vec2& start, const TrackParams& params)
{
    Trajectory track;
    if (frames.empty()) return track;
    const int r = params.template_radius;
    const Plane<double> first = frames[0].luminance();
    const Eigen::VectorXd tmpl = patch(first, start, r);
    const double std_dev = std::sqrt((tmpl.array() - tmpl.mean()).square().mean());
    track.points.push_back(start);
    if (std_dev < params.min_std) {
        track.lost = true;
        return track;
    }
    Vec2 pos = start;
    const int s = params.search_radius;
    for (std::size_t f = 1; f < frames.size(); ++f) {
        const Plane<double> lum = frames[f].luminance();
        const int side = 2 * s + 1;
        Eigen::MatrixXd score(side, side);
        int best_x = 0, best_y = 0;
        double best = -2.0;
        for (int dy = -s; dy <= s; ++dy)
            for (int dx = -s; dx <= s; ++dx) {
                const double c = ncc(tmpl, patch(lum, pos + Vec2(dx, dy), r));
                score(dy + s, dx + s) = c;
                if (c > best) {
                    best = c;
                    best_x = dx;
                    best_y = dy;
                }
            }
        if (best < params.min_correlation) {
            track.lost = true;
            return track;
        }
        double ox = 0.0, oy = 0.0;
        const int cx = best_x + s;
        const int cy = best_y + s;
        const bool exact = best >= 1.0 - 1e-12;  // template found verbatim
        if (!exact && cx > 0 && cx < side - 1) ox = parabola_offset(score(cy, cx - 1), score(cy, cx), score(cy, cx + 1));
        if (!exact && cy > 0 && cy < side - 1) oy = parabola_offset(score(cy - 1, cx), score(cy, cx), score(cy + 1, cx));
        // Re-centre on the integer optimum; the refinement is reported, not accumulated.
        const Vec2 integer = pos + Vec2(best_x, best_y);
        track.points.push_back(integer + Vec2(ox, oy));
        pos = integer;
    }
    return track;
}

}  // namespace hsvideo
