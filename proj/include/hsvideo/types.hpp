#ifndef HSVIDEO_TYPES_HPP
#define HSVIDEO_TYPES_HPP

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hsvideo {

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major raster. Indexed as plane(y, x).
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Mask = Plane<bool>;
using IdPlane = Plane<int>;

template <typename Scalar>
using Color3 = Eigen::Matrix<Scalar, 3, 1>;

using Vec2 = Eigen::Vector2d;

/// Three-channel color raster, channel values normally in [0, 1].
template <typename Scalar>
class ImageT {
public:
    using Pixel = Color3<Scalar>;

    ImageT() = default;
    ImageT(int width, int height, Scalar fill = Scalar(0))
    {
        for (auto& c : channels_) c = Plane<Scalar>::Constant(height, width, fill);
    }

    int width() const { return static_cast<int>(channels_[0].cols()); }
    int height() const { return static_cast<int>(channels_[0].rows()); }
    bool empty() const { return channels_[0].size() == 0; }
    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width() && y < height(); }

    Plane<Scalar>& channel(int c) { return channels_[c]; }
    const Plane<Scalar>& channel(int c) const { return channels_[c]; }

    Pixel pixel(int x, int y) const
    {
        return Pixel(channels_[0](y, x), channels_[1](y, x), channels_[2](y, x));
    }
    void set(int x, int y, const Pixel& p)
    {
        for (int c = 0; c < 3; ++c) channels_[c](y, x) = p[c];
    }

    /// Rec. 601 luma.
    Plane<Scalar> luminance() const
    {
        return Scalar(0.299) * channels_[0] + Scalar(0.587) * channels_[1] +
               Scalar(0.114) * channels_[2];
    }

    bool operator==(const ImageT& o) const
    {
        if (width() != o.width() || height() != o.height()) return false;
        for (int c = 0; c < 3; ++c)
            if ((channels_[c] != o.channels_[c]).any()) return false;
        return true;
    }

private:
    std::array<Plane<Scalar>, 3> channels_;
};

using Image = ImageT<double>;
using Color = Color3<double>;

/// Bilinear sample with the coordinate clamped to the raster.
template <typename Derived>
double sample_bilinear(const Eigen::ArrayBase<Derived>& plane, double x, double y)
{
    const auto w = plane.cols();
    const auto h = plane.rows();
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const auto x0 = static_cast<Eigen::Index>(std::floor(x));
    const auto y0 = static_cast<Eigen::Index>(std::floor(y));
    const auto x1 = std::min<Eigen::Index>(x0 + 1, w - 1);
    const auto y1 = std::min<Eigen::Index>(y0 + 1, h - 1);
    const double fx = x - static_cast<double>(x0);
    const double fy = y - static_cast<double>(y0);
    const double top = (1 - fx) * plane(y0, x0) + fx * plane(y0, x1);
    const double bottom = (1 - fx) * plane(y1, x0) + fx * plane(y1, x1);
    return (1 - fy) * top + fy * bottom;
}

template <typename Scalar>
Color3<Scalar> sample_bilinear(const ImageT<Scalar>& image, double x, double y)
{
    return Color3<Scalar>(static_cast<Scalar>(sample_bilinear(image.channel(0), x, y)),
                          static_cast<Scalar>(sample_bilinear(image.channel(1), x, y)),
                          static_cast<Scalar>(sample_bilinear(image.channel(2), x, y)));
}

inline bool inside_frame(double x, double y, int width, int height)
{
    return x >= 0.0 && y >= 0.0 && x <= width - 1.0 && y <= height - 1.0;
}

}  // namespace hsvideo

#endif  // HSVIDEO_TYPES_HPP
