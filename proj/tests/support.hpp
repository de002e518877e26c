#ifndef HSVIDEO_TEST_SUPPORT_HPP
#define HSVIDEO_TEST_SUPPORT_HPP

#include "hsvideo/types.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace testing {

inline const nlohmann::json& frozen()
{
    static const nlohmann::json j = [] {
        std::ifstream in(std::string(HSVIDEO_TEST_DIR) + "/oracles/frozen.json");
        if (!in) throw std::runtime_error("frozen oracle values missing");
        return nlohmann::json::parse(in);
    }();
    return j;
}

inline std::filesystem::path data_dir() { return std::filesystem::path(HSVIDEO_TEST_DIR) / "data"; }

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("hsvideo_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Smooth deterministic texture, values inside (0, 1).
inline hsvideo::Image textured(int w, int h, double phase = 0.0)
{
    hsvideo::Image img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.channel(c)(y, x) = 0.5 + 0.2 * std::sin(0.41 * x + 0.17 * y + 1.3 * c + phase) +
                                       0.2 * std::cos(0.13 * x - 0.37 * y + 0.7 * c * c + phase);
    return img;
}

inline hsvideo::Image constant_image(int w, int h, double v)
{
    return hsvideo::Image(w, h, v);
}

inline hsvideo::Image noise_image(int w, int h, unsigned seed)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    hsvideo::Image img(w, h);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) img.channel(c)(y, x) = u(rng);
    return img;
}

}  // namespace testing

#endif  // HSVIDEO_TEST_SUPPORT_HPP
