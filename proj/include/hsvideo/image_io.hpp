#ifndef HSVIDEO_IMAGE_IO_HPP
#define HSVIDEO_IMAGE_IO_HPP

#include "hsvideo/types.hpp"

#include <cstdint>
#include <filesystem>

namespace hsvideo {

/// Reads an 8-bit PNG (gray, gray+alpha, RGB or RGBA) or a binary PPM (P6,
/// maxval < 256). Channels are scaled to [0, 1]; alpha is dropped.
Image read_image(const std::filesystem::path& file);

/// Writes an 8-bit RGB PNG, or a P6 PPM when the extension is ".ppm".
/// Values are clamped to [0, 1] and rounded to the nearest code.
void write_image(const Image& image, const std::filesystem::path& file);

/// 16-bit grayscale PNG, used for region-label dumps.
void write_png16(const Plane<std::uint16_t>& plane, const std::filesystem::path& file);

/// Rounds every channel to the nearest 8-bit code, as a write/read cycle would.
Image quantize8(const Image& image);

}  // namespace hsvideo

#endif  // HSVIDEO_IMAGE_IO_HPP
