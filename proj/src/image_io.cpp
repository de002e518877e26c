#include "hsvideo/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

namespace hsvideo {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const
    {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& file, const char* mode)
{
    FilePtr f(std::fopen(file.string().c_str(), mode));
    if (!f) throw Error("cannot open '" + file.string() + "'");
    return f;
}

std::uint8_t to_code(double v)
{
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Image read_png(const std::filesystem::path& file)
{
    auto f = open_file(file, "rb");
    png_byte sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw Error("'" + file.string() + "' is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("libpng initialisation failed");
    }
    std::vector<png_byte> buffer;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("corrupt PNG '" + file.string() + "'");
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const auto width = static_cast<int>(png_get_image_width(png, info));
    const auto height = static_cast<int>(png_get_image_height(png, info));
    const int depth = png_get_bit_depth(png, info);
    const int type = png_get_color_type(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (type == PNG_COLOR_TYPE_GRAY || type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const auto stride = png_get_rowbytes(png, info);
    buffer.resize(stride * static_cast<std::size_t>(height));
    rows.resize(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[y] = buffer.data() + stride * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    Image image(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) image.channel(c)(y, x) = rows[y][3 * x + c] / 255.0;
    return image;
}

void write_png_rows(const std::filesystem::path& file, int width, int height, int depth, int type,
                    std::vector<png_bytep>& rows)
{
    auto f = open_file(file, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("failed writing PNG '" + file.string() + "'");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 depth, type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (depth == 16) png_set_swap(png);  // rows are host-order uint16
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

int read_ppm_token(std::istream& in)
{
    std::string tok;
    while (in >> tok) {
        if (tok[0] == '#') {
            std::string rest;
            std::getline(in, rest);
            continue;
        }
        return std::stoi(tok);
    }
    throw Error("truncated PPM header");
}

Image read_ppm(const std::filesystem::path& file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("cannot open '" + file.string() + "'");
    std::string magic;
    in >> magic;
    if (magic != "P6") throw Error("'" + file.string() + "' is not a binary PPM (P6)");
    const int width = read_ppm_token(in);
    const int height = read_ppm_token(in);
    const int maxval = read_ppm_token(in);
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255)
        throw Error("unsupported PPM header in '" + file.string() + "'");
    in.get();
    std::vector<unsigned char> data(static_cast<std::size_t>(width) * height * 3);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (in.gcount() != static_cast<std::streamsize>(data.size()))
        throw Error("truncated PPM payload in '" + file.string() + "'");
    Image image(width, height);
    std::size_t i = 0;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) image.channel(c)(y, x) = data[i++] / double(maxval);
    return image;
}

bool is_ppm(const std::filesystem::path& file)
{
    auto ext = file.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return ext == ".ppm";
}

}  // namespace

Image read_image(const std::filesystem::path& file)
{
    if (!std::filesystem::exists(file)) throw Error("image file '" + file.string() + "' does not exist");
    return is_ppm(file) ? read_ppm(file) : read_png(file);
}

void write_image(const Image& image, const std::filesystem::path& file)
{
    const int w = image.width();
    const int h = image.height();
    std::vector<png_byte> data(static_cast<std::size_t>(w) * h * 3);
    std::size_t i = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) data[i++] = to_code(image.channel(c)(y, x));

    if (is_ppm(file)) {
        std::ofstream out(file, std::ios::binary);
        if (!out) throw Error("cannot open '" + file.string() + "'");
        out << "P6\n" << w << ' ' << h << "\n255\n";
        out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
        if (!out) throw Error("failed writing '" + file.string() + "'");
        return;
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[y] = data.data() + static_cast<std::size_t>(y) * w * 3;
    write_png_rows(file, w, h, 8, PNG_COLOR_TYPE_RGB, rows);
}

void write_png16(const Plane<std::uint16_t>& plane, const std::filesystem::path& file)
{
    Plane<std::uint16_t> copy = plane;
    std::vector<png_bytep> rows(static_cast<std::size_t>(copy.rows()));
    for (Eigen::Index y = 0; y < copy.rows(); ++y)
        rows[y] = reinterpret_cast<png_bytep>(copy.data() + y * copy.cols());
    write_png_rows(file, static_cast<int>(copy.cols()), static_cast<int>(copy.rows()), 16,
                   PNG_COLOR_TYPE_GRAY, rows);
}

Image quantize8(const Image& image)
{
    Image out = image;
    for (int c = 0; c < 3; ++c)
        out.channel(c) = out.channel(c).unaryExpr([](double v) { return to_code(v) / 255.0; });
    return out;
}

}  // namespace hsvideo
