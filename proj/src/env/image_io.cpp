#include "ave/env/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

#include "ave/core/kernels.hpp"

namespace ave::env {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

Tensor read_png(const std::filesystem::path& path)
{
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw std::runtime_error("cannot read PNG " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        throw std::runtime_error("cannot decode PNG " + path.string() + ": " + image.message);
    }
    Tensor out({image.height, image.width, 3});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = buffer[i] / 255.0;
    return out;
}

std::string next_token(std::istream& in)
{
    std::string tok;
    char ch;
    while (in.get(ch)) {
        if (ch == '#') {
            std::string rest;
            std::getline(in, rest);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(ch);
    }
    return tok;
}

Tensor read_pnm(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    const std::string magic = next_token(in);
    if (magic != "P6" && magic != "P5") throw std::runtime_error(path.string() + ": only binary PPM/PGM supported");
    const std::size_t w = std::stoul(next_token(in));
    const std::size_t h = std::stoul(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (maxval <= 0 || maxval > 255) throw std::runtime_error(path.string() + ": only 8-bit PNM supported");
    const std::size_t channels = magic == "P6" ? 3 : 1;
    std::vector<unsigned char> bytes(w * h * channels);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw std::runtime_error(path.string() + ": truncated");
    Tensor out({h, w, 3});
    for (std::size_t p = 0; p < w * h; ++p)
        for (std::size_t c = 0; c < 3; ++c) out[p * 3 + c] = bytes[p * channels + (channels == 3 ? c : 0)] / static_cast<double>(maxval);
    return out;
}

std::vector<std::uint8_t> to_rgb_bytes(const Tensor& pixels)
{
    if (pixels.ndim() != 3 || (pixels.dim(2) != 1 && pixels.dim(2) != 3))
        throw std::invalid_argument("image must be [H, W, 1] or [H, W, 3]");
    const std::size_t n = pixels.dim(0) * pixels.dim(1);
    const std::size_t c = pixels.dim(2);
    std::vector<std::uint8_t> bytes(n * 3);
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t k = 0; k < 3; ++k) bytes[p * 3 + k] = to_byte(pixels[p * c + (c == 3 ? k : 0)]);
    return bytes;
}

} // namespace

Tensor read_image(const std::filesystem::path& path)
{
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw std::runtime_error("cannot open " + path.string());
    unsigned char sig[8] = {};
    probe.read(reinterpret_cast<char*>(sig), 8);
    probe.close();
    if (png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
    if (sig[0] == 'P') return read_pnm(path);
    throw std::runtime_error(path.string() + ": unsupported image format");
}

void write_png(const std::filesystem::path& path, const Tensor& pixels)
{
    const auto bytes = to_rgb_bytes(pixels);
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng failed writing " + path.string());
    }
    png_init_io(png, f.get());
    const auto h = static_cast<png_uint_32>(pixels.dim(0));
    const auto w = static_cast<png_uint_32>(pixels.dim(1));
    png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (png_uint_32 r = 0; r < h; ++r)
        png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(r) * w * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_ppm(const std::filesystem::path& path, const Tensor& pixels)
{
    const auto bytes = to_rgb_bytes(pixels);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "P6\n" << pixels.dim(1) << ' ' << pixels.dim(0) << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor resize_image(const Tensor& pixels, std::size_t out_h, std::size_t out_w)
{
    const std::size_t h = pixels.dim(0), w = pixels.dim(1), c = pixels.dim(2);
    Tensor out({out_h, out_w, c});
    kernels::resample(pixels.data(), h, w, c, kernels::Window{0.0, 0.0, static_cast<double>(w), static_cast<double>(h)},
                      out_h, out_w, out.data());
    return out;
}

} // namespace ave::env
