#pragma once

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "sefusion/tensor.hpp"

namespace sefusion {

/// 8-bit RGB image, rows top to bottom, pixels interleaved (HWC).
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {}

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
    bool operator==(const Image&) const = default;
};

class ImageDecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ImageFormat { png, jpeg, unknown };

inline ImageFormat sniff_format(std::span<const std::uint8_t> head) {
    static constexpr std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (head.size() >= 8 && std::equal(png_sig, png_sig + 8, head.begin())) return ImageFormat::png;
    if (head.size() >= 3 && head[0] == 0xFF && head[1] == 0xD8 && head[2] == 0xFF) return ImageFormat::jpeg;
    return ImageFormat::unknown;
}

namespace detail {

inline Image decode_png(std::span<const std::uint8_t> bytes, const std::string& label) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
        throw ImageDecodeError(label + ": " + img.message);
    img.format = PNG_FORMAT_RGB;
    Image out(img.width, img.height);
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw ImageDecodeError(label + ": " + msg);
    }
    return out;
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr info) {
    auto* err = reinterpret_cast<JpegErrorManager*>(info->err);
    (*info->err->format_message)(info, err->message);
    std::longjmp(err->jump, 1);
}

// Kept free of non-trivially-destructible locals: longjmp skips destructors.
inline bool decode_jpeg_into(std::span<const std::uint8_t> bytes, Image& out, char* message) {
    jpeg_decompress_struct info;
    JpegErrorManager err;
    info.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        std::snprintf(message, JMSG_LENGTH_MAX, "%s", err.message);
        jpeg_destroy_decompress(&info);
        return false;
    }
    jpeg_create_decompress(&info);
    jpeg_mem_src(&info, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&info, TRUE);
    info.out_color_space = JCS_RGB;
    jpeg_start_decompress(&info);
    out.width = info.output_width;
    out.height = info.output_height;
    out.pixels.resize(out.width * out.height * 3);
    while (info.output_scanline < info.output_height) {
        JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(info.output_scanline) * out.width * 3;
        jpeg_read_scanlines(&info, &row, 1);
    }
    jpeg_finish_decompress(&info);
    jpeg_destroy_decompress(&info);
    return true;
}

}  // namespace detail

/// Decodes 8-bit PNG or baseline JPEG to RGB; anything else is rejected.
inline Image decode_image(std::span<const std::uint8_t> bytes, const std::string& label = "image") {
    Image out;
    switch (sniff_format(bytes)) {
        case ImageFormat::png:
            out = detail::decode_png(bytes, label);
            break;
        case ImageFormat::jpeg: {
            char message[JMSG_LENGTH_MAX] = {};
            if (!detail::decode_jpeg_into(bytes, out, message))
                throw ImageDecodeError(label + ": " + message);
            break;
        }
        case ImageFormat::unknown:
            throw ImageDecodeError(label + ": unsupported image format (expected PNG or JPEG)");
    }
    if (out.width == 0 || out.height == 0) throw ImageDecodeError(label + ": zero-dimension image");
    return out;
}

inline Image read_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageDecodeError(path.string() + ": cannot open");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
    return decode_image(bytes, path.string());
}

inline std::vector<std::uint8_t> encode_png(const Image& image) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr))
        throw std::runtime_error(std::string("PNG encode failed: ") + img.message);
    std::vector<std::uint8_t> bytes(size);
    if (!png_image_write_to_memory(&img, bytes.data(), &size, 0, image.pixels.data(), 0, nullptr))
        throw std::runtime_error(std::string("PNG encode failed: ") + img.message);
    bytes.resize(size);
    return bytes;
}

inline void write_png(const Image& image, const std::filesystem::path& path) {
    const auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

/**
 * Bilinear sample at continuous source coordinates, edge-clamped.
 * Pixel centres sit at integer coordinates.
 */
inline double sample_bilinear(const Image& img, double x, double y, std::size_t c) {
    x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    const auto x0 = static_cast<std::size_t>(x), y0 = static_cast<std::size_t>(y);
    const std::size_t x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
    const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
    const double top = (1 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
    const double bottom = (1 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
    return (1 - fy) * top + fy * bottom;
}

/**
 * Resize to height x width with half-pixel-centre bilinear sampling and map
 * [0, 255] to [0, 1]; returns a [3, H, W] tensor.
 */
template <std::floating_point T = float>
Tensor<T> preprocess(const Image& img, std::size_t height = 224, std::size_t width = 224) {
    if (img.width == 0 || img.height == 0 || height == 0 || width == 0)
        throw ImageDecodeError("preprocess: zero-dimension image");
    std::vector<T> out(3 * height * width);
    const double sx = static_cast<double>(img.width) / static_cast<double>(width);
    const double sy = static_cast<double>(img.height) / static_cast<double>(height);
    for (std::size_t y = 0; y < height; ++y) {
        const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
        for (std::size_t x = 0; x < width; ++x) {
            const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = sample_bilinear(img, src_x, src_y, c) / 255.0;
                out[(c * height + y) * width + x] = static_cast<T>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return Tensor<T>({3, height, width}, std::move(out));
}

}  // namespace sefusion
