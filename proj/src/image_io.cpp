#include "gmcnn/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace gmcnn {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors by longjmp; the message is kept for the C++ side.
struct PngError {
    std::string message;
};

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
    static_cast<PngError*>(png_get_error_ptr(png))->message = msg;
    png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

Image read_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open image '" + path + "'");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw std::runtime_error("'" + path + "' is not a PNG file");
    }
    PngError err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_read_struct(p, i, nullptr); }
    } guard{&png, &info};
    if (!info) throw std::runtime_error("png_create_info_struct failed");

    // Everything touched after setjmp lives in heap storage owned by `img`.
    Image img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) throw std::runtime_error("PNG read '" + path + "': " + err.message);
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    img.w = static_cast<int>(png_get_image_width(png, info));
    img.h = static_cast<int>(png_get_image_height(png, info));
    img.channels = png_get_channels(png, info);
    if (img.channels != 1 && img.channels != 3) {
        throw std::runtime_error("'" + path + "': unsupported channel count " + std::to_string(img.channels));
    }
    const std::size_t stride = png_get_rowbytes(png, info);
    if (stride != static_cast<std::size_t>(img.w) * img.channels) {
        throw std::runtime_error("'" + path + "': unexpected row layout");
    }
    img.pixels.resize(stride * img.h);
    rows.resize(img.h);
    for (int y = 0; y < img.h; ++y) rows[y] = img.pixels.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    return img;
}

void write_png(const std::string& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3) throw std::invalid_argument("write_png: channels must be 1 or 3");
    if (image.h <= 0 || image.w <= 0 ||
        image.pixels.size() != static_cast<std::size_t>(image.h) * image.w * image.channels) {
        throw std::invalid_argument("write_png: pixel buffer does not match dimensions");
    }
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    PngError err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_write_struct(p, i); }
    } guard{&png, &info};
    if (!info) throw std::runtime_error("png_create_info_struct failed");

    if (setjmp(png_jmpbuf(png))) throw std::runtime_error("PNG write '" + path + "': " + err.message);
    png_init_io(png, f.get());
    png_set_IHDR(png, info, image.w, image.h, 8, image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(image.w) * image.channels;
    for (int y = 0; y < image.h; ++y) {
        png_write_row(png, const_cast<png_bytep>(image.pixels.data() + stride * y));
    }
    png_write_end(png, nullptr);
    if (std::fflush(f.get()) != 0) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<double> to_luma(const Image& image) {
    const std::size_t n = static_cast<std::size_t>(image.h) * image.w;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (image.channels == 1) {
            out[i] = image.pixels[i];
        } else {
            const std::uint8_t* p = &image.pixels[i * 3];
            out[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
        }
    }
    return out;
}

}  // namespace gmcnn
