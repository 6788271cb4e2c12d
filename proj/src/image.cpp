#include "fairlens/image.hpp"

#include <csetjmp>
#include <cstring>

#include <png.h>

#include "fairlens/common.hpp"

namespace fairlens {

namespace fs = std::filesystem;

Image::Image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b)
    : width(w), height(h), rgb(3 * static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {
    for (std::size_t i = 0; i < rgb.size(); i += 3) {
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    }
}

void Image::set_pixel(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    std::uint8_t* p = pixel(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
}

namespace {

struct MemReader {
    const std::string* bytes;
    std::size_t pos;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t n) {
    auto* reader = static_cast<MemReader*>(png_get_io_ptr(png));
    if (reader->pos + n > reader->bytes->size()) {
        png_error(png, "png read past end of buffer");
    }
    std::memcpy(out, reader->bytes->data() + reader->pos, n);
    reader->pos += n;
}

void write_to_string(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), n);
}

void flush_noop(png_structp) {}

}  // namespace

Image decode_png(const std::string& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8)) {
        raise(ErrorCode::UnreadableImage, "not a PNG stream");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) raise(ErrorCode::UnreadableImage, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        raise(ErrorCode::UnreadableImage, "png_create_info_struct failed");
    }

    Image image;
    std::vector<png_bytep> row_ptrs;
    MemReader reader{&bytes, 0};

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        raise(ErrorCode::UnreadableImage, "png decode error");
    }

    png_set_read_fn(png, &reader, read_from_memory);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    if (png_get_channels(png, info) != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        raise(ErrorCode::UnreadableImage, "unsupported channel layout after normalization");
    }

    image.width = static_cast<int>(w);
    image.height = static_cast<int>(h);
    image.rgb.assign(3 * static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
    row_ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) {
        row_ptrs[y] = image.rgb.data() + 3 * static_cast<std::size_t>(w) * y;
    }
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

Image load_png(const fs::path& path) {
    std::string bytes;
    try {
        bytes = read_text_file(path);
    } catch (const Error&) {
        raise(ErrorCode::UnreadableImage, "cannot read " + path.string());
    }
    try {
        return decode_png(bytes);
    } catch (const Error& e) {
        raise(ErrorCode::UnreadableImage, path.string() + ": " + e.what());
    }
}

std::string encode_png(const Image& image) {
    if (image.empty()) {
        raise(ErrorCode::IoFailure, "refusing to encode empty image");
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) raise(ErrorCode::IoFailure, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        raise(ErrorCode::IoFailure, "png_create_info_struct failed");
    }

    std::string out;
    std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(image.height));

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        raise(ErrorCode::IoFailure, "png encode error");
    }

    png_set_write_fn(png, &out, write_to_string, flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y) {
        row_ptrs[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(image.rgb.data() + image.offset(0, y));
    }
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void save_png(const Image& image, const fs::path& path) {
    write_text_file(path, encode_png(image));
}

}  // namespace fairlens
