#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fairlens {

// 8-bit RGB raster, row-major. All decoding normalizes to this layout
// (gray and paletted PNGs are expanded, alpha is dropped).
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // 3 * width * height bytes

    Image() = default;
    Image(int w, int h, std::uint8_t r = 0, std::uint8_t g = 0, std::uint8_t b = 0);

    bool empty() const { return width == 0 || height == 0; }
    std::size_t offset(int x, int y) const {
        return 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                    static_cast<std::size_t>(x));
    }
    const std::uint8_t* pixel(int x, int y) const { return rgb.data() + offset(x, y); }
    std::uint8_t* pixel(int x, int y) { return rgb.data() + offset(x, y); }
    void set_pixel(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);

    bool operator==(const Image& other) const = default;
};

// Throws UnreadableImage on missing files, non-PNG bytes, or decode failure.
Image load_png(const std::filesystem::path& path);
Image decode_png(const std::string& bytes);

std::string encode_png(const Image& image);
void save_png(const Image& image, const std::filesystem::path& path);

}  // namespace fairlens
