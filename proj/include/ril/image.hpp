#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ril {

/// Interleaved 8-bit RGB image.
struct Image {
    int h = 0, w = 0;
    std::vector<std::uint8_t> px;

    Image() = default;
    Image(int h_, int w_) : h(h_), w(w_), px(static_cast<size_t>(h_) * w_ * 3, 0) {}

    std::uint8_t& at(int y, int x, int ch) { return px[(static_cast<size_t>(y) * w + x) * 3 + ch]; }
    const std::uint8_t& at(int y, int x, int ch) const { return px[(static_cast<size_t>(y) * w + x) * 3 + ch]; }

    bool in_bounds(int y, int x) const { return y >= 0 && y < h && x >= 0 && x < w; }

    void fill(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        for (std::size_t i = 0; i < px.size(); i += 3) {
            px[i] = r;
            px[i + 1] = g;
            px[i + 2] = b;
        }
    }
};

inline std::uint8_t clamp_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& img);

}  // namespace ril
