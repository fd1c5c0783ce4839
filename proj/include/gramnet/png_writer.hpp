#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace gramnet::io {

// Minimal conformant PNG writer: 8-bit grayscale or RGB, stored (type 0)
// deflate blocks, no ancillary chunks. One output pixel per matrix cell.
void write_png_gray(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
                    int width, int height);
void write_png_rgb(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
                   int width, int height);

// Linear map [-1, 1] -> [0, 255]; -1 is darkest.
std::uint8_t gray_level(double value);

// Diverging palette: -1 blue, 0 white, +1 red.
void diverging_rgb(double value, std::uint8_t rgb[3]);

} // namespace gramnet::io
