#pragma once

#include "gforest/image.hpp"

#include <filesystem>

namespace gforest {

/// 8-bit PNG. Gray and alpha channels are expanded or dropped to RGB.
Image read_png(const std::filesystem::path& path);

/// Values are clamped to [0, 1] and rounded to 8 bits.
void write_png(const Image& image, const std::filesystem::path& path);

} // namespace gforest
