#pragma once

#include "gforest/init.hpp"

#include <filesystem>
#include <istream>

namespace gforest {

/// Reads the `vertex` element of an ASCII or binary little-endian PLY.
/// x, y, z are required; red, green, blue are optional (8-bit integers are
/// mapped to [0, 1]); every other property is skipped.
PointCloud read_ply(std::istream& in);
PointCloud load_ply(const std::filesystem::path& path);

/// Binary little-endian, float x y z and, when present, uchar colors.
void save_ply(const PointCloud& cloud, const std::filesystem::path& path);

} // namespace gforest
