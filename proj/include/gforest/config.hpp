#pragma once

#include "gforest/trainer.hpp"

#include <filesystem>
#include <istream>
#include <optional>
#include <string>

namespace gforest {

/// Named (D_R, D_I) capacities: dims-a (16, 8), dims-b (24, 16), dims-c (32, 24).
std::optional<FeatureDims> dims_preset(const std::string& name);

/// Applies one `key = value` setting. Throws FormatError on an unknown key
/// or an unparsable value.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Reads `key = value` lines; `#` starts a comment. Errors carry the line
/// number.
void apply_config(TrainConfig& cfg, std::istream& in);
void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path);

} // namespace gforest
