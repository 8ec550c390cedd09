#pragma once

#include "gforest/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace gforest {

// Model file layout, all little-endian:
//
//   offset  size  field
//   0       4     magic "GFOR"
//   4       2     version (u16)
//   6       2     reserved, zero
//   8       4     N_root (u32)
//   12      4     N_internal (u32)
//   16      4     N_leaf (u32)
//   20      2     D_R (u16)
//   22      2     D_I (u16)
//   24      8     cov decoder: input, hidden width, hidden layers, output (u16 each)
//   32      8     rgb decoder: same
//   40            roots:     N_root * D_R binary16
//                 internals: N_internal * D_I binary16, then N_internal u32 parents
//                 leaves:    N_leaf records of {f32 mu[3], f32 log_gamma_s,
//                            f32 alpha_raw, u32 parent}
//                 cov decoder parameters, binary16
//                 rgb decoder parameters, binary16
//
// Decoder parameters follow Mlp's flat order. A model without decoders
// stores zero decoder dims and no parameters.
inline constexpr char kModelMagic[4] = {'G', 'F', 'O', 'R'};
inline constexpr std::uint16_t kModelVersion = 1;
inline constexpr std::size_t kModelHeaderSize = 40;
inline constexpr std::size_t kLeafRecordSize = 24;

/// IEEE 754 binary16, round to nearest even (via binary32).
std::uint16_t to_half_bits(double value);
double from_half_bits(std::uint16_t bits);
inline double quantize_half(double value) { return from_half_bits(to_half_bits(value)); }

std::vector<std::uint8_t> save_model(const Model& model);
Model load_model(std::span<const std::uint8_t> bytes);

void save_model_file(const Model& model, const std::filesystem::path& path);
Model load_model_file(const std::filesystem::path& path);

/// Exact serialized size, computed from counts and dims.
std::size_t model_byte_size(const Model& model);

} // namespace gforest
