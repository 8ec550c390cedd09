#pragma once

#include "gforest/pipeline.hpp"

#include <cstddef>
#include <string>

namespace gforest {

inline constexpr double kFlatParamsPerGaussian = 59.0;
inline constexpr double kLeafParamsEquivalent = 6.0;

/// Byte sizes as serialized plus the float32-equivalent accounting, where a
/// half-precision feature counts as half a float and pointers are excluded.
struct SizeReport {
    std::size_t n_leaf = 0;
    std::size_t n_internal = 0;
    std::size_t n_root = 0;

    std::size_t header_bytes = 0;
    std::size_t root_bytes = 0;
    std::size_t internal_bytes = 0; // features and parents
    std::size_t leaf_bytes = 0;
    std::size_t mlp_bytes = 0;
    std::size_t total_bytes = 0;

    double leaf_equiv = 0.0;     // 6 N_leaf
    double non_leaf_equiv = 0.0; // N_I D_I / 2 + N_R D_R / 2
    double total_equiv = 0.0;
    double equiv_ratio = 0.0;    // 59 N_leaf / total_equiv

    std::size_t flat_bytes = 0;  // 59 * 4 * N_leaf
    double compression_ratio = 0.0; // flat_bytes / total_bytes

    std::string to_table() const;
    std::string to_json() const;
};

SizeReport size_report(const Model& model);

/// Non-leaf float32 equivalents for the given counts and dims.
double non_leaf_equivalent(double n_internal, double n_root, FeatureDims dims);

/// Compression factor against the flat baseline for a total per-Gaussian
/// equivalent (e.g. 3.5 means 3.5 N).
inline double flat_ratio_for(double equiv_per_gaussian) {
    return kFlatParamsPerGaussian / equiv_per_gaussian;
}

} // namespace gforest
