#pragma once

#include "gforest/forest.hpp"
#include "gforest/pipeline.hpp"
#include "gforest/renderer.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace gforest::testing {

/// Every root has at least one internal child and every internal at least
/// one leaf child, so the result validates clean. Requires nr <= ni <= nl.
Forest random_forest(std::mt19937_64& rng, std::size_t nr, std::size_t ni, std::size_t nl,
                     FeatureDims dims = {24, 16});

/// Forest plus decoders, leaves scattered in a small box around the origin.
Model random_model(std::mt19937_64& rng, std::size_t nr, std::size_t ni, std::size_t nl,
                   FeatureDims dims = {24, 16}, double spread = 0.5);

/// Looks at the origin from distance 3 along -z.
Camera test_camera(int width, int height, double focal_factor = 1.2);

/// Filters nodes and recomputes pointers from scratch.
Forest rebuild_oracle(const Forest& forest, std::span<const std::uint32_t> doomed);

/// Exact equality of dims, counts, pointers and every stored value.
bool forests_equal(const Forest& a, const Forest& b);

/// Per-pixel blend with no tiling: sorts by (depth, input index) and walks
/// every splat for every pixel.
Image brute_force_composite(std::span<const Splat> splats, const Camera& cam,
                            const Eigen::Vector3d& background);

/// Worst relative error of an analytic gradient against central differences.
/// Components are compared relative to max(|fd|, floor * max|fd|).
struct GradCheck {
    double max_rel = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0; // at a kink of a piecewise-linear activation
    std::string worst;

    void add(double analytic, double numeric, double scale, const std::string& what);
    bool passes(double tol) const { return checked > 0 && max_rel <= tol; }
};

inline constexpr double kRelFloor = 1e-2;

GradCheck check_mlp_gradients(std::uint64_t seed);
GradCheck check_decode_gradients(std::uint64_t seed);
GradCheck check_projection_gradients(std::uint64_t seed);
GradCheck check_raster_gradients(std::uint64_t seed);
GradCheck check_loss_gradients(std::uint64_t seed);
GradCheck check_pipeline_gradients(std::uint64_t seed);

struct FuzzResult {
    std::size_t steps = 0;
    std::size_t validate_failures = 0;
    std::size_t oracle_mismatches = 0;
    std::size_t misaligned = 0;
    std::string first_failure;

    bool ok() const { return validate_failures == 0 && oracle_mismatches == 0 && misaligned == 0; }
};

/// Random interleaving of growth, pruning and direct compaction on a random
/// forest, checking structure after every step.
FuzzResult structure_fuzz(std::uint64_t seed, std::size_t steps);

} // namespace gforest::testing
