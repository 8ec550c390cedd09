#pragma once

#include "gforest/camera.hpp"
#include "gforest/decoder.hpp"
#include "gforest/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace gforest {

inline constexpr double kNearPlane = 0.01;
inline constexpr double kCullMargin = 1.3;
inline constexpr double kLowPassDilation = 0.3;
inline constexpr double kMaxSplatAlpha = 0.99;
inline constexpr double kMinSplatAlpha = 1.0 / 255.0;
inline constexpr double kMinTransmittance = 1e-4;
inline constexpr int kTileSize = 16;

/// A Gaussian projected to the image plane. `cov2d` already includes the
/// low-pass dilation.
struct Splat {
    Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity();
    double depth = 1.0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    double alpha = 0.0;
};

/// nullopt when the Gaussian is behind the near plane or its projected mean
/// lies more than kCullMargin half-extents away from the image center.
std::optional<Splat> project(const DecodedGaussian& g, const Camera& cam);

struct ProjectionGrad {
    Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero(); // full-matrix gradient
};

/// Adjoint of `project` for a non-culled Gaussian. `d_cov2d` is the gradient
/// w.r.t. the full 2x2 matrix.
ProjectionGrad project_backward(const DecodedGaussian& g, const Camera& cam,
                                const Eigen::Vector2d& d_mean2d, const Eigen::Matrix2d& d_cov2d);

struct RenderOutput {
    Image image;
    std::vector<double> final_transmittance; // per pixel
    Eigen::Vector3d background = Eigen::Vector3d::Zero();

    // Bookkeeping for the adjoint pass.
    std::vector<Splat> splats;
    std::vector<Eigen::Matrix2d> conic;                 // cov2d inverse, per splat
    std::vector<char> usable;                           // finite and invertible
    std::vector<std::vector<std::uint32_t>> tile_lists; // depth-sorted splat ids per tile
    std::vector<std::uint32_t> processed;               // list entries visited, per pixel
    std::vector<char> touched;                          // contributed to some pixel
    std::size_t skipped_singular = 0;
    int tiles_x = 0;
    int tiles_y = 0;
};

/// Global depth sort (ties by input index) followed by front-to-back
/// compositing. Splats are binned into tiles by the exact footprint where
/// their alpha reaches kMinSplatAlpha, so results match an untiled blend.
RenderOutput rasterize(std::span<const Splat> splats, const Camera& cam,
                       const Eigen::Vector3d& background);

/// Gradient w.r.t. one splat. `cov2d` holds (a, b, c) of [[a, b], [b, c]];
/// the off-diagonal is a single shared scalar.
struct SplatGrad {
    Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
    Eigen::Vector3d cov2d = Eigen::Vector3d::Zero();
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    double alpha = 0.0;

    /// Same gradient expressed on the full matrix (off-diagonal split evenly).
    Eigen::Matrix2d cov2d_full() const {
        Eigen::Matrix2d m;
        m << cov2d[0], 0.5 * cov2d[1], 0.5 * cov2d[1], cov2d[2];
        return m;
    }
};

struct SplatGradients {
    std::vector<SplatGrad> grads;
    std::vector<double> mean2d_norm; // ||dL/d mean2d||, pixel units
    std::vector<char> touched;
};

SplatGradients rasterize_backward(const RenderOutput& output, const Image& d_image);

} // namespace gforest
