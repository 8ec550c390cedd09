#pragma once

#include "gforest/camera.hpp"
#include "gforest/decoder.hpp"
#include "gforest/forest.hpp"
#include "gforest/renderer.hpp"

#include <span>
#include <vector>

namespace gforest {

/// A trainable scene: the forest plus its two shared decoders.
struct Model {
    Forest forest;
    Decoders decoders;
};

struct RenderTape {
    DecodeResult decoded;
    std::vector<std::uint32_t> splat_leaf; // splat index -> leaf index
    RenderOutput output;
};

/// decode -> project/cull -> rasterize, keeping everything the adjoint needs.
RenderTape render_with_tape(const Model& model, const Camera& cam, const Eigen::Vector3d& background);

RenderOutput render(const Model& model, const Camera& cam, const Eigen::Vector3d& background);

/// Renders already-explicit Gaussians through the same projection and
/// rasterizer (used for ground truth).
RenderOutput render_gaussians(std::span<const DecodedGaussian> gaussians, const Camera& cam,
                              const Eigen::Vector3d& background);

struct RenderGradient {
    ModelGradient model;
    std::vector<Eigen::Vector2d> leaf_mean2d_grad; // view-space positional gradient per leaf
    std::vector<char> leaf_visible;       // leaf touched at least one pixel
};

RenderGradient render_backward(const Model& model, const Camera& cam, const RenderTape& tape,
                               const Image& d_image);

} // namespace gforest
