#pragma once

#include "gforest/camera.hpp"
#include "gforest/decoder.hpp"
#include "gforest/image.hpp"
#include "gforest/init.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gforest {

/// Posed images. `train`/`test` hold indices into `cameras`/`images`.
struct SceneDataset {
    std::vector<Camera> cameras;
    std::vector<Image> images;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
    Aabb bounds;

    /// Throws ContractError on misaligned cameras/images or bad indices.
    void check() const;
};

inline constexpr const char* kManifestName = "scene.json";

/// Writes `scene.json` plus one PNG per view into `dir`.
void save_scene(const SceneDataset& scene, const std::filesystem::path& dir);
SceneDataset load_scene(const std::filesystem::path& dir);

/// Explicit Gaussian with a constant color, as used for ground truth.
struct FlatGaussian {
    Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    Eigen::Vector3d scale = Eigen::Vector3d::Constant(0.05);
    Quat rotation = Quat(1.0, 0.0, 0.0, 0.0);
    double opacity = 0.8;
    Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);

    DecodedGaussian decoded() const;
};

struct SyntheticSceneOptions {
    std::size_t n_gaussians = 128;
    std::size_t n_cameras = 20;
    int resolution = 64;
    std::size_t test_every = 5; // every n-th camera is held out; 0 disables
    double ring_radius = 2.5;
    double focal_factor = 1.2; // focal length in units of image width
};

struct SyntheticScene {
    SceneDataset dataset;
    std::vector<FlatGaussian> truth;
};

/// Random flat Gaussians in the unit box viewed from a ring of cameras
/// looking at the box center; images come from this repo's rasterizer.
SyntheticScene gen_synthetic_scene(const SyntheticSceneOptions& options, std::uint64_t seed);

} // namespace gforest
