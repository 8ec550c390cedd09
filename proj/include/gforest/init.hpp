#pragma once

#include "gforest/forest.hpp"
#include "gforest/pipeline.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace gforest {

struct PointCloud {
    std::vector<Eigen::Vector3d> positions;
    std::vector<Eigen::Vector3d> colors; // empty when the source has none
};

struct Aabb {
    Eigen::Vector3d min = Eigen::Vector3d::Zero();
    Eigen::Vector3d max = Eigen::Vector3d::Ones();

    Eigen::Vector3d extent() const { return max - min; }
    Eigen::Vector3d center() const { return 0.5 * (min + max); }
    static Aabb of(std::span<const Eigen::Vector3d> points);
};

/// `n` points i.i.d. uniform in `bounds`.
PointCloud synth_points(std::size_t n, const Aabb& bounds, std::uint64_t seed);

struct KMeansResult {
    std::vector<std::uint32_t> assignment;
    std::vector<Eigen::Vector3d> centers;
    int iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iters` is reached. Ties go to the lowest center index;
/// empty clusters are re-seeded from the point farthest from its center.
KMeansResult kmeans(std::span<const Eigen::Vector3d> positions, std::size_t k, int max_iters,
                    std::uint64_t seed);

/// Mean distance to the (up to) 3 nearest other points, per point.
std::vector<double> mean_neighbor_distance(std::span<const Eigen::Vector3d> positions);

struct InitOptions {
    std::size_t k = 64;
    FeatureDims dims{24, 16};
    int kmeans_iters = 25;
    double initial_opacity = 0.1;
    double feature_range = 0.1;
};

/// K roots and K internals linked one-to-one, one leaf per point attached to
/// its k-means cluster's internal node.
Forest build_initial_forest(const PointCloud& cloud, const InitOptions& options, std::uint64_t seed);

/// Initial forest plus freshly initialized decoders.
Model build_initial_model(const PointCloud& cloud, const InitOptions& options, std::uint64_t seed);

} // namespace gforest
