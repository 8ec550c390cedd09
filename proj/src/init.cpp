#include "gforest/init.hpp"
#include "gforest/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace gforest {

Aabb Aabb::of(std::span<const Eigen::Vector3d> points) {
    Aabb box;
    if (points.empty()) return box;
    box.min = box.max = points.front();
    for (const auto& p : points) {
        box.min = box.min.cwiseMin(p);
        box.max = box.max.cwiseMax(p);
    }
    return box;
}

PointCloud synth_points(std::size_t n, const Aabb& bounds, std::uint64_t seed) {
    if (n < 1) throw ContractError("synth_points needs n >= 1");
    if (!((bounds.max - bounds.min).array() > 0.0).all()) {
        throw ContractError("synth_points needs a non-degenerate box");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PointCloud cloud;
    cloud.positions.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::Vector3d p;
        for (int k = 0; k < 3; ++k) p[k] = bounds.min[k] + unit(rng) * (bounds.max[k] - bounds.min[k]);
        cloud.positions.push_back(p);
    }
    return cloud;
}

namespace {

struct Nearest {
    std::uint32_t index;
    double dist2;
};

Nearest nearest_center(const Eigen::Vector3d& p, const std::vector<Eigen::Vector3d>& centers) {
    Nearest best{0, std::numeric_limits<double>::infinity()};
    for (std::uint32_t c = 0; c < centers.size(); ++c) {
        const double d = (p - centers[c]).squaredNorm();
        if (d < best.dist2) best = {c, d};
    }
    return best;
}

// Assigns every point, then re-seeds empty clusters from the farthest point.
// Returns true when any assignment changed.
bool assign(std::span<const Eigen::Vector3d> pts, std::vector<Eigen::Vector3d>& centers,
            std::vector<std::uint32_t>& assignment) {
    bool changed = false;
    std::vector<double> dist2(pts.size());
    std::vector<std::size_t> sizes(centers.size(), 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Nearest n = nearest_center(pts[i], centers);
        changed |= assignment[i] != n.index;
        assignment[i] = n.index;
        dist2[i] = n.dist2;
        ++sizes[n.index];
    }
    for (std::size_t c = 0; c < centers.size(); ++c) {
        if (sizes[c] > 0) continue;
        std::size_t far = pts.size();
        double far_d = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (sizes[assignment[i]] > 1 && dist2[i] > far_d) {
                far_d = dist2[i];
                far = i;
            }
        }
        if (far == pts.size()) break; // only coincident points left
        --sizes[assignment[far]];
        centers[c] = pts[far];
        assignment[far] = static_cast<std::uint32_t>(c);
        dist2[far] = 0.0;
        ++sizes[c];
        changed = true;
    }
    return changed;
}

} // namespace

KMeansResult kmeans(std::span<const Eigen::Vector3d> positions, std::size_t k, int max_iters,
                    std::uint64_t seed) {
    if (k < 1 || k > positions.size()) {
        throw ContractError("kmeans needs 1 <= K <= point count");
    }
    if (max_iters < 1) throw ContractError("kmeans needs max_iters >= 1");

    std::mt19937_64 rng(seed);
    const std::size_t n = positions.size();
    KMeansResult r;

    // k-means++ seeding.
    std::vector<char> chosen(n, 0);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    r.centers.push_back(positions[first]);
    chosen[first] = 1;
    while (r.centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], (positions[i] - r.centers.back()).squaredNorm());
            total += d2[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (std::size_t i = 0; i < n; ++i) {
                if (d2[i] <= 0.0) continue;
                pick = i;
                u -= d2[i];
                if (u <= 0.0) break;
            }
        }
        if (pick == n) {
            pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
        }
        chosen[pick] = 1;
        r.centers.push_back(positions[pick]);
    }

    r.assignment.assign(n, std::numeric_limits<std::uint32_t>::max());
    for (r.iterations = 1; r.iterations <= max_iters; ++r.iterations) {
        const bool changed = assign(positions, r.centers, r.assignment);
        if (!changed) break;
        std::vector<Eigen::Vector3d> sum(k, Eigen::Vector3d::Zero());
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sum[r.assignment[i]] += positions[i];
            ++count[r.assignment[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] > 0) r.centers[c] = sum[c] / static_cast<double>(count[c]);
        }
    }
    // Final pass so assignments are nearest w.r.t. the returned centers.
    assign(positions, r.centers, r.assignment);
    r.iterations = std::min(r.iterations, max_iters);
    return r;
}

std::vector<double> mean_neighbor_distance(std::span<const Eigen::Vector3d> positions) {
    const std::size_t n = positions.size();
    std::vector<double> out(n, 0.0);
    if (n < 2) return out;
    std::vector<double> d(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t m = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) d[m++] = (positions[i] - positions[j]).norm();
        }
        const std::size_t kk = std::min<std::size_t>(3, d.size());
        std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
        double sum = 0.0;
        for (std::size_t q = 0; q < kk; ++q) sum += d[q];
        out[i] = sum / static_cast<double>(kk);
    }
    return out;
}

Forest build_initial_forest(const PointCloud& cloud, const InitOptions& options, std::uint64_t seed) {
    const auto& pts = cloud.positions;
    if (pts.empty()) throw ContractError("point cloud is empty");
    for (const auto& p : pts) {
        if (!p.allFinite()) throw ContractError("point cloud has non-finite positions");
    }
    const KMeansResult km = kmeans(pts, options.k, options.kmeans_iters, seed);

    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> feat(-options.feature_range, options.feature_range);

    Forest forest(options.dims);
    forest.roots.resize(options.k);
    forest.internals.resize(options.k);
    for (std::size_t i = 0; i < options.k; ++i) {
        forest.roots[i].features = Eigen::VectorXd::NullaryExpr(options.dims.root, [&] { return feat(rng); });
        forest.internals[i].features =
            Eigen::VectorXd::NullaryExpr(options.dims.internal, [&] { return feat(rng); });
        forest.internals[i].parent = static_cast<std::uint32_t>(i);
    }

    const Aabb box = Aabb::of(pts);
    double isolated = 0.1 * box.extent().norm();
    if (!(isolated > 0.0)) isolated = 1e-2;
    const std::vector<double> nn = mean_neighbor_distance(pts);
    const double p0 = options.initial_opacity;
    const double logit = std::log(p0 / (1.0 - p0));

    forest.leaves.resize(pts.size());
    for (std::size_t j = 0; j < pts.size(); ++j) {
        auto& leaf = forest.leaves[j];
        leaf.mu = pts[j];
        const double scale = pts.size() < 2 ? isolated : std::max(nn[j], 1e-7);
        leaf.log_gamma_s = std::log(scale);
        leaf.alpha_raw = logit;
        leaf.parent = km.assignment[j];
    }
    // Coincident points can leave a cluster empty; sweep such orphans.
    if (!validate(forest).childless.empty()) remove_leaves_and_compact(forest, {});
    return forest;
}

Model build_initial_model(const PointCloud& cloud, const InitOptions& options, std::uint64_t seed) {
    Model model{build_initial_forest(cloud, options, seed), {}};
    std::mt19937_64 rng(seed + 1);
    model.decoders = Decoders::create(options.dims, rng);
    return model;
}

} // namespace gforest
