#include "gforest/errors.hpp"
#include "gforest/init.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

using namespace gforest;

namespace {

std::vector<Eigen::Vector3d> blob(std::mt19937_64& rng, const Eigen::Vector3d& c, std::size_t n, double sd) {
    std::normal_distribution<double> g(0.0, sd);
    std::vector<Eigen::Vector3d> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(c + Eigen::Vector3d(g(rng), g(rng), g(rng)));
    return out;
}

} // namespace

TEST(SynthPoints, InsideBoxAndDeterministic) {
    const Aabb box{Eigen::Vector3d(-1, 0, 2), Eigen::Vector3d(1, 0.5, 3)};
    const PointCloud a = synth_points(500, box, 3);
    ASSERT_EQ(a.positions.size(), 500u);
    EXPECT_TRUE(a.colors.empty());
    for (const auto& p : a.positions) {
        EXPECT_TRUE((p.array() >= box.min.array()).all() && (p.array() <= box.max.array()).all());
    }
    EXPECT_EQ(a.positions, synth_points(500, box, 3).positions);
    EXPECT_NE(a.positions, synth_points(500, box, 4).positions);
}

TEST(SynthPoints, RejectsBadInput) {
    EXPECT_THROW(synth_points(0, Aabb{}, 1), ContractError);
    EXPECT_THROW(synth_points(5, Aabb{Eigen::Vector3d::Zero(), Eigen::Vector3d(1, 0, 1)}, 1), ContractError);
}

TEST(Aabb, OfPoints) {
    const std::vector<Eigen::Vector3d> pts{{1, 2, 3}, {-1, 5, 0}, {0, 0, 4}};
    const Aabb b = Aabb::of(pts);
    EXPECT_EQ(b.min, Eigen::Vector3d(-1, 0, 0));
    EXPECT_EQ(b.max, Eigen::Vector3d(1, 5, 4));
}

TEST(KMeans, KEqualsCountGivesSingletons) {
    std::mt19937_64 rng(1);
    const auto pts = blob(rng, Eigen::Vector3d::Zero(), 12, 1.0);
    const KMeansResult r = kmeans(pts, 12, 25, 7);
    std::set<std::uint32_t> labels(r.assignment.begin(), r.assignment.end());
    EXPECT_EQ(labels.size(), 12u);
    for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(r.centers[r.assignment[i]], pts[i]);
}

TEST(KMeans, SeparatesTwoBlobs) {
    std::mt19937_64 rng(2);
    auto pts = blob(rng, Eigen::Vector3d(-5, 0, 0), 100, 0.3);
    const auto right = blob(rng, Eigen::Vector3d(5, 0, 0), 80, 0.3);
    pts.insert(pts.end(), right.begin(), right.end());
    const KMeansResult r = kmeans(pts, 2, 25, 3);
    for (std::size_t i = 1; i < 100; ++i) EXPECT_EQ(r.assignment[i], r.assignment[0]);
    for (std::size_t i = 101; i < 180; ++i) EXPECT_EQ(r.assignment[i], r.assignment[100]);
    EXPECT_NE(r.assignment[0], r.assignment[100]);
    EXPECT_NEAR(r.centers[r.assignment[0]].x(), -5.0, 0.2);
    EXPECT_NEAR(r.centers[r.assignment[100]].x(), 5.0, 0.2);
}

TEST(KMeans, EveryPointAssignedToNearestCenter) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Eigen::Vector3d> pts(400);
    for (auto& p : pts) p = Eigen::Vector3d(u(rng), u(rng), u(rng));
    const KMeansResult r = kmeans(pts, 16, 50, 9);
    std::vector<int> sizes(16, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double own = (pts[i] - r.centers[r.assignment[i]]).squaredNorm();
        for (const auto& c : r.centers) EXPECT_LE(own, (pts[i] - c).squaredNorm() + 1e-15);
        ++sizes[r.assignment[i]];
    }
    for (const int s : sizes) EXPECT_GT(s, 0);
}

TEST(KMeans, RejectsBadK) {
    const std::vector<Eigen::Vector3d> pts(3, Eigen::Vector3d::Zero());
    EXPECT_THROW(kmeans(pts, 4, 10, 1), ContractError);
    EXPECT_THROW(kmeans(pts, 0, 10, 1), ContractError);
}

TEST(KMeans, Deterministic) {
    std::mt19937_64 rng(4);
    const auto pts = blob(rng, Eigen::Vector3d::Zero(), 200, 1.0);
    EXPECT_EQ(kmeans(pts, 8, 30, 5).assignment, kmeans(pts, 8, 30, 5).assignment);
}

TEST(NeighborDistance, MatchesHandComputed) {
    const std::vector<Eigen::Vector3d> pts{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}, {6, 0, 0}, {10, 0, 0}};
    const auto d = mean_neighbor_distance(pts);
    EXPECT_DOUBLE_EQ(d[0], (1.0 + 3.0 + 6.0) / 3.0);
    EXPECT_DOUBLE_EQ(d[2], (2.0 + 3.0 + 3.0) / 3.0);
    EXPECT_DOUBLE_EQ(d[4], (4.0 + 7.0 + 9.0) / 3.0);
    EXPECT_EQ(mean_neighbor_distance(std::vector<Eigen::Vector3d>{{1, 2, 3}})[0], 0.0);
}

TEST(InitialForest, SingleClusterOfThree) {
    PointCloud c;
    c.positions = {{0, 0, 0}, {2, 0, 0}, {1, std::sqrt(3.0), 0}};
    InitOptions o;
    o.k = 1;
    o.dims = FeatureDims{6, 4};
    const Forest f = build_initial_forest(c, o, 1);
    EXPECT_EQ(f.root_count(), 1u);
    EXPECT_EQ(f.internal_count(), 1u);
    EXPECT_EQ(f.leaf_count(), 3u);
    EXPECT_TRUE(validate(f).clean());
    for (const auto& l : f.leaves) {
        EXPECT_NEAR(l.gamma_s(), 2.0, 1e-12);
        EXPECT_NEAR(l.opacity(), 0.1, 1e-12);
        EXPECT_EQ(l.parent, 0u);
    }
    EXPECT_EQ(f.roots[0].features.size(), 6);
    EXPECT_EQ(f.internals[0].features.size(), 4);
    EXPECT_LE(f.roots[0].features.cwiseAbs().maxCoeff(), 0.1);
}

TEST(InitialForest, CountsAndClusterLinks) {
    const PointCloud c = synth_points(500, Aabb{}, 11);
    InitOptions o;
    o.k = 16;
    const Forest f = build_initial_forest(c, o, 2);
    EXPECT_EQ(f.root_count(), 16u);
    EXPECT_EQ(f.internal_count(), 16u);
    EXPECT_EQ(f.leaf_count(), 500u);
    EXPECT_TRUE(validate(f).clean());
    for (std::uint32_t i = 0; i < 16; ++i) EXPECT_EQ(f.internals[i].parent, i);
    const KMeansResult km = kmeans(c.positions, 16, o.kmeans_iters, 2);
    for (std::size_t j = 0; j < 500; ++j) {
        EXPECT_EQ(f.leaves[j].mu, c.positions[j]);
        EXPECT_EQ(f.leaves[j].parent, km.assignment[j]);
    }
}

TEST(InitialForest, SinglePointUsesBoxFallback) {
    PointCloud c;
    c.positions = {{1, 2, 3}};
    InitOptions o;
    o.k = 1;
    const Forest f = build_initial_forest(c, o, 1);
    EXPECT_EQ(f.leaf_count(), 1u);
    EXPECT_GT(f.leaves[0].gamma_s(), 0.0);
    EXPECT_TRUE(validate(f).clean());
}

TEST(InitialForest, RejectsEmptyOrNonFinite) {
    InitOptions o;
    o.k = 1;
    EXPECT_THROW(build_initial_forest(PointCloud{}, o, 1), ContractError);
    PointCloud c;
    c.positions = {{0, 0, std::nan("")}};
    EXPECT_THROW(build_initial_forest(c, o, 1), ContractError);
}

TEST(InitialModel, DecoderShapes) {
    InitOptions o;
    o.k = 4;
    o.dims = FeatureDims{16, 8};
    const Model m = build_initial_model(synth_points(50, Aabb{}, 1), o, 1);
    EXPECT_EQ(m.decoders.cov.input_dim(), 24);
    EXPECT_EQ(m.decoders.cov.output_dim(), 7);
    EXPECT_EQ(m.decoders.rgb.input_dim(), 24 + 16);
    EXPECT_EQ(m.decoders.rgb.output_dim(), 3);
}
