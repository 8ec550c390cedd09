#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace gforest {

enum class Layer : std::uint8_t { Root = 0, Internal = 1, Leaf = 2 };

struct NodeId {
    Layer layer = Layer::Leaf;
    std::uint32_t index = 0;

    static NodeId leaf(std::uint32_t i) { return {Layer::Leaf, i}; }
    static NodeId internal(std::uint32_t i) { return {Layer::Internal, i}; }
    static NodeId root(std::uint32_t i) { return {Layer::Root, i}; }

    friend bool operator==(const NodeId&, const NodeId&) = default;
};

/// Explicit per-Gaussian attributes. The scale coefficient is kept in log
/// space so that exp(log_gamma_s) is always positive.
struct LeafNode {
    Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    double log_gamma_s = 0.0;
    double alpha_raw = 0.0;
    std::uint32_t parent = 0;

    double gamma_s() const { return std::exp(log_gamma_s); }
    double opacity() const { return 1.0 / (1.0 + std::exp(-alpha_raw)); }
};

struct InternalNode {
    Eigen::VectorXd features;
    std::uint32_t parent = 0;
};

struct RootNode {
    Eigen::VectorXd features;
};

struct FeatureDims {
    int root = 24;
    int internal = 16;

    int total() const { return root + internal; }
    friend bool operator==(const FeatureDims&, const FeatureDims&) = default;
};

/// Three layers of nodes linked by upward parent indices:
/// leaf.parent indexes `internals`, internal.parent indexes `roots`.
struct Forest {
    FeatureDims dims;
    std::vector<RootNode> roots;
    std::vector<InternalNode> internals;
    std::vector<LeafNode> leaves;

    Forest() = default;
    explicit Forest(FeatureDims d) : dims(d) {}

    std::size_t leaf_count() const { return leaves.size(); }
    std::size_t internal_count() const { return internals.size(); }
    std::size_t root_count() const { return roots.size(); }
    std::size_t count(Layer layer) const;
};

/// References into the forest; invalidated by any mutation.
struct LeafPath {
    const LeafNode& leaf;
    const InternalNode& internal;
    const RootNode& root;
    std::uint32_t internal_index;
    std::uint32_t root_index;
};

LeafPath path_of(const Forest& forest, NodeId leaf);

/// [f_I, f_R] along the leaf's path, internal features first.
Eigen::VectorXd gather_features(const Forest& forest, NodeId leaf);

// Growth primitives. `new_attrs.parent` is ignored; the returned ids address
// freshly appended nodes.
NodeId clone_leaf(Forest& forest, NodeId leaf, const LeafNode& new_attrs);

struct LeafInternalIds {
    NodeId leaf;
    NodeId internal;
};
LeafInternalIds clone_leaf_and_internal(Forest& forest, NodeId leaf, const LeafNode& new_attrs);

struct PathIds {
    NodeId leaf;
    NodeId internal;
    NodeId root;
};
PathIds clone_path(Forest& forest, NodeId leaf, const LeafNode& new_attrs);

/// old index -> new index per layer, kRemoved for deleted nodes.
struct IndexRemap {
    static constexpr std::uint32_t kRemoved = std::numeric_limits<std::uint32_t>::max();

    std::vector<std::uint32_t> leaf;
    std::vector<std::uint32_t> internal;
    std::vector<std::uint32_t> root;

    static IndexRemap identity(const Forest& forest);
    bool is_identity() const;
};

/// Removes `doomed` leaves, then every internal left without leaf children,
/// then every root left without internal children, and compacts all layers.
/// An empty doomed set still sweeps pre-existing orphans.
IndexRemap remove_leaves_and_compact(Forest& forest, std::span<const std::uint32_t> doomed);

struct ValidationReport {
    std::vector<std::string> range_violations;
    std::vector<std::string> non_finite;
    std::vector<std::string> childless;
    std::vector<std::string> dim_mismatch;

    bool clean() const {
        return range_violations.empty() && non_finite.empty() && childless.empty() &&
               dim_mismatch.empty();
    }
    std::size_t finding_count() const {
        return range_violations.size() + non_finite.size() + childless.size() +
               dim_mismatch.size();
    }
    std::string summary() const;
};

ValidationReport validate(const Forest& forest);

struct ForestStats {
    std::size_t n_leaf = 0;
    std::size_t n_internal = 0;
    std::size_t n_root = 0;
    double internal_ratio = 0.0; // N_I / N_leaf
    double root_ratio = 0.0;     // N_R / N_leaf
};

ForestStats stats(const Forest& forest);

} // namespace gforest
