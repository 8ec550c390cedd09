#include "gforest/forest.hpp"
#include "gforest/errors.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace gforest {

std::size_t Forest::count(Layer layer) const {
    switch (layer) {
    case Layer::Root: return roots.size();
    case Layer::Internal: return internals.size();
    case Layer::Leaf: return leaves.size();
    }
    return 0;
}

namespace {

void check_leaf(const Forest& forest, NodeId id) {
    if (id.layer != Layer::Leaf) {
        throw StructuralError("node id does not address the leaf layer");
    }
    if (id.index >= forest.leaves.size()) {
        throw StructuralError(
            fmt::format("leaf index {} out of range ({} leaves)", id.index, forest.leaves.size()));
    }
}

std::uint32_t next_index(std::size_t size) {
    if (size >= IndexRemap::kRemoved) {
        throw StructuralError("layer exceeds 32-bit index range");
    }
    return static_cast<std::uint32_t>(size);
}

} // namespace

LeafPath path_of(const Forest& forest, NodeId leaf) {
    check_leaf(forest, leaf);
    const LeafNode& l = forest.leaves[leaf.index];
    if (l.parent >= forest.internals.size()) {
        throw StructuralError(fmt::format("leaf {} has dangling parent {}", leaf.index, l.parent));
    }
    const InternalNode& in = forest.internals[l.parent];
    if (in.parent >= forest.roots.size()) {
        throw StructuralError(
            fmt::format("internal {} has dangling parent {}", l.parent, in.parent));
    }
    return {l, in, forest.roots[in.parent], l.parent, in.parent};
}

Eigen::VectorXd gather_features(const Forest& forest, NodeId leaf) {
    const LeafPath path = path_of(forest, leaf);
    const auto di = path.internal.features.size();
    const auto dr = path.root.features.size();
    Eigen::VectorXd f(di + dr);
    f.head(di) = path.internal.features;
    f.tail(dr) = path.root.features;
    return f;
}

NodeId clone_leaf(Forest& forest, NodeId leaf, const LeafNode& new_attrs) {
    check_leaf(forest, leaf);
    LeafNode clone = new_attrs;
    clone.parent = forest.leaves[leaf.index].parent;
    const auto id = next_index(forest.leaves.size());
    forest.leaves.push_back(clone);
    return NodeId::leaf(id);
}

LeafInternalIds clone_leaf_and_internal(Forest& forest, NodeId leaf, const LeafNode& new_attrs) {
    const LeafPath path = path_of(forest, leaf);
    InternalNode internal_copy = path.internal;
    const auto internal_id = next_index(forest.internals.size());
    const auto leaf_id = next_index(forest.leaves.size());

    forest.internals.push_back(std::move(internal_copy));
    LeafNode clone = new_attrs;
    clone.parent = internal_id;
    forest.leaves.push_back(clone);
    forest.leaves[leaf.index].parent = internal_id;
    return {NodeId::leaf(leaf_id), NodeId::internal(internal_id)};
}

PathIds clone_path(Forest& forest, NodeId leaf, const LeafNode& new_attrs) {
    const LeafPath path = path_of(forest, leaf);
    RootNode root_copy = path.root;
    InternalNode internal_copy = path.internal;
    const auto root_id = next_index(forest.roots.size());
    const auto internal_id = next_index(forest.internals.size());
    const auto leaf_id = next_index(forest.leaves.size());

    internal_copy.parent = root_id;
    LeafNode clone = new_attrs;
    clone.parent = internal_id;

    forest.roots.push_back(std::move(root_copy));
    forest.internals.push_back(std::move(internal_copy));
    forest.leaves.push_back(clone);
    return {NodeId::leaf(leaf_id), NodeId::internal(internal_id), NodeId::root(root_id)};
}

IndexRemap IndexRemap::identity(const Forest& forest) {
    IndexRemap r;
    r.leaf.resize(forest.leaves.size());
    r.internal.resize(forest.internals.size());
    r.root.resize(forest.roots.size());
    for (std::uint32_t i = 0; i < r.leaf.size(); ++i) r.leaf[i] = i;
    for (std::uint32_t i = 0; i < r.internal.size(); ++i) r.internal[i] = i;
    for (std::uint32_t i = 0; i < r.root.size(); ++i) r.root[i] = i;
    return r;
}

bool IndexRemap::is_identity() const {
    const auto ident = [](const std::vector<std::uint32_t>& v) {
        for (std::uint32_t i = 0; i < v.size(); ++i) {
            if (v[i] != i) return false;
        }
        return true;
    };
    return ident(leaf) && ident(internal) && ident(root);
}

IndexRemap remove_leaves_and_compact(Forest& forest, std::span<const std::uint32_t> doomed) {
    const std::size_t n_leaf = forest.leaves.size();
    const std::size_t n_int = forest.internals.size();
    const std::size_t n_root = forest.roots.size();

    std::vector<char> keep_leaf(n_leaf, 1);
    for (const auto i : doomed) {
        if (i >= n_leaf) {
            throw StructuralError(fmt::format("doomed leaf {} out of range", i));
        }
        keep_leaf[i] = 0;
    }

    for (const auto& l : forest.leaves) {
        if (l.parent >= n_int) throw StructuralError("cannot compact: dangling leaf parent");
    }
    for (const auto& n : forest.internals) {
        if (n.parent >= n_root) throw StructuralError("cannot compact: dangling internal parent");
    }

    std::vector<char> keep_int(n_int, 0);
    for (std::size_t i = 0; i < n_leaf; ++i) {
        if (keep_leaf[i]) keep_int[forest.leaves[i].parent] = 1;
    }
    std::vector<char> keep_root(n_root, 0);
    for (std::size_t i = 0; i < n_int; ++i) {
        if (keep_int[i]) keep_root[forest.internals[i].parent] = 1;
    }

    IndexRemap remap;
    const auto build = [](const std::vector<char>& keep, std::vector<std::uint32_t>& out) {
        out.assign(keep.size(), IndexRemap::kRemoved);
        std::uint32_t next = 0;
        for (std::size_t i = 0; i < keep.size(); ++i) {
            if (keep[i]) out[i] = next++;
        }
        return next;
    };
    const auto n_leaf_new = build(keep_leaf, remap.leaf);
    const auto n_int_new = build(keep_int, remap.internal);
    const auto n_root_new = build(keep_root, remap.root);

    std::vector<LeafNode> leaves;
    leaves.reserve(n_leaf_new);
    for (std::size_t i = 0; i < n_leaf; ++i) {
        if (!keep_leaf[i]) continue;
        LeafNode l = forest.leaves[i];
        l.parent = remap.internal[l.parent];
        leaves.push_back(l);
    }
    std::vector<InternalNode> internals;
    internals.reserve(n_int_new);
    for (std::size_t i = 0; i < n_int; ++i) {
        if (!keep_int[i]) continue;
        InternalNode n = std::move(forest.internals[i]);
        n.parent = remap.root[n.parent];
        internals.push_back(std::move(n));
    }
    std::vector<RootNode> roots;
    roots.reserve(n_root_new);
    for (std::size_t i = 0; i < n_root; ++i) {
        if (keep_root[i]) roots.push_back(std::move(forest.roots[i]));
    }

    forest.leaves = std::move(leaves);
    forest.internals = std::move(internals);
    forest.roots = std::move(roots);
    return remap;
}

std::string ValidationReport::summary() const {
    std::string out;
    const auto append = [&out](const char* tag, const std::vector<std::string>& items) {
        for (const auto& s : items) out += fmt::format("{}: {}\n", tag, s);
    };
    append("range", range_violations);
    append("non-finite", non_finite);
    append("childless", childless);
    append("dims", dim_mismatch);
    return out;
}

ValidationReport validate(const Forest& forest) {
    ValidationReport report;
    const auto n_int = forest.internals.size();
    const auto n_root = forest.roots.size();

    std::vector<std::size_t> int_children(n_int, 0);
    std::vector<std::size_t> root_children(n_root, 0);

    for (std::size_t i = 0; i < forest.leaves.size(); ++i) {
        const auto& l = forest.leaves[i];
        if (l.parent >= n_int) {
            report.range_violations.push_back(
                fmt::format("leaf {} parent {} >= {}", i, l.parent, n_int));
        } else {
            ++int_children[l.parent];
        }
        if (!l.mu.allFinite() || !std::isfinite(l.log_gamma_s) || !std::isfinite(l.alpha_raw)) {
            report.non_finite.push_back(fmt::format("leaf {}", i));
        }
    }
    for (std::size_t i = 0; i < n_int; ++i) {
        const auto& n = forest.internals[i];
        if (n.parent >= n_root) {
            report.range_violations.push_back(
                fmt::format("internal {} parent {} >= {}", i, n.parent, n_root));
        } else {
            ++root_children[n.parent];
        }
        if (n.features.size() != forest.dims.internal) {
            report.dim_mismatch.push_back(fmt::format("internal {} has {} features, expected {}", i,
                                                      n.features.size(), forest.dims.internal));
        }
        if (!n.features.allFinite()) report.non_finite.push_back(fmt::format("internal {}", i));
    }
    for (std::size_t i = 0; i < n_root; ++i) {
        const auto& r = forest.roots[i];
        if (r.features.size() != forest.dims.root) {
            report.dim_mismatch.push_back(fmt::format("root {} has {} features, expected {}", i,
                                                      r.features.size(), forest.dims.root));
        }
        if (!r.features.allFinite()) report.non_finite.push_back(fmt::format("root {}", i));
    }
    for (std::size_t i = 0; i < n_int; ++i) {
        if (int_children[i] == 0) report.childless.push_back(fmt::format("internal {}", i));
    }
    for (std::size_t i = 0; i < n_root; ++i) {
        if (root_children[i] == 0) report.childless.push_back(fmt::format("root {}", i));
    }
    return report;
}

ForestStats stats(const Forest& forest) {
    ForestStats s;
    s.n_leaf = forest.leaves.size();
    s.n_internal = forest.internals.size();
    s.n_root = forest.roots.size();
    if (s.n_leaf > 0) {
        s.internal_ratio = static_cast<double>(s.n_internal) / static_cast<double>(s.n_leaf);
        s.root_ratio = static_cast<double>(s.n_root) / static_cast<double>(s.n_leaf);
    }
    return s;
}

} // namespace gforest
