#include "gforest/size_report.hpp"
#include "gforest/model_io.hpp"

#include <fmt/format.h>

#include "json.hpp"

namespace gforest {

double non_leaf_equivalent(double n_internal, double n_root, FeatureDims dims) {
    return n_internal * dims.internal / 2.0 + n_root * dims.root / 2.0;
}

SizeReport size_report(const Model& model) {
    const Forest& f = model.forest;
    SizeReport r;
    r.n_leaf = f.leaves.size();
    r.n_internal = f.internals.size();
    r.n_root = f.roots.size();

    r.header_bytes = kModelHeaderSize;
    r.root_bytes = 2 * r.n_root * static_cast<std::size_t>(f.dims.root);
    r.internal_bytes = r.n_internal * (2 * static_cast<std::size_t>(f.dims.internal) + 4);
    r.leaf_bytes = kLeafRecordSize * r.n_leaf;
    r.mlp_bytes = 2 * (model.decoders.cov.parameter_count() + model.decoders.rgb.parameter_count());
    r.total_bytes = r.header_bytes + r.root_bytes + r.internal_bytes + r.leaf_bytes + r.mlp_bytes;

    r.leaf_equiv = kLeafParamsEquivalent * static_cast<double>(r.n_leaf);
    r.non_leaf_equiv = non_leaf_equivalent(static_cast<double>(r.n_internal),
                                           static_cast<double>(r.n_root), f.dims);
    r.total_equiv = r.leaf_equiv + r.non_leaf_equiv;
    r.equiv_ratio = r.total_equiv > 0.0 ? kFlatParamsPerGaussian * r.n_leaf / r.total_equiv : 0.0;

    r.flat_bytes = 59 * 4 * r.n_leaf;
    r.compression_ratio = static_cast<double>(r.flat_bytes) / static_cast<double>(r.total_bytes);
    return r;
}

std::string SizeReport::to_table() const {
    std::string s;
    s += fmt::format("{:<22}{:>14}\n", "section", "bytes");
    s += fmt::format("{:<22}{:>14}\n", "header", header_bytes);
    s += fmt::format("{:<22}{:>14}\n", fmt::format("roots ({})", n_root), root_bytes);
    s += fmt::format("{:<22}{:>14}\n", fmt::format("internals ({})", n_internal), internal_bytes);
    s += fmt::format("{:<22}{:>14}\n", fmt::format("leaves ({})", n_leaf), leaf_bytes);
    s += fmt::format("{:<22}{:>14}\n", "decoders", mlp_bytes);
    s += fmt::format("{:<22}{:>14}\n", "total", total_bytes);
    s += fmt::format("{:<22}{:>14}\n", "flat baseline", flat_bytes);
    s += fmt::format("{:<22}{:>14.3f}\n", "compression", compression_ratio);
    s += fmt::format("{:<22}{:>14.2f}\n", "leaf equiv", leaf_equiv);
    s += fmt::format("{:<22}{:>14.2f}\n", "non-leaf equiv", non_leaf_equiv);
    s += fmt::format("{:<22}{:>14.3f}\n", "equiv ratio", equiv_ratio);
    return s;
}

std::string SizeReport::to_json() const {
    nlohmann::json j;
    j["n_leaf"] = n_leaf;
    j["n_internal"] = n_internal;
    j["n_root"] = n_root;
    j["bytes"] = {{"header", header_bytes}, {"roots", root_bytes},   {"internals", internal_bytes},
                  {"leaves", leaf_bytes},   {"decoders", mlp_bytes}, {"total", total_bytes}};
    j["flat_bytes"] = flat_bytes;
    j["compression_ratio"] = compression_ratio;
    j["leaf_equiv"] = leaf_equiv;
    j["non_leaf_equiv"] = non_leaf_equiv;
    j["total_equiv"] = total_equiv;
    j["equiv_ratio"] = equiv_ratio;
    return j.dump();
}

} // namespace gforest
