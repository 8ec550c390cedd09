#include "gforest/pipeline.hpp"
#include "gforest/errors.hpp"

namespace gforest {

RenderTape render_with_tape(const Model& model, const Camera& cam, const Eigen::Vector3d& background) {
    RenderTape tape;
    tape.decoded = decode_forest(model.forest, model.decoders, cam.center());
    std::vector<Splat> splats;
    splats.reserve(tape.decoded.gaussians.size());
    for (std::size_t i = 0; i < tape.decoded.gaussians.size(); ++i) {
        if (auto s = project(tape.decoded.gaussians[i], cam)) {
            splats.push_back(*s);
            tape.splat_leaf.push_back(static_cast<std::uint32_t>(i));
        }
    }
    tape.output = rasterize(splats, cam, background);
    return tape;
}

RenderOutput render(const Model& model, const Camera& cam, const Eigen::Vector3d& background) {
    return render_with_tape(model, cam, background).output;
}

RenderOutput render_gaussians(std::span<const DecodedGaussian> gaussians, const Camera& cam,
                              const Eigen::Vector3d& background) {
    std::vector<Splat> splats;
    splats.reserve(gaussians.size());
    for (const auto& g : gaussians) {
        if (auto s = project(g, cam)) splats.push_back(*s);
    }
    return rasterize(splats, cam, background);
}

RenderGradient render_backward(const Model& model, const Camera& cam, const RenderTape& tape,
                               const Image& d_image) {
    const auto n_leaf = model.forest.leaves.size();
    if (tape.decoded.gaussians.size() != n_leaf) {
        throw ContractError("render_backward: tape does not match model");
    }
    const SplatGradients sg = rasterize_backward(tape.output, d_image);

    std::vector<GaussianGrad> gg(n_leaf);
    RenderGradient out;
    out.leaf_mean2d_grad.assign(n_leaf, Eigen::Vector2d::Zero());
    out.leaf_visible.assign(n_leaf, 0);
    for (std::size_t s = 0; s < tape.splat_leaf.size(); ++s) {
        const auto leaf = tape.splat_leaf[s];
        const SplatGrad& g = sg.grads[s];
        const ProjectionGrad pg =
            project_backward(tape.decoded.gaussians[leaf], cam, g.mean2d, g.cov2d_full());
        gg[leaf].mu = pg.mu;
        gg[leaf].sigma = pg.sigma;
        gg[leaf].alpha = g.alpha;
        gg[leaf].color = g.color;
        out.leaf_mean2d_grad[leaf] = g.mean2d;
        out.leaf_visible[leaf] = sg.touched[s];
    }
    out.model = ModelGradient::zeros(model.forest, model.decoders);
    decode_backward(model.forest, model.decoders, tape.decoded, gg, out.model);
    return out;
}

} // namespace gforest
