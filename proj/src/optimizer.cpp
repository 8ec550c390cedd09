#include "gforest/optimizer.hpp"
#include "gforest/errors.hpp"

#include <algorithm>
#include <cmath>

namespace gforest {

void MomentBuffer::extend(std::size_t rows) {
    if (rows < this->rows()) throw ContractError("moment buffer cannot shrink via extend");
    m_.resize(rows * width_, 0.0);
    v_.resize(rows * width_, 0.0);
}

void MomentBuffer::remap(const std::vector<std::uint32_t>& remap, std::size_t new_rows) {
    if (remap.size() != rows()) throw ContractError("moment remap size mismatch");
    std::vector<double> m(new_rows * width_, 0.0);
    std::vector<double> v(new_rows * width_, 0.0);
    for (std::size_t i = 0; i < remap.size(); ++i) {
        const auto j = remap[i];
        if (j == IndexRemap::kRemoved) continue;
        for (std::size_t k = 0; k < width_; ++k) {
            m[j * width_ + k] = m_[i * width_ + k];
            v[j * width_ + k] = v_[i * width_ + k];
        }
    }
    m_ = std::move(m);
    v_ = std::move(v);
}

double LearningRates::position_at(long iteration, long total) const {
    const double t = total <= 0 ? 1.0 : std::clamp(static_cast<double>(iteration) / total, 0.0, 1.0);
    return position_scale * std::exp((1.0 - t) * std::log(position) + t * std::log(position_final));
}

OptState OptState::for_model(const Model& model) {
    const auto& f = model.forest;
    OptState s;
    s.mu = MomentBuffer(f.leaves.size(), 3);
    s.log_gamma = MomentBuffer(f.leaves.size(), 1);
    s.alpha = MomentBuffer(f.leaves.size(), 1);
    s.internal = MomentBuffer(f.internals.size(), static_cast<std::size_t>(f.dims.internal));
    s.root = MomentBuffer(f.roots.size(), static_cast<std::size_t>(f.dims.root));
    s.mlp_cov = MomentBuffer(1, model.decoders.cov.parameter_count());
    s.mlp_rgb = MomentBuffer(1, model.decoders.rgb.parameter_count());
    return s;
}

void OptState::extend_to(const Model& model) {
    const auto& f = model.forest;
    mu.extend(f.leaves.size());
    log_gamma.extend(f.leaves.size());
    alpha.extend(f.leaves.size());
    internal.extend(f.internals.size());
    root.extend(f.roots.size());
}

void OptState::remap(const IndexRemap& r) {
    const auto count = [](const std::vector<std::uint32_t>& v) {
        std::size_t n = 0;
        for (const auto x : v) n += x != IndexRemap::kRemoved;
        return n;
    };
    const auto n_leaf = count(r.leaf);
    mu.remap(r.leaf, n_leaf);
    log_gamma.remap(r.leaf, n_leaf);
    alpha.remap(r.leaf, n_leaf);
    internal.remap(r.internal, count(r.internal));
    root.remap(r.root, count(r.root));
}

bool OptState::aligned(const Model& model) const {
    const auto& f = model.forest;
    return mu.rows() == f.leaves.size() && log_gamma.rows() == f.leaves.size() &&
           alpha.rows() == f.leaves.size() && internal.rows() == f.internals.size() &&
           root.rows() == f.roots.size() && internal.width() == static_cast<std::size_t>(f.dims.internal) &&
           root.width() == static_cast<std::size_t>(f.dims.root) &&
           mlp_cov.width() == model.decoders.cov.parameter_count() &&
           mlp_rgb.width() == model.decoders.rgb.parameter_count();
}

void OptState::apply(Model& model, const ModelGradient& grad, const LearningRates& lr,
                     double position_lr) {
    if (!aligned(model)) throw ContractError("optimizer state is not aligned with the model");
    ++step;
    const double b1 = 1.0 - std::pow(adam.beta1, static_cast<double>(step));
    const double b2 = 1.0 - std::pow(adam.beta2, static_cast<double>(step));
    auto& f = model.forest;

    for (std::size_t i = 0; i < f.leaves.size(); ++i) {
        auto& leaf = f.leaves[i];
        for (int k = 0; k < 3; ++k) {
            mu.update(i * 3 + static_cast<std::size_t>(k), leaf.mu[k], grad.mu[i][k], position_lr, b1, b2, adam);
        }
        log_gamma.update(i, leaf.log_gamma_s, grad.log_gamma_s[i], lr.log_gamma, b1, b2, adam);
        alpha.update(i, leaf.alpha_raw, grad.alpha_raw[i], lr.alpha, b1, b2, adam);
    }
    const auto di = static_cast<std::size_t>(f.dims.internal);
    for (std::size_t i = 0; i < f.internals.size(); ++i) {
        for (std::size_t k = 0; k < di; ++k) {
            internal.update(i * di + k, f.internals[i].features[static_cast<Eigen::Index>(k)],
                            grad.internal(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)),
                            lr.features, b1, b2, adam);
        }
    }
    const auto dr = static_cast<std::size_t>(f.dims.root);
    for (std::size_t i = 0; i < f.roots.size(); ++i) {
        for (std::size_t k = 0; k < dr; ++k) {
            root.update(i * dr + k, f.roots[i].features[static_cast<Eigen::Index>(k)],
                        grad.root(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)),
                        lr.features, b1, b2, adam);
        }
    }
    auto step_mlp = [&](Mlp& mlp, MomentBuffer& buf, const Eigen::VectorXd& g) {
        Eigen::VectorXd& p = mlp.mutable_parameters();
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            buf.update(static_cast<std::size_t>(k), p[k], g[k], lr.mlp, b1, b2, adam);
        }
    };
    step_mlp(model.decoders.cov, mlp_cov, grad.mlp_cov);
    step_mlp(model.decoders.rgb, mlp_rgb, grad.mlp_rgb);
}

} // namespace gforest
