#include "support.hpp"

#include "gforest/decoder.hpp"
#include "gforest/loss.hpp"
#include "gforest/optimizer.hpp"
#include "gforest/trainer.hpp"

#include <fmt/format.h>

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace gforest::testing {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double lo = -1.0, double hi = 1.0) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(rng, lo, hi);
    return v;
}

Image random_image(std::mt19937_64& rng, int w, int h, double lo = 0.0, double hi = 1.0) {
    Image img(w, h);
    for (auto& v : img.data) v = uniform(rng, lo, hi);
    return img;
}

double central_difference(double& x, double h, const std::function<double()>& f) {
    const double x0 = x;
    x = x0 + h;
    const double fp = f();
    x = x0 - h;
    const double fm = f();
    x = x0;
    return (fp - fm) / (2.0 * h);
}

// Runs `numeric` for every entry and records it against `analytic`. When
// `regime` is given, entries whose +-h perturbation changes it (a ReLU
// switching sides, say) are not differentiable there and are skipped.
void check_all(GradCheck& gc, const std::vector<double*>& params, const std::vector<double>& analytic,
               double h, const std::function<double()>& f, const std::string& label,
               const std::function<std::vector<char>()>& regime = {}) {
    std::vector<double> numeric(params.size());
    std::vector<char> smooth(params.size(), 1);
    double scale = 0.0;
    const std::vector<char> base = regime ? regime() : std::vector<char>{};
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (regime) {
            double& x = *params[i];
            const double x0 = x;
            x = x0 + h;
            const bool up = regime() == base;
            x = x0 - h;
            const bool down = regime() == base;
            x = x0;
            smooth[i] = up && down;
        }
        if (!smooth[i]) continue;
        numeric[i] = central_difference(*params[i], h, f);
        scale = std::max(scale, std::abs(numeric[i]));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (smooth[i]) {
            gc.add(analytic[i], numeric[i], scale, fmt::format("{}[{}]", label, i));
        } else {
            ++gc.skipped;
        }
    }
}

} // namespace

void GradCheck::add(double analytic, double numeric, double scale, const std::string& what) {
    const double denom = std::max({std::abs(numeric), kRelFloor * scale, 1e-12});
    const double rel = std::abs(analytic - numeric) / denom;
    ++checked;
    if (!(rel <= max_rel) && std::isfinite(max_rel)) {
        max_rel = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
        worst = fmt::format("{}: analytic {:.6e} numeric {:.6e}", what, analytic, numeric);
    }
}

Forest random_forest(std::mt19937_64& rng, std::size_t nr, std::size_t ni, std::size_t nl, FeatureDims dims) {
    Forest f(dims);
    auto pick = [&](std::size_t n) {
        return static_cast<std::uint32_t>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    };
    for (std::size_t r = 0; r < nr; ++r) f.roots.push_back({random_vector(rng, dims.root)});
    for (std::size_t i = 0; i < ni; ++i) {
        f.internals.push_back({random_vector(rng, dims.internal), i < nr ? static_cast<std::uint32_t>(i) : pick(nr)});
    }
    for (std::size_t l = 0; l < nl; ++l) {
        LeafNode leaf;
        leaf.mu = random_vector(rng, 3);
        leaf.log_gamma_s = std::log(uniform(rng, 0.05, 0.3));
        leaf.alpha_raw = uniform(rng, -1.0, 2.0);
        leaf.parent = l < ni ? static_cast<std::uint32_t>(l) : pick(ni);
        f.leaves.push_back(leaf);
    }
    std::shuffle(f.leaves.begin(), f.leaves.end(), rng);
    return f;
}

Model random_model(std::mt19937_64& rng, std::size_t nr, std::size_t ni, std::size_t nl, FeatureDims dims,
                   double spread) {
    Model m{random_forest(rng, nr, ni, nl, dims), Decoders::create(dims, rng)};
    for (auto& leaf : m.forest.leaves) {
        leaf.mu = random_vector(rng, 3, -spread, spread);
        leaf.log_gamma_s = std::log(uniform(rng, 0.15, 0.4));
        leaf.alpha_raw = uniform(rng, -1.0, 1.0);
    }
    for (auto* mlp : {&m.decoders.cov, &m.decoders.rgb}) {
        Eigen::VectorXd& p = mlp->mutable_parameters();
        for (int l = 0; l < mlp->layer_count(); ++l) {
            // Biases start at zero; give them some spread so ReLUs are not
            // all switched by the same inputs.
            const auto w = mlp->weight(l);
            const std::size_t bias_at = static_cast<std::size_t>(w.data() - p.data()) + w.size();
            for (int k = 0; k < mlp->layer_out(l); ++k) p[static_cast<Eigen::Index>(bias_at) + k] = uniform(rng, -0.1, 0.1);
        }
    }
    return m;
}

Camera test_camera(int width, int height, double focal_factor) {
    return Camera::look_at(Eigen::Vector3d(0.0, 0.0, -3.0), Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitY(),
                           focal_factor * width, width, height);
}

Forest rebuild_oracle(const Forest& forest, std::span<const std::uint32_t> doomed) {
    std::vector<char> dead(forest.leaves.size(), 0);
    for (const auto d : doomed) dead.at(d) = 1;

    std::vector<char> keep_internal(forest.internals.size(), 0);
    for (std::size_t l = 0; l < forest.leaves.size(); ++l) {
        if (!dead[l]) keep_internal.at(forest.leaves[l].parent) = 1;
    }
    std::vector<char> keep_root(forest.roots.size(), 0);
    for (std::size_t i = 0; i < forest.internals.size(); ++i) {
        if (keep_internal[i]) keep_root.at(forest.internals[i].parent) = 1;
    }

    std::vector<std::uint32_t> new_root(forest.roots.size(), 0);
    std::vector<std::uint32_t> new_internal(forest.internals.size(), 0);
    Forest out(forest.dims);
    for (std::size_t r = 0; r < forest.roots.size(); ++r) {
        if (!keep_root[r]) continue;
        new_root[r] = static_cast<std::uint32_t>(out.roots.size());
        out.roots.push_back(forest.roots[r]);
    }
    for (std::size_t i = 0; i < forest.internals.size(); ++i) {
        if (!keep_internal[i]) continue;
        new_internal[i] = static_cast<std::uint32_t>(out.internals.size());
        InternalNode n = forest.internals[i];
        n.parent = new_root[n.parent];
        out.internals.push_back(n);
    }
    for (std::size_t l = 0; l < forest.leaves.size(); ++l) {
        if (dead[l]) continue;
        LeafNode leaf = forest.leaves[l];
        leaf.parent = new_internal[leaf.parent];
        out.leaves.push_back(leaf);
    }
    return out;
}

bool forests_equal(const Forest& a, const Forest& b) {
    if (!(a.dims == b.dims) || a.roots.size() != b.roots.size() || a.internals.size() != b.internals.size() ||
        a.leaves.size() != b.leaves.size()) {
        return false;
    }
    for (std::size_t r = 0; r < a.roots.size(); ++r) {
        if (a.roots[r].features != b.roots[r].features) return false;
    }
    for (std::size_t i = 0; i < a.internals.size(); ++i) {
        if (a.internals[i].features != b.internals[i].features || a.internals[i].parent != b.internals[i].parent) {
            return false;
        }
    }
    for (std::size_t l = 0; l < a.leaves.size(); ++l) {
        const auto& x = a.leaves[l];
        const auto& y = b.leaves[l];
        if (x.mu != y.mu || x.log_gamma_s != y.log_gamma_s || x.alpha_raw != y.alpha_raw || x.parent != y.parent) {
            return false;
        }
    }
    return true;
}

Image brute_force_composite(std::span<const Splat> splats, const Camera& cam, const Eigen::Vector3d& background) {
    std::vector<std::size_t> order(splats.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
        return a < b;
    });
    Image img(cam.width, cam.height);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            double t = 1.0;
            Eigen::Vector3d c = Eigen::Vector3d::Zero();
            for (const auto i : order) {
                const Splat& s = splats[i];
                if (!(s.cov2d.determinant() > 0.0)) continue;
                const Eigen::Matrix2d inv = s.cov2d.inverse();
                const Eigen::Vector2d d(x - s.mean2d.x(), y - s.mean2d.y());
                const double g = std::exp(-0.5 * d.dot(inv * d));
                const double a = std::min(0.99, s.alpha * g);
                if (a < 1.0 / 255.0) continue;
                c += a * t * s.color;
                t *= 1.0 - a;
                if (t < 1e-4) break;
            }
            for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = c[ch] + t * background[ch];
        }
    }
    return img;
}

GradCheck check_mlp_gradients(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Mlp mlp(5, 4);
    mlp.init_glorot(rng);
    Eigen::VectorXd& p = mlp.mutable_parameters();
    p += random_vector(rng, p.size(), -0.05, 0.05);
    Eigen::MatrixXd x(5, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform(rng, -1.0, 1.0);
    Eigen::MatrixXd dy(4, 3);
    for (Eigen::Index i = 0; i < dy.size(); ++i) dy.data()[i] = uniform(rng, -1.0, 1.0);

    Eigen::VectorXd dparams;
    const Eigen::MatrixXd dx = mlp.backward(mlp.forward(x), dy, dparams);
    auto f = [&] { return (mlp.forward(x).output.array() * dy.array()).sum(); };
    auto relu_pattern = [&] {
        std::vector<char> on;
        for (const auto& hidden : mlp.forward(x).hidden) {
            for (Eigen::Index i = 0; i < hidden.size(); ++i) on.push_back(hidden.data()[i] > 0.0);
        }
        return on;
    };

    GradCheck gc;
    std::vector<double*> params;
    std::vector<double> analytic;
    Eigen::VectorXd& q = mlp.mutable_parameters();
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        params.push_back(&q[i]);
        analytic.push_back(dparams[i]);
    }
    check_all(gc, params, analytic, 1e-5, f, "mlp.param", relu_pattern);
    params.clear();
    analytic.clear();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        params.push_back(x.data() + i);
        analytic.push_back(dx.data()[i]);
    }
    check_all(gc, params, analytic, 1e-5, f, "mlp.x", relu_pattern);
    return gc;
}

GradCheck check_decode_gradients(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Model m = random_model(rng, 2, 3, 6, FeatureDims{6, 4}, 1.0);
    const Eigen::Vector3d center(0.3, -0.2, -3.0);
    const std::size_t n = m.forest.leaves.size();

    std::vector<GaussianGrad> gg(n);
    for (auto& g : gg) {
        g.mu = random_vector(rng, 3);
        g.sigma = Eigen::Matrix3d::NullaryExpr([&] { return uniform(rng, -1.0, 1.0); });
        g.alpha = uniform(rng, -1.0, 1.0);
        g.color = random_vector(rng, 3);
    }
    auto f = [&] {
        const auto gs = decode_all(m.forest, m.decoders, center);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            v += gg[i].mu.dot(gs[i].mu) + (gg[i].sigma.array() * gs[i].sigma.array()).sum() +
                 gg[i].alpha * gs[i].alpha + gg[i].color.dot(gs[i].color);
        }
        return v;
    };
    const DecodeResult decoded = decode_forest(m.forest, m.decoders, center);
    ModelGradient grad = ModelGradient::zeros(m.forest, m.decoders);
    decode_backward(m.forest, m.decoders, decoded, gg, grad);

    GradCheck gc;
    std::vector<double*> params;
    std::vector<double> analytic;
    for (std::size_t l = 0; l < n; ++l) {
        auto& leaf = m.forest.leaves[l];
        for (int k = 0; k < 3; ++k) {
            params.push_back(&leaf.mu[k]);
            analytic.push_back(grad.mu[l][k]);
        }
        params.push_back(&leaf.log_gamma_s);
        analytic.push_back(grad.log_gamma_s[l]);
        params.push_back(&leaf.alpha_raw);
        analytic.push_back(grad.alpha_raw[l]);
    }
    check_all(gc, params, analytic, 1e-6, f, "decode.leaf");
    params.clear();
    analytic.clear();
    for (std::size_t i = 0; i < m.forest.internals.size(); ++i) {
        for (Eigen::Index k = 0; k < m.forest.internals[i].features.size(); ++k) {
            params.push_back(&m.forest.internals[i].features[k]);
            analytic.push_back(grad.internal(k, static_cast<Eigen::Index>(i)));
        }
    }
    for (std::size_t r = 0; r < m.forest.roots.size(); ++r) {
        for (Eigen::Index k = 0; k < m.forest.roots[r].features.size(); ++k) {
            params.push_back(&m.forest.roots[r].features[k]);
            analytic.push_back(grad.root(k, static_cast<Eigen::Index>(r)));
        }
    }
    check_all(gc, params, analytic, 1e-6, f, "decode.features");
    for (auto [mlp, g, label] : {std::tuple{&m.decoders.cov, &grad.mlp_cov, "decode.mlp_cov"},
                                 std::tuple{&m.decoders.rgb, &grad.mlp_rgb, "decode.mlp_rgb"}}) {
        params.clear();
        analytic.clear();
        Eigen::VectorXd& p = mlp->mutable_parameters();
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            params.push_back(&p[i]);
            analytic.push_back((*g)[i]);
        }
        check_all(gc, params, analytic, 1e-6, f, label);
    }
    return gc;
}

GradCheck check_projection_gradients(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Camera cam = Camera::look_at(Eigen::Vector3d(uniform(rng, -1, 1), uniform(rng, -1, 1), -3.0),
                                       Eigen::Vector3d(uniform(rng, -0.2, 0.2), uniform(rng, -0.2, 0.2), 0.0),
                                       Eigen::Vector3d::UnitY(), 40.0, 32, 24);
    DecodedGaussian g;
    g.mu = random_vector(rng, 3, -0.5, 0.5);
    g.s = random_vector(rng, 3, 0.05, 0.3);
    g.q = random_vector(rng, 4).normalized();
    g.sigma = build_covariance(g.s, g.q);
    const Eigen::Vector2d a = random_vector(rng, 2);
    const Eigen::Matrix2d b = Eigen::Matrix2d::NullaryExpr([&] { return uniform(rng, -1.0, 1.0); });

    auto f = [&] {
        const auto s = project(g, cam);
        if (!s) return 0.0;
        return a.dot(s->mean2d) + (b.array() * s->cov2d.array()).sum();
    };
    const ProjectionGrad pg = project_backward(g, cam, a, b);
    GradCheck gc;
    std::vector<double*> params;
    std::vector<double> analytic;
    for (int k = 0; k < 3; ++k) {
        params.push_back(&g.mu[k]);
        analytic.push_back(pg.mu[k]);
    }
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            params.push_back(&g.sigma(r, c));
            analytic.push_back(pg.sigma(r, c));
        }
    }
    check_all(gc, params, analytic, 1e-6, f, "project");
    return gc;
}

GradCheck check_raster_gradients(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Camera cam = test_camera(16, 16);
    std::vector<Splat> splats(static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 4)(rng)));
    for (auto& s : splats) {
        s.mean2d = random_vector(rng, 2, 2.0, 14.0);
        const double sx = uniform(rng, 1.5, 4.0);
        const double sy = uniform(rng, 1.5, 4.0);
        const double rho = uniform(rng, -0.6, 0.6);
        s.cov2d << sx * sx, rho * sx * sy, rho * sx * sy, sy * sy;
        s.depth = uniform(rng, 1.0, 5.0);
        s.color = random_vector(rng, 3, 0.0, 1.0);
        s.alpha = uniform(rng, 0.2, 0.9);
    }
    const Eigen::Vector3d bg = random_vector(rng, 3, 0.0, 1.0);
    const Image d_image = random_image(rng, 16, 16, -1.0, 1.0);

    auto f = [&] {
        const RenderOutput out = rasterize(splats, cam, bg);
        double v = 0.0;
        for (std::size_t i = 0; i < out.image.data.size(); ++i) v += out.image.data[i] * d_image.data[i];
        return v;
    };
    const RenderOutput out = rasterize(splats, cam, bg);
    const SplatGradients sg = rasterize_backward(out, d_image);

    GradCheck gc;
    std::vector<double*> params;
    std::vector<double> analytic;
    for (std::size_t i = 0; i < splats.size(); ++i) {
        Splat& s = splats[i];
        const SplatGrad& g = sg.grads[i];
        for (int k = 0; k < 2; ++k) {
            params.push_back(&s.mean2d[k]);
            analytic.push_back(g.mean2d[k]);
        }
        for (int k = 0; k < 3; ++k) {
            params.push_back(&s.color[k]);
            analytic.push_back(g.color[k]);
        }
        params.push_back(&s.alpha);
        analytic.push_back(g.alpha);
        params.push_back(&s.cov2d(0, 0));
        analytic.push_back(g.cov2d[0]);
        params.push_back(&s.cov2d(1, 1));
        analytic.push_back(g.cov2d[2]);
    }
    check_all(gc, params, analytic, 1e-6, f, "raster");
    // The off-diagonal is one shared scalar: perturb both entries together.
    std::vector<double> numeric(splats.size());
    double scale = 0.0;
    for (std::size_t i = 0; i < splats.size(); ++i) {
        Splat& s = splats[i];
        const double b0 = s.cov2d(0, 1);
        const double h = 1e-6;
        s.cov2d(0, 1) = s.cov2d(1, 0) = b0 + h;
        const double fp = f();
        s.cov2d(0, 1) = s.cov2d(1, 0) = b0 - h;
        const double fm = f();
        s.cov2d(0, 1) = s.cov2d(1, 0) = b0;
        numeric[i] = (fp - fm) / (2.0 * h);
        scale = std::max(scale, std::abs(numeric[i]));
    }
    for (std::size_t i = 0; i < splats.size(); ++i) {
        gc.add(sg.grads[i].cov2d[1], numeric[i], scale, fmt::format("raster.cov_b[{}]", i));
    }
    return gc;
}

GradCheck check_loss_gradients(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Image rendered = random_image(rng, 8, 8);
    const Image target = random_image(rng, 8, 8);
    const double lambda = 0.2;
    const LossResult res = photometric_loss(rendered, target, lambda);

    GradCheck gc;
    std::vector<double*> params;
    std::vector<double> analytic;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        params.push_back(&rendered.data[i]);
        analytic.push_back(res.gradient.data[i]);
    }
    check_all(gc, params, analytic, 1e-6, [&] { return photometric_loss(rendered, target, lambda).value; },
              "loss");
    return gc;
}

GradCheck check_pipeline_gradients(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Model m = random_model(rng, 1, 2, 3, FeatureDims{24, 16}, 0.4);
    const Camera cam = test_camera(16, 16);
    const Eigen::Vector3d bg = random_vector(rng, 3, 0.0, 1.0);
    const Image target = random_image(rng, 16, 16);
    const double lambda = 0.2;

    auto f = [&] { return photometric_loss(render(m, cam, bg).image, target, lambda).value; };
    const RenderTape tape = render_with_tape(m, cam, bg);
    const LossResult loss = photometric_loss(tape.output.image, target, lambda);
    const RenderGradient rg = render_backward(m, cam, tape, loss.gradient);
    const ModelGradient& grad = rg.model;

    GradCheck gc;
    std::vector<double*> params;
    std::vector<double> analytic;
    for (std::size_t l = 0; l < m.forest.leaves.size(); ++l) {
        auto& leaf = m.forest.leaves[l];
        for (int k = 0; k < 3; ++k) {
            params.push_back(&leaf.mu[k]);
            analytic.push_back(grad.mu[l][k]);
        }
        params.push_back(&leaf.log_gamma_s);
        analytic.push_back(grad.log_gamma_s[l]);
        params.push_back(&leaf.alpha_raw);
        analytic.push_back(grad.alpha_raw[l]);
    }
    check_all(gc, params, analytic, 1e-6, f, "pipeline.leaf");
    params.clear();
    analytic.clear();
    for (std::size_t i = 0; i < m.forest.internals.size(); ++i) {
        for (Eigen::Index k = 0; k < m.forest.internals[i].features.size(); ++k) {
            params.push_back(&m.forest.internals[i].features[k]);
            analytic.push_back(grad.internal(k, static_cast<Eigen::Index>(i)));
        }
    }
    for (std::size_t r = 0; r < m.forest.roots.size(); ++r) {
        for (Eigen::Index k = 0; k < m.forest.roots[r].features.size(); ++k) {
            params.push_back(&m.forest.roots[r].features[k]);
            analytic.push_back(grad.root(k, static_cast<Eigen::Index>(r)));
        }
    }
    check_all(gc, params, analytic, 1e-6, f, "pipeline.features");
    for (auto [mlp, g, label] : {std::tuple{&m.decoders.cov, &grad.mlp_cov, "pipeline.mlp_cov"},
                                 std::tuple{&m.decoders.rgb, &grad.mlp_rgb, "pipeline.mlp_rgb"}}) {
        params.clear();
        analytic.clear();
        Eigen::VectorXd& p = mlp->mutable_parameters();
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            params.push_back(&p[i]);
            analytic.push_back((*g)[i]);
        }
        check_all(gc, params, analytic, 1e-6, f, label);
    }
    return gc;
}

FuzzResult structure_fuzz(std::uint64_t seed, std::size_t steps) {
    std::mt19937_64 rng(seed);
    const FeatureDims dims{6, 4};
    auto fresh = [&] {
        const std::size_t nr = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
        const std::size_t ni = nr + std::uniform_int_distribution<std::size_t>(0, 8)(rng);
        const std::size_t nl = ni + std::uniform_int_distribution<std::size_t>(0, 30)(rng);
        return random_model(rng, nr, ni, nl, dims, 1.0);
    };
    Model m = fresh();
    OptState opt = OptState::for_model(m);
    CgAccumulator cg(m.forest.leaves.size());

    TrainConfig cfg;
    cfg.stop_root = 50;
    cfg.stop_internal = 100;
    cfg.stop_leaf = 150;

    FuzzResult res;
    auto fail = [&](std::size_t& counter, const std::string& what) {
        ++counter;
        if (res.first_failure.empty()) res.first_failure = fmt::format("step {}: {}", res.steps, what);
    };
    auto doomed_by_threshold = [&] {
        std::vector<std::uint32_t> d;
        for (std::uint32_t i = 0; i < m.forest.leaves.size(); ++i) {
            const auto& leaf = m.forest.leaves[i];
            if (leaf.opacity() < cfg.prune_alpha || leaf.gamma_s() < cfg.prune_scale) d.push_back(i);
        }
        return d;
    };

    for (std::size_t step = 0; step < steps; ++step) {
        res.steps = step + 1;
        if (m.forest.leaves.empty()) {
            m = fresh();
            opt = OptState::for_model(m);
            cg.reset(m.forest.leaves.size());
        }
        const std::size_t n = m.forest.leaves.size();
        int action = std::uniform_int_distribution<int>(0, 2)(rng);
        if (n > 200 && action == 0) action = 1 + std::uniform_int_distribution<int>(0, 1)(rng);

        if (action == 0) {
            for (std::size_t i = 0; i < n; ++i) {
                const double v = std::pow(10.0, uniform(rng, -4.5, -2.5));
                cg.set(i, v, 1);
            }
            const long iter = std::uniform_int_distribution<long>(0, 200)(rng);
            grow(m, cg, opt, iter, cfg, rng);
            if (cg.size() != m.forest.leaves.size()) fail(res.misaligned, "accumulator after grow");
        } else if (action == 1) {
            for (auto& leaf : m.forest.leaves) {
                const double u = uniform(rng, 0.0, 1.0);
                if (u < 0.1) leaf.alpha_raw = -6.0;
                else if (u < 0.2) leaf.log_gamma_s = std::log(1e-4);
            }
            const Forest before = m.forest;
            const auto doomed = doomed_by_threshold();
            const Forest expected = rebuild_oracle(before, doomed);
            prune(m, opt, cg, cfg, static_cast<long>(step));
            if (!forests_equal(m.forest, expected)) fail(res.oracle_mismatches, "prune differs from rebuild");
        } else {
            std::vector<std::uint32_t> doomed;
            const double p = uniform(rng, 0.0, 0.5);
            for (std::uint32_t i = 0; i < n; ++i) {
                if (uniform(rng, 0.0, 1.0) < p) doomed.push_back(i);
            }
            const Forest expected = rebuild_oracle(m.forest, doomed);
            const IndexRemap remap = remove_leaves_and_compact(m.forest, doomed);
            opt.remap(remap);
            cg.remap(remap.leaf, m.forest.leaves.size());
            if (!forests_equal(m.forest, expected)) fail(res.oracle_mismatches, "compaction differs from rebuild");
        }

        const ValidationReport report = validate(m.forest);
        if (!report.clean()) fail(res.validate_failures, report.summary());
        if (!opt.aligned(m) || cg.size() != m.forest.leaves.size()) fail(res.misaligned, "optimizer state");
    }
    return res;
}

} // namespace gforest::testing
