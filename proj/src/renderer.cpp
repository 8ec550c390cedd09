#include "gforest/renderer.hpp"
#include "gforest/errors.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gforest {

namespace {

Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d& t, const Camera& cam) {
    const double iz = 1.0 / t.z();
    const double iz2 = iz * iz;
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx * iz, 0.0, -cam.fx * t.x() * iz2, 0.0, cam.fy * iz, -cam.fy * t.y() * iz2;
    return j;
}

struct PixelHit {
    std::uint32_t splat;
    double alpha;   // effective alpha after the cap
    double transmittance;
    bool capped;
};

} // namespace

std::optional<Splat> project(const DecodedGaussian& g, const Camera& cam) {
    const Eigen::Vector3d t = cam.rotation * g.mu + cam.translation;
    if (!(t.z() > kNearPlane)) return std::nullopt;

    Splat s;
    s.mean2d = {cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy};
    const double half_w = 0.5 * cam.width;
    const double half_h = 0.5 * cam.height;
    if (std::abs(s.mean2d.x() - half_w) > kCullMargin * half_w ||
        std::abs(s.mean2d.y() - half_h) > kCullMargin * half_h) {
        return std::nullopt;
    }
    const Eigen::Matrix<double, 2, 3> tm = projection_jacobian(t, cam) * cam.rotation;
    s.cov2d = tm * g.sigma * tm.transpose();
    s.cov2d(0, 0) += kLowPassDilation;
    s.cov2d(1, 1) += kLowPassDilation;
    s.depth = t.z();
    s.color = g.color;
    s.alpha = g.alpha;
    return s;
}

ProjectionGrad project_backward(const DecodedGaussian& g, const Camera& cam,
                                const Eigen::Vector2d& d_mean2d, const Eigen::Matrix2d& d_cov2d) {
    const Eigen::Vector3d t = cam.rotation * g.mu + cam.translation;
    const Eigen::Matrix<double, 2, 3> j = projection_jacobian(t, cam);
    const Eigen::Matrix<double, 2, 3> tm = j * cam.rotation;
    const Eigen::Matrix2d gs = 0.5 * (d_cov2d + d_cov2d.transpose());

    ProjectionGrad out;
    out.sigma = tm.transpose() * d_cov2d * tm;
    const Eigen::Matrix<double, 2, 3> d_tm = 2.0 * gs * tm * g.sigma;
    const Eigen::Matrix<double, 2, 3> d_j = d_tm * cam.rotation.transpose();

    const double iz = 1.0 / t.z();
    const double iz2 = iz * iz;
    const double iz3 = iz2 * iz;
    Eigen::Vector3d d_t;
    d_t.x() = d_mean2d.x() * cam.fx * iz - d_j(0, 2) * cam.fx * iz2;
    d_t.y() = d_mean2d.y() * cam.fy * iz - d_j(1, 2) * cam.fy * iz2;
    d_t.z() = -d_mean2d.x() * cam.fx * t.x() * iz2 - d_mean2d.y() * cam.fy * t.y() * iz2 -
              d_j(0, 0) * cam.fx * iz2 + d_j(0, 2) * 2.0 * cam.fx * t.x() * iz3 -
              d_j(1, 1) * cam.fy * iz2 + d_j(1, 2) * 2.0 * cam.fy * t.y() * iz3;
    out.mu = cam.rotation.transpose() * d_t;
    return out;
}

RenderOutput rasterize(std::span<const Splat> splats, const Camera& cam,
                       const Eigen::Vector3d& background) {
    cam.check();
    const int w = cam.width;
    const int h = cam.height;

    RenderOutput out;
    out.background = background;
    out.splats.assign(splats.begin(), splats.end());
    out.image = Image::filled(w, h, background);
    out.final_transmittance.assign(static_cast<std::size_t>(w) * h, 1.0);
    out.processed.assign(static_cast<std::size_t>(w) * h, 0);
    out.touched.assign(splats.size(), 0);
    out.conic.assign(splats.size(), Eigen::Matrix2d::Zero());
    out.usable.assign(splats.size(), 0);
    out.tiles_x = (w + kTileSize - 1) / kTileSize;
    out.tiles_y = (h + kTileSize - 1) / kTileSize;
    out.tile_lists.assign(static_cast<std::size_t>(out.tiles_x) * out.tiles_y, {});

    std::vector<std::uint32_t> order(splats.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return splats[a].depth < splats[b].depth;
    });

    for (const auto id : order) {
        const Splat& s = splats[id];
        const double det = s.cov2d.determinant();
        if (!s.cov2d.allFinite() || !s.mean2d.allFinite() || !(det > 0.0) ||
            !(s.cov2d(0, 0) > 0.0)) {
            ++out.skipped_singular;
            continue;
        }
        // The splat can only contribute where alpha * G >= kMinSplatAlpha.
        if (!(s.alpha * 255.0 > 1.0)) continue;
        out.conic[id] = s.cov2d.inverse();
        out.usable[id] = 1;

        const double r2 = 2.0 * std::log(s.alpha * 255.0) * (1.0 + 1e-9) + 1e-9;
        const double ex = std::sqrt(r2 * s.cov2d(0, 0));
        const double ey = std::sqrt(r2 * s.cov2d(1, 1));
        const int x0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.x() - ex)));
        const int x1 = std::min(w - 1, static_cast<int>(std::floor(s.mean2d.x() + ex)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.y() - ey)));
        const int y1 = std::min(h - 1, static_cast<int>(std::floor(s.mean2d.y() + ey)));
        if (x0 > x1 || y0 > y1) continue;
        for (int ty = y0 / kTileSize; ty <= y1 / kTileSize; ++ty) {
            for (int tx = x0 / kTileSize; tx <= x1 / kTileSize; ++tx) {
                out.tile_lists[static_cast<std::size_t>(ty) * out.tiles_x + tx].push_back(id);
            }
        }
    }

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto& list =
                out.tile_lists[static_cast<std::size_t>(y / kTileSize) * out.tiles_x + x / kTileSize];
            const std::size_t pix = static_cast<std::size_t>(y) * w + x;
            double t = 1.0;
            Eigen::Vector3d c = Eigen::Vector3d::Zero();
            std::uint32_t visited = 0;
            for (const auto id : list) {
                ++visited;
                const Splat& s = out.splats[id];
                const Eigen::Matrix2d& k = out.conic[id];
                const double dx = x - s.mean2d.x();
                const double dy = y - s.mean2d.y();
                const double power = -0.5 * (k(0, 0) * dx * dx + 2.0 * k(0, 1) * dx * dy + k(1, 1) * dy * dy);
                const double a = std::min(kMaxSplatAlpha, s.alpha * std::exp(power));
                if (a < kMinSplatAlpha) continue;
                out.touched[id] = 1;
                c += s.color * (a * t);
                t *= 1.0 - a;
                if (t < kMinTransmittance) break;
            }
            out.processed[pix] = visited;
            out.final_transmittance[pix] = t;
            for (int ch = 0; ch < 3; ++ch) out.image.at(x, y, ch) = c[ch] + t * background[ch];
        }
    }
    return out;
}

SplatGradients rasterize_backward(const RenderOutput& output, const Image& d_image) {
    if (!d_image.same_shape(output.image)) {
        throw ContractError("rasterize_backward: gradient image shape mismatch");
    }
    const int w = output.image.width;
    const int h = output.image.height;
    const std::size_t n = output.splats.size();

    SplatGradients out;
    out.grads.assign(n, SplatGrad{});
    out.mean2d_norm.assign(n, 0.0);
    out.touched = output.touched;

    // Gradients w.r.t. the conic, accumulated as (A, B, C) with B shared.
    std::vector<Eigen::Vector3d> d_conic(n, Eigen::Vector3d::Zero());
    std::vector<PixelHit> hits;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * w + x;
            const Eigen::Vector3d d_pix(d_image.at(x, y, 0), d_image.at(x, y, 1), d_image.at(x, y, 2));
            if (d_pix.isZero(0.0)) continue;
            const auto& list =
                output.tile_lists[static_cast<std::size_t>(y / kTileSize) * output.tiles_x + x / kTileSize];

            hits.clear();
            double t = 1.0;
            for (std::uint32_t e = 0; e < output.processed[pix]; ++e) {
                const auto id = list[e];
                const Splat& s = output.splats[id];
                const Eigen::Matrix2d& k = output.conic[id];
                const double dx = x - s.mean2d.x();
                const double dy = y - s.mean2d.y();
                const double power = -0.5 * (k(0, 0) * dx * dx + 2.0 * k(0, 1) * dx * dy + k(1, 1) * dy * dy);
                const double raw = s.alpha * std::exp(power);
                const double a = std::min(kMaxSplatAlpha, raw);
                if (a < kMinSplatAlpha) continue;
                hits.push_back({id, a, t, raw > kMaxSplatAlpha});
                t *= 1.0 - a;
            }

            // acc = sum over later splats of c a T, plus T_final * background.
            Eigen::Vector3d acc = output.final_transmittance[pix] * output.background;
            for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
                const Splat& s = output.splats[it->splat];
                SplatGrad& g = out.grads[it->splat];
                g.color += d_pix * (it->alpha * it->transmittance);
                const double d_a = d_pix.dot(s.color * it->transmittance - acc / (1.0 - it->alpha));
                acc += s.color * (it->alpha * it->transmittance);
                if (it->capped) continue;

                const double gauss = it->alpha / s.alpha;
                g.alpha += d_a * gauss;
                const double d_power = d_a * it->alpha;
                const Eigen::Matrix2d& k = output.conic[it->splat];
                const double dx = x - s.mean2d.x();
                const double dy = y - s.mean2d.y();
                g.mean2d.x() += d_power * (k(0, 0) * dx + k(0, 1) * dy);
                g.mean2d.y() += d_power * (k(0, 1) * dx + k(1, 1) * dy);
                d_conic[it->splat] += d_power * Eigen::Vector3d(-0.5 * dx * dx, -dx * dy, -0.5 * dy * dy);
            }
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (!output.usable[i]) continue;
        const Eigen::Matrix2d& k = output.conic[i];
        Eigen::Matrix2d gk;
        gk << d_conic[i][0], 0.5 * d_conic[i][1], 0.5 * d_conic[i][1], d_conic[i][2];
        const Eigen::Matrix2d m = -k * gk * k;
        out.grads[i].cov2d = {m(0, 0), m(0, 1) + m(1, 0), m(1, 1)};
        out.mean2d_norm[i] = out.grads[i].mean2d.norm();
    }
    return out;
}

} // namespace gforest
