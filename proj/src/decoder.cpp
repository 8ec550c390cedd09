#include "gforest/decoder.hpp"
#include "gforest/errors.hpp"
#include "gforest/sh.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <cmath>

namespace gforest {

namespace {

constexpr double kTinyNorm = 1e-12;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// d<dR, R(q)>/dq for a unit quaternion q = (w, x, y, z).
Quat rotation_vjp(const Eigen::Matrix3d& dr, const Quat& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Quat dq;
    dq[0] = 2.0 * (z * (dr(1, 0) - dr(0, 1)) + y * (dr(0, 2) - dr(2, 0)) + x * (dr(2, 1) - dr(1, 2)));
    dq[1] = 2.0 * (y * (dr(1, 0) + dr(0, 1)) + z * (dr(2, 0) + dr(0, 2)) + w * (dr(2, 1) - dr(1, 2))) -
            4.0 * x * (dr(1, 1) + dr(2, 2));
    dq[2] = 2.0 * (x * (dr(1, 0) + dr(0, 1)) + w * (dr(0, 2) - dr(2, 0)) + z * (dr(1, 2) + dr(2, 1))) -
            4.0 * y * (dr(0, 0) + dr(2, 2));
    dq[3] = 2.0 * (w * (dr(1, 0) - dr(0, 1)) + x * (dr(0, 2) + dr(2, 0)) + y * (dr(1, 2) + dr(2, 1))) -
            4.0 * z * (dr(0, 0) + dr(1, 1));
    return dq;
}

void warn_fallback_once() {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
        spdlog::warn("decoder produced a zero-norm quaternion; using identity rotation");
    }
}

} // namespace

Decoders Decoders::create(FeatureDims dims, std::mt19937_64& rng, int hidden_dim, int n_hidden) {
    Decoders d{Mlp(dims.total(), kCovOutputs, hidden_dim, n_hidden),
               Mlp(dims.total() + kShBasisSize, kRgbOutputs, hidden_dim, n_hidden)};
    d.cov.init_glorot(rng);
    d.rgb.init_glorot(rng);
    return d;
}

CovDecode cov_from_raw(const Eigen::Ref<const Eigen::VectorXd>& raw, double gamma_s) {
    if (raw.size() != kCovOutputs) throw ContractError("covariance decoder must emit 7 values");
    CovDecode out;
    for (int k = 0; k < 3; ++k) out.s[k] = gamma_s * sigmoid(raw[k]);
    const Quat q_raw = raw.segment<4>(3);
    const double n = q_raw.norm();
    if (n < kTinyNorm || !std::isfinite(n)) {
        out.q = Quat(1.0, 0.0, 0.0, 0.0);
        out.fallback = true;
        warn_fallback_once();
    } else {
        out.q = q_raw / n;
    }
    return out;
}

CovDecode decode_cov(const Eigen::VectorXd& features, double gamma_s, const Mlp& mlp_cov) {
    if (mlp_cov.output_dim() != kCovOutputs) {
        throw ContractError("covariance decoder must emit 7 values");
    }
    const MlpTape tape = mlp_cov.eval(features);
    return cov_from_raw(tape.output.col(0), gamma_s);
}

Eigen::Matrix3d rotation_from_quaternion(const Quat& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Eigen::Matrix3d build_covariance(const Eigen::Vector3d& s, const Quat& q) {
    const Eigen::Matrix3d m = rotation_from_quaternion(q) * s.asDiagonal();
    return m * m.transpose();
}

Eigen::Vector3d view_direction(const Eigen::Vector3d& mu, const Eigen::Vector3d& camera_center) {
    const Eigen::Vector3d d = mu - camera_center;
    const double n = d.norm();
    if (n < kTinyNorm) return Eigen::Vector3d::UnitZ();
    return d / n;
}

Eigen::Vector3d decode_rgb(const Eigen::VectorXd& features, const Eigen::Vector3d& dir,
                           const Mlp& mlp_rgb) {
    Eigen::Vector3d d = dir;
    const double n = d.norm();
    if (std::abs(n - 1.0) > 1e-9) {
        static std::atomic<bool> warned{false};
        if (!warned.exchange(true)) spdlog::warn("decode_rgb: normalizing non-unit direction");
        d = n < kTinyNorm ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d(d / n);
    }
    Eigen::VectorXd x(features.size() + kShBasisSize);
    x.head(features.size()) = features;
    x.tail<kShBasisSize>() = sh_basis(d);
    const MlpTape tape = mlp_rgb.eval(x);
    Eigen::Vector3d c;
    for (int k = 0; k < 3; ++k) c[k] = sigmoid(tape.output(k, 0));
    return c;
}

DecodeResult decode_forest(const Forest& forest, const Decoders& decoders,
                           const Eigen::Vector3d& camera_center) {
    const auto dims = forest.dims;
    const auto n_int = static_cast<Eigen::Index>(forest.internals.size());
    const auto n_leaf = static_cast<Eigen::Index>(forest.leaves.size());

    DecodeResult result;
    DecodeTape& tape = result.tape;

    Eigen::MatrixXd path_features(dims.total(), n_int);
    for (Eigen::Index i = 0; i < n_int; ++i) {
        const auto& node = forest.internals[static_cast<std::size_t>(i)];
        if (node.parent >= forest.roots.size()) {
            throw StructuralError("decode: internal node with dangling parent");
        }
        path_features.col(i).head(dims.internal) = node.features;
        path_features.col(i).tail(dims.root) = forest.roots[node.parent].features;
    }
    tape.cov = decoders.cov.forward(path_features);

    tape.unit_scale.resize(static_cast<std::size_t>(n_int));
    tape.raw_quat.resize(static_cast<std::size_t>(n_int));
    tape.quat_fallback.assign(static_cast<std::size_t>(n_int), 0);
    std::vector<Quat> unit_quat(static_cast<std::size_t>(n_int));
    std::vector<Eigen::Matrix3d> rotation(static_cast<std::size_t>(n_int));
    for (Eigen::Index i = 0; i < n_int; ++i) {
        const auto u = static_cast<std::size_t>(i);
        const CovDecode c = cov_from_raw(tape.cov.output.col(i), 1.0);
        tape.unit_scale[u] = c.s;
        tape.raw_quat[u] = tape.cov.output.col(i).segment<4>(3);
        tape.quat_fallback[u] = c.fallback ? 1 : 0;
        unit_quat[u] = c.q;
        rotation[u] = rotation_from_quaternion(c.q);
    }

    Eigen::MatrixXd rgb_in(dims.total() + kShBasisSize, n_leaf);
    tape.view_offset.resize(static_cast<std::size_t>(n_leaf));
    for (Eigen::Index j = 0; j < n_leaf; ++j) {
        const auto& leaf = forest.leaves[static_cast<std::size_t>(j)];
        if (leaf.parent >= forest.internals.size()) {
            throw StructuralError("decode: leaf with dangling parent");
        }
        tape.view_offset[static_cast<std::size_t>(j)] = leaf.mu - camera_center;
        rgb_in.col(j).head(dims.total()) = path_features.col(leaf.parent);
        rgb_in.col(j).tail<kShBasisSize>() = sh_basis(view_direction(leaf.mu, camera_center));
    }
    tape.rgb = decoders.rgb.forward(rgb_in);

    result.gaussians.resize(static_cast<std::size_t>(n_leaf));
    for (Eigen::Index j = 0; j < n_leaf; ++j) {
        const auto& leaf = forest.leaves[static_cast<std::size_t>(j)];
        auto& g = result.gaussians[static_cast<std::size_t>(j)];
        const auto p = leaf.parent;
        g.mu = leaf.mu;
        g.s = leaf.gamma_s() * tape.unit_scale[p];
        g.q = unit_quat[p];
        const Eigen::Matrix3d m = rotation[p] * g.s.asDiagonal();
        g.sigma = m * m.transpose();
        g.alpha = leaf.opacity();
        for (int k = 0; k < 3; ++k) g.color[k] = sigmoid(tape.rgb.output(k, j));
    }
    return result;
}

std::vector<DecodedGaussian> decode_all(const Forest& forest, const Decoders& decoders,
                                        const Eigen::Vector3d& camera_center) {
    return decode_forest(forest, decoders, camera_center).gaussians;
}

ModelGradient ModelGradient::zeros(const Forest& forest, const Decoders& decoders) {
    ModelGradient g;
    g.mu.assign(forest.leaves.size(), Eigen::Vector3d::Zero());
    g.log_gamma_s.assign(forest.leaves.size(), 0.0);
    g.alpha_raw.assign(forest.leaves.size(), 0.0);
    g.internal = Eigen::MatrixXd::Zero(forest.dims.internal,
                                       static_cast<Eigen::Index>(forest.internals.size()));
    g.root = Eigen::MatrixXd::Zero(forest.dims.root, static_cast<Eigen::Index>(forest.roots.size()));
    g.mlp_cov = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(decoders.cov.parameter_count()));
    g.mlp_rgb = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(decoders.rgb.parameter_count()));
    return g;
}

void decode_backward(const Forest& forest, const Decoders& decoders, const DecodeResult& decoded,
                     std::span<const GaussianGrad> grads, ModelGradient& out) {
    const auto dims = forest.dims;
    const auto n_leaf = forest.leaves.size();
    const auto n_int = forest.internals.size();
    const DecodeTape& tape = decoded.tape;
    if (grads.size() != n_leaf || decoded.gaussians.size() != n_leaf ||
        tape.unit_scale.size() != n_int) {
        throw ContractError("decode_backward: tape does not match forest");
    }

    // Color branch.
    Eigen::MatrixXd d_rgb_out(kRgbOutputs, static_cast<Eigen::Index>(n_leaf));
    for (std::size_t j = 0; j < n_leaf; ++j) {
        const auto& c = decoded.gaussians[j].color;
        for (int k = 0; k < 3; ++k) {
            d_rgb_out(k, static_cast<Eigen::Index>(j)) = grads[j].color[k] * c[k] * (1.0 - c[k]);
        }
    }
    const Eigen::MatrixXd d_rgb_in = decoders.rgb.backward(tape.rgb, d_rgb_out, out.mlp_rgb);

    Eigen::MatrixXd d_path(dims.total(), static_cast<Eigen::Index>(n_int));
    d_path.setZero();

    std::vector<Eigen::Matrix3d> d_rot(n_int, Eigen::Matrix3d::Zero());
    std::vector<Eigen::Vector3d> d_unit_scale(n_int, Eigen::Vector3d::Zero());

    for (std::size_t j = 0; j < n_leaf; ++j) {
        const auto& leaf = forest.leaves[j];
        const auto& g = decoded.gaussians[j];
        const auto& dg = grads[j];
        const auto p = leaf.parent;
        const auto col = static_cast<Eigen::Index>(j);

        d_path.col(p) += d_rgb_in.col(col).head(dims.total());

        // Direction enters through the SH encoding of normalize(mu - c).
        const Eigen::Vector3d& offset = tape.view_offset[j];
        const double r = offset.norm();
        Eigen::Vector3d d_mu = dg.mu;
        if (r >= kTinyNorm) {
            const Eigen::Vector3d dir = offset / r;
            const ShBasis d_sh = d_rgb_in.col(col).tail<kShBasisSize>();
            const Eigen::Vector3d d_dir = sh_basis_jacobian(dir).transpose() * d_sh;
            d_mu += (d_dir - dir * dir.dot(d_dir)) / r;
        }
        out.mu[j] += d_mu;

        out.alpha_raw[j] += dg.alpha * g.alpha * (1.0 - g.alpha);

        // Sigma = M M^T with M = R diag(s).
        const Eigen::Matrix3d rot = rotation_from_quaternion(g.q);
        const Eigen::Matrix3d m = rot * g.s.asDiagonal();
        const Eigen::Matrix3d d_m = (dg.sigma + dg.sigma.transpose()) * m;
        const double gamma = leaf.gamma_s();
        for (int k = 0; k < 3; ++k) {
            const double d_s = rot.col(k).dot(d_m.col(k));
            out.log_gamma_s[j] += d_s * g.s[k];
            d_unit_scale[p][k] += d_s * gamma;
        }
        d_rot[p] += d_m * g.s.asDiagonal();
    }

    Eigen::MatrixXd d_cov_out(kCovOutputs, static_cast<Eigen::Index>(n_int));
    for (std::size_t i = 0; i < n_int; ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        const Eigen::Vector3d& u = tape.unit_scale[i];
        for (int k = 0; k < 3; ++k) d_cov_out(k, col) = d_unit_scale[i][k] * u[k] * (1.0 - u[k]);
        if (tape.quat_fallback[i]) {
            d_cov_out.col(col).segment<4>(3).setZero();
            continue;
        }
        const Quat& raw = tape.raw_quat[i];
        const double n = raw.norm();
        const Quat q = raw / n;
        const Quat dq = rotation_vjp(d_rot[i], q);
        d_cov_out.col(col).segment<4>(3) = (dq - q * q.dot(dq)) / n;
    }
    d_path += decoders.cov.backward(tape.cov, d_cov_out, out.mlp_cov);

    for (std::size_t i = 0; i < n_int; ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        out.internal.col(col) += d_path.col(col).head(dims.internal);
        out.root.col(forest.internals[i].parent) += d_path.col(col).tail(dims.root);
    }
}

} // namespace gforest
