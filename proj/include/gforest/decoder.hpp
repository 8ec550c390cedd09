#pragma once

#include "gforest/forest.hpp"
#include "gforest/mlp.hpp"

#include <Eigen/Core>

#include <random>
#include <span>
#include <vector>

namespace gforest {

/// Quaternions are (w, x, y, z).
using Quat = Eigen::Vector4d;

inline constexpr int kCovOutputs = 7; // 3 pre-sigmoid scales + 4 raw quaternion
inline constexpr int kRgbOutputs = 3;

/// The two shared decoders: covariance from features, color from features
/// plus view direction.
struct Decoders {
    Mlp cov;
    Mlp rgb;

    static Decoders create(FeatureDims dims, std::mt19937_64& rng, int hidden_dim = 64,
                           int n_hidden = 2);
};

struct CovDecode {
    Eigen::Vector3d s = Eigen::Vector3d::Ones();
    Quat q = Quat(1.0, 0.0, 0.0, 0.0);
    bool fallback = false; // raw quaternion had zero norm
};

/// s = gamma_s * sigmoid(raw[0..3)), q = raw[3..7) / |raw[3..7)|.
CovDecode cov_from_raw(const Eigen::Ref<const Eigen::VectorXd>& raw, double gamma_s);
CovDecode decode_cov(const Eigen::VectorXd& features, double gamma_s, const Mlp& mlp_cov);

Eigen::Matrix3d rotation_from_quaternion(const Quat& q);

/// R diag(s)^2 R^T.
Eigen::Matrix3d build_covariance(const Eigen::Vector3d& s, const Quat& q);

/// sigmoid(F_rgb([features, SH(dir)])); `dir` is normalized if needed.
Eigen::Vector3d decode_rgb(const Eigen::VectorXd& features, const Eigen::Vector3d& dir,
                           const Mlp& mlp_rgb);

struct DecodedGaussian {
    Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    Eigen::Vector3d s = Eigen::Vector3d::Ones();
    Quat q = Quat(1.0, 0.0, 0.0, 0.0);
    Eigen::Matrix3d sigma = Eigen::Matrix3d::Identity();
    double alpha = 0.5;
    Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);
};

/// View direction used for a Gaussian's color: normalize(mu - camera_center).
Eigen::Vector3d view_direction(const Eigen::Vector3d& mu, const Eigen::Vector3d& camera_center);

/// Batched decode state kept for the adjoint pass. Covariance is decoded once
/// per internal node since it depends only on the path features.
struct DecodeTape {
    MlpTape cov;
    MlpTape rgb;
    std::vector<Eigen::Vector3d> unit_scale;   // sigmoid(raw scale), per internal
    std::vector<Quat> raw_quat;                // per internal
    std::vector<char> quat_fallback;           // per internal
    std::vector<Eigen::Vector3d> view_offset;  // mu - camera_center, per leaf
};

struct DecodeResult {
    std::vector<DecodedGaussian> gaussians; // i-th from i-th leaf
    DecodeTape tape;
};

DecodeResult decode_forest(const Forest& forest, const Decoders& decoders,
                           const Eigen::Vector3d& camera_center);

std::vector<DecodedGaussian> decode_all(const Forest& forest, const Decoders& decoders,
                                        const Eigen::Vector3d& camera_center);

/// Loss gradient w.r.t. one decoded Gaussian. `sigma` is the gradient w.r.t.
/// the full 3x3 matrix (both off-diagonal entries are independent inputs).
struct GaussianGrad {
    Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
    double alpha = 0.0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
};

/// Gradient over every trainable scalar of a forest and its decoders.
struct ModelGradient {
    std::vector<Eigen::Vector3d> mu;
    std::vector<double> log_gamma_s;
    std::vector<double> alpha_raw;
    Eigen::MatrixXd internal; // D_I x N_I
    Eigen::MatrixXd root;     // D_R x N_R
    Eigen::VectorXd mlp_cov;
    Eigen::VectorXd mlp_rgb;

    static ModelGradient zeros(const Forest& forest, const Decoders& decoders);
};

/// Accumulates into `out` the gradient induced by per-Gaussian gradients.
void decode_backward(const Forest& forest, const Decoders& decoders, const DecodeResult& decoded,
                     std::span<const GaussianGrad> grads, ModelGradient& out);

} // namespace gforest
