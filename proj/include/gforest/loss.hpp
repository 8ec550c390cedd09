#pragma once

#include "gforest/image.hpp"

namespace gforest {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

struct LossResult {
    double value = 0.0;
    double l1 = 0.0;
    double ssim = 1.0;
    Image gradient; // dL/d rendered
};

/// (1 - lambda) * mean|rendered - target| + lambda * (1 - SSIM), with its
/// exact gradient w.r.t. `rendered`.
LossResult photometric_loss(const Image& rendered, const Image& target, double lambda);

/// Mean SSIM over pixels and channels; Gaussian window, zero padding.
double ssim(const Image& a, const Image& b);

/// 10 log10(1 / MSE); +infinity for identical images.
double psnr(const Image& a, const Image& b);

struct ImageMetrics {
    double psnr = 0.0;
    double ssim = 0.0;
};

ImageMetrics metrics(const Image& rendered, const Image& target);

} // namespace gforest
