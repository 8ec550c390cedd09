#include "gforest/loss.hpp"
#include "gforest/errors.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace gforest {

namespace {

using Plane = std::vector<double>;

const std::array<double, kSsimWindow>& gaussian_window() {
    static const auto window = [] {
        std::array<double, kSsimWindow> w{};
        double sum = 0.0;
        for (int i = 0; i < kSsimWindow; ++i) {
            const double d = i - kSsimWindow / 2;
            w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
            sum += w[static_cast<std::size_t>(i)];
        }
        for (auto& v : w) v /= sum;
        return w;
    }();
    return window;
}

// Separable "same" convolution with zero padding. The kernel is symmetric,
// so this operator is its own adjoint.
Plane blur(const Plane& in, int w, int h) {
    const auto& k = gaussian_window();
    constexpr int r = kSsimWindow / 2;
    Plane tmp(in.size(), 0.0);
    Plane out(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) {
                const int xx = x + i;
                if (xx < 0 || xx >= w) continue;
                acc += k[static_cast<std::size_t>(i + r)] * in[static_cast<std::size_t>(y) * w + xx];
            }
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) {
                const int yy = y + i;
                if (yy < 0 || yy >= h) continue;
                acc += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(yy) * w + x];
            }
            out[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    return out;
}

Plane channel(const Image& img, int c) {
    Plane p(img.pixel_count());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = img.data[i * 3 + static_cast<std::size_t>(c)];
    return p;
}

Plane product(const Plane& a, const Plane& b) {
    Plane p(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) p[i] = a[i] * b[i];
    return p;
}

void check_shapes(const Image& a, const Image& b) {
    if (!a.same_shape(b) || a.data.size() != b.data.size() || a.data.empty()) {
        throw ContractError("images must be non-empty and of equal shape");
    }
}

// Mean SSIM and, when `grad` is non-null, d(mean SSIM)/d a written into it.
double ssim_impl(const Image& a, const Image& b, Image* grad) {
    check_shapes(a, b);
    const int w = a.width;
    const int h = a.height;
    const std::size_t n = a.pixel_count();
    const double inv_count = 1.0 / static_cast<double>(n * 3);
    double total = 0.0;

    for (int c = 0; c < 3; ++c) {
        const Plane x = channel(a, c);
        const Plane y = channel(b, c);
        const Plane mx = blur(x, w, h);
        const Plane my = blur(y, w, h);
        const Plane exx = blur(product(x, x), w, h);
        const Plane eyy = blur(product(y, y), w, h);
        const Plane exy = blur(product(x, y), w, h);

        Plane g_mx(n), g_exx(n), g_exy(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double m1 = mx[i], m2 = my[i];
            const double a1 = 2.0 * m1 * m2 + kSsimC1;
            const double a2 = 2.0 * (exy[i] - m1 * m2) + kSsimC2;
            const double b1 = m1 * m1 + m2 * m2 + kSsimC1;
            const double b2 = (exx[i] - m1 * m1) + (eyy[i] - m2 * m2) + kSsimC2;
            const double s = (a1 * a2) / (b1 * b2);
            total += s;
            if (grad) {
                const double inv = 1.0 / (b1 * b2);
                g_mx[i] = inv_count * (2.0 * m2 * (a2 - a1) * inv - s * 2.0 * m1 * (b2 - b1) * inv);
                g_exx[i] = inv_count * (-s / b2);
                g_exy[i] = inv_count * (2.0 * a1 * inv);
            }
        }
        if (grad) {
            const Plane bm = blur(g_mx, w, h);
            const Plane bxx = blur(g_exx, w, h);
            const Plane bxy = blur(g_exy, w, h);
            for (std::size_t i = 0; i < n; ++i) {
                grad->data[i * 3 + static_cast<std::size_t>(c)] = bm[i] + 2.0 * x[i] * bxx[i] + y[i] * bxy[i];
            }
        }
    }
    return total * inv_count;
}

} // namespace

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, nullptr); }

LossResult photometric_loss(const Image& rendered, const Image& target, double lambda) {
    check_shapes(rendered, target);
    LossResult r;
    r.gradient = Image(rendered.width, rendered.height);
    const double inv_count = 1.0 / static_cast<double>(rendered.data.size());

    double l1 = 0.0;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        const double d = rendered.data[i] - target.data[i];
        l1 += std::abs(d);
    }
    r.l1 = l1 * inv_count;

    Image d_ssim(rendered.width, rendered.height);
    r.ssim = ssim_impl(rendered, target, &d_ssim);
    r.value = (1.0 - lambda) * r.l1 + lambda * (1.0 - r.ssim);

    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        const double d = rendered.data[i] - target.data[i];
        const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        r.gradient.data[i] = (1.0 - lambda) * sign * inv_count - lambda * d_ssim.data[i];
    }
    return r;
}

double psnr(const Image& a, const Image& b) {
    check_shapes(a, b);
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

ImageMetrics metrics(const Image& rendered, const Image& target) {
    return {psnr(rendered, target), ssim(rendered, target)};
}

} // namespace gforest
