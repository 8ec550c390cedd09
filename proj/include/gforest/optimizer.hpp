#pragma once

#include "gforest/forest.hpp"
#include "gforest/pipeline.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace gforest {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

/// Adam moments for one parameter tensor viewed as rows of `width` values.
class MomentBuffer {
public:
    MomentBuffer() = default;
    MomentBuffer(std::size_t rows, std::size_t width)
        : width_(width), m_(rows * width, 0.0), v_(rows * width, 0.0) {}

    std::size_t width() const { return width_; }
    std::size_t rows() const { return width_ == 0 ? 0 : m_.size() / width_; }
    const std::vector<double>& first() const { return m_; }
    const std::vector<double>& second() const { return v_; }

    /// Grows to `rows` with zero moments for the new rows.
    void extend(std::size_t rows);
    /// Keeps row i at remap[i] unless it is IndexRemap::kRemoved.
    void remap(const std::vector<std::uint32_t>& remap, std::size_t new_rows);

    void update(std::size_t flat, double& param, double grad, double lr, double bias1, double bias2,
                const AdamConfig& cfg) {
        double& m = m_[flat];
        double& v = v_[flat];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
        param -= lr * (m / bias1) / (std::sqrt(v / bias2) + cfg.eps);
    }

private:
    std::size_t width_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

/// Per-group step sizes. The position rate decays exponentially from
/// `position` to `position_final` over the run.
struct LearningRates {
    double position = 1.6e-4;
    double position_final = 1.6e-6;
    double position_scale = 1.0; // multiplies both position rates (scene extent)
    double alpha = 5e-2;
    double log_gamma = 5e-3;
    double features = 2.5e-3;
    double mlp = 1e-3;

    double position_at(long iteration, long total) const;
};

struct OptState {
    MomentBuffer mu;
    MomentBuffer log_gamma;
    MomentBuffer alpha;
    MomentBuffer internal;
    MomentBuffer root;
    MomentBuffer mlp_cov;
    MomentBuffer mlp_rgb;
    long step = 0;
    AdamConfig adam;

    static OptState for_model(const Model& model);

    /// Zero moments for nodes appended since the last sync.
    void extend_to(const Model& model);
    void remap(const IndexRemap& remap);
    bool aligned(const Model& model) const;

    /// One Adam step on every trainable tensor.
    void apply(Model& model, const ModelGradient& grad, const LearningRates& lr,
               double position_lr);
};

} // namespace gforest
