#pragma once

#include "gforest/loss.hpp"
#include "gforest/optimizer.hpp"
#include "gforest/pipeline.hpp"
#include "gforest/scene.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace gforest {

/// How per-view positional gradients are folded into a leaf's cumulative
/// gradient.
enum class CgMode {
    MeanPixel, // mean over visible views of ||dL/d mean2d||, pixel units
    SumPixel,  // sum over visible views, pixel units
    MeanNdc,   // mean over visible views, gradient w.r.t. NDC coordinates
};

struct TrainConfig {
    // Growth thresholds, non-increasing.
    double grow_t0 = 1e-3;
    double grow_t1 = 2.5e-4;
    double grow_t2 = 2e-4;

    // Per-layer stop iterations and schedule. These (and warmup) are
    // multiplied by `iters_scale`; intervals are not.
    long stop_root = 5000;
    long stop_internal = 10000;
    long stop_leaf = 15000;
    long total_iters = 30000;
    long warmup = 500;
    double iters_scale = 1.0;

    long growth_interval = 100;
    long prune_interval = 100;
    long prune_interval_late = 1000;

    double prune_alpha = 1e-2;
    double prune_scale = 5e-4;
    double split_factor = 1.6;

    double lambda = 0.2;
    LearningRates lr;
    CgMode cg_mode = CgMode::MeanNdc;

    bool opacity_reset = false;
    long opacity_reset_interval = 3000;

    // Initialization.
    FeatureDims dims{24, 16};
    std::size_t k = 64;
    std::size_t n_synth = 5000;

    long log_interval = 100;

    /// Iteration constants after applying `iters_scale`.
    TrainConfig scaled() const;
    /// Throws ContractError when thresholds or intervals are inconsistent.
    void check() const;
};

enum class GrowthCase { None, Case0, Case1, Case2 };

/// Classification by thresholds, then demotion by the per-layer stop points.
GrowthCase classify_growth(double cg, long iteration, const TrainConfig& cfg);

/// Running per-leaf sum of view-space gradient norms, aligned with the leaf
/// array.
class CgAccumulator {
public:
    CgAccumulator() = default;
    explicit CgAccumulator(std::size_t n) : sum_(n, 0.0), count_(n, 0) {}

    std::size_t size() const { return sum_.size(); }
    void add(std::size_t leaf, double norm) {
        sum_[leaf] += norm;
        ++count_[leaf];
    }
    double sum(std::size_t leaf) const { return sum_[leaf]; }
    std::uint32_t count(std::size_t leaf) const { return count_[leaf]; }
    double value(std::size_t leaf, CgMode mode) const;

    void reset(std::size_t n) {
        sum_.assign(n, 0.0);
        count_.assign(n, 0);
    }
    void remap(const std::vector<std::uint32_t>& remap, std::size_t new_size);
    void set(std::size_t leaf, double sum, std::uint32_t count) {
        sum_[leaf] = sum;
        count_[leaf] = count;
    }

private:
    std::vector<double> sum_;
    std::vector<std::uint32_t> count_;
};

struct GrowthReport {
    long iteration = 0;
    std::size_t case0 = 0;
    std::size_t case1 = 0;
    std::size_t case2 = 0;
    std::size_t orphans_removed = 0;

    std::size_t total() const { return case0 + case1 + case2; }
};

/// Classifies every leaf's CG, applies the matching clone, sweeps orphaned
/// internals/roots, extends optimizer state, and resets the accumulator.
GrowthReport grow(Model& model, CgAccumulator& cg, OptState& opt, long iteration,
                  const TrainConfig& cfg, std::mt19937_64& rng);

struct PruneReport {
    long iteration = 0;
    std::size_t leaves_removed = 0;
    std::size_t internals_removed = 0;
    std::size_t roots_removed = 0;
};

/// Removes leaves with opacity < prune_alpha or gamma_s < prune_scale and any
/// ancestors left childless; remaps optimizer state and the accumulator.
PruneReport prune(Model& model, OptState& opt, CgAccumulator& cg, const TrainConfig& cfg,
                  long iteration = 0);

struct LogRecord {
    enum class Kind { Eval, Growth, Prune };
    Kind kind = Kind::Eval;
    long iteration = 0;

    // Eval
    double loss = 0.0;
    double psnr = 0.0;
    std::size_t n_leaf = 0;
    std::size_t n_internal = 0;
    std::size_t n_root = 0;
    std::size_t bytes = 0;

    // Growth / prune
    GrowthReport growth;
    PruneReport prune;
};

struct TrainLog {
    std::vector<LogRecord> records;

    std::vector<GrowthReport> growth_events() const;
    std::vector<PruneReport> prune_events() const;
    std::vector<LogRecord> evals() const;

    /// One JSON object per line.
    std::string to_jsonl() const;
};

struct TrainResult {
    Model model;
    TrainLog log;
};

/// Mean PSNR of the model over the given views.
double mean_psnr(const Model& model, const SceneDataset& data, const std::vector<std::size_t>& views);

/// End-to-end optimization from an initialized model. `cfg` is used as given
/// (call `scaled()` first to apply the desk-scale factor).
TrainResult train(const SceneDataset& data, Model model, const TrainConfig& cfg, std::uint64_t seed);

} // namespace gforest
