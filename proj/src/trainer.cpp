#include "gforest/trainer.hpp"
#include "gforest/errors.hpp"
#include "gforest/model_io.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gforest {

TrainConfig TrainConfig::scaled() const {
    TrainConfig c = *this;
    const auto s = [this](long v) { return std::max(0L, std::lround(static_cast<double>(v) * iters_scale)); };
    c.stop_root = s(stop_root);
    c.stop_internal = s(stop_internal);
    c.stop_leaf = s(stop_leaf);
    c.total_iters = s(total_iters);
    c.warmup = s(warmup);
    c.iters_scale = 1.0;
    return c;
}

void TrainConfig::check() const {
    if (!(grow_t0 >= grow_t1 && grow_t1 >= grow_t2 && grow_t2 >= 0.0)) {
        throw ContractError("growth thresholds must be non-increasing and non-negative");
    }
    if (!(stop_root <= stop_internal && stop_internal <= stop_leaf)) {
        throw ContractError("layer stop iterations must be non-decreasing");
    }
    if (growth_interval < 1 || prune_interval < 1 || prune_interval_late < 1 || log_interval < 1) {
        throw ContractError("intervals must be >= 1");
    }
    if (total_iters < 0 || !(iters_scale > 0.0)) throw ContractError("bad iteration budget");
    if (!(split_factor > 1.0)) throw ContractError("split_factor must exceed 1");
    if (dims.root < 1 || dims.internal < 1 || k < 1) throw ContractError("bad forest dimensions");
}

GrowthCase classify_growth(double cg, long iteration, const TrainConfig& cfg) {
    GrowthCase c = GrowthCase::None;
    if (cg >= cfg.grow_t0) {
        c = GrowthCase::Case2;
    } else if (cg > cfg.grow_t1) {
        c = GrowthCase::Case1;
    } else if (cg > cfg.grow_t2) {
        c = GrowthCase::Case0;
    }
    if (c == GrowthCase::None) return c;
    if (iteration >= cfg.stop_leaf) return GrowthCase::None;
    if (iteration >= cfg.stop_internal) return GrowthCase::Case0;
    if (iteration >= cfg.stop_root && c == GrowthCase::Case2) return GrowthCase::Case1;
    return c;
}

double CgAccumulator::value(std::size_t leaf, CgMode mode) const {
    if (mode == CgMode::SumPixel) return sum_[leaf];
    return sum_[leaf] / std::max<std::uint32_t>(count_[leaf], 1);
}

void CgAccumulator::remap(const std::vector<std::uint32_t>& remap, std::size_t new_size) {
    if (remap.size() != sum_.size()) throw ContractError("accumulator remap size mismatch");
    std::vector<double> sum(new_size, 0.0);
    std::vector<std::uint32_t> count(new_size, 0);
    for (std::size_t i = 0; i < remap.size(); ++i) {
        if (remap[i] == IndexRemap::kRemoved) continue;
        sum[remap[i]] = sum_[i];
        count[remap[i]] = count_[i];
    }
    sum_ = std::move(sum);
    count_ = std::move(count);
}

GrowthReport grow(Model& model, CgAccumulator& cg, OptState& opt, long iteration,
                  const TrainConfig& cfg, std::mt19937_64& rng) {
    Forest& forest = model.forest;
    if (cg.size() != forest.leaves.size()) throw ContractError("accumulator not aligned with leaves");

    GrowthReport report;
    report.iteration = iteration;
    const double shrink = std::log(cfg.split_factor);
    std::normal_distribution<double> normal(0.0, 1.0);

    const std::size_t n0 = forest.leaves.size();
    for (std::size_t i = 0; i < n0; ++i) {
        const GrowthCase c = classify_growth(cg.value(i, cfg.cg_mode), iteration, cfg);
        if (c == GrowthCase::None) continue;

        const NodeId src = NodeId::leaf(static_cast<std::uint32_t>(i));
        const LeafNode& leaf = forest.leaves[i];
        const CovDecode cov = decode_cov(gather_features(forest, src), leaf.gamma_s(), model.decoders.cov);
        const Eigen::Vector3d z(normal(rng), normal(rng), normal(rng));

        LeafNode clone = leaf;
        clone.mu = leaf.mu + rotation_from_quaternion(cov.q) * cov.s.cwiseProduct(z);
        clone.log_gamma_s = leaf.log_gamma_s - shrink;
        forest.leaves[i].log_gamma_s -= shrink;

        switch (c) {
        case GrowthCase::Case0:
            clone_leaf(forest, src, clone);
            ++report.case0;
            break;
        case GrowthCase::Case1:
            clone_leaf_and_internal(forest, src, clone);
            ++report.case1;
            break;
        case GrowthCase::Case2:
            clone_path(forest, src, clone);
            ++report.case2;
            break;
        case GrowthCase::None:
            break;
        }
    }
    opt.extend_to(model);

    if (!validate(forest).childless.empty()) {
        const std::size_t before = forest.internals.size() + forest.roots.size();
        const IndexRemap remap = remove_leaves_and_compact(forest, {});
        opt.remap(remap);
        report.orphans_removed = before - forest.internals.size() - forest.roots.size();
    }
    cg.reset(forest.leaves.size());
    return report;
}

PruneReport prune(Model& model, OptState& opt, CgAccumulator& cg, const TrainConfig& cfg,
                  long iteration) {
    Forest& forest = model.forest;
    PruneReport report;
    report.iteration = iteration;

    std::vector<std::uint32_t> doomed;
    for (std::uint32_t i = 0; i < forest.leaves.size(); ++i) {
        const auto& leaf = forest.leaves[i];
        if (leaf.opacity() < cfg.prune_alpha || leaf.gamma_s() < cfg.prune_scale) doomed.push_back(i);
    }
    const auto n_leaf = forest.leaves.size();
    const auto n_int = forest.internals.size();
    const auto n_root = forest.roots.size();
    if (doomed.empty() && validate(forest).childless.empty()) return report;

    const IndexRemap remap = remove_leaves_and_compact(forest, doomed);
    opt.remap(remap);
    if (cg.size() == remap.leaf.size()) {
        cg.remap(remap.leaf, forest.leaves.size());
    } else {
        cg.reset(forest.leaves.size());
    }
    report.leaves_removed = n_leaf - forest.leaves.size();
    report.internals_removed = n_int - forest.internals.size();
    report.roots_removed = n_root - forest.roots.size();
    return report;
}

std::vector<GrowthReport> TrainLog::growth_events() const {
    std::vector<GrowthReport> out;
    for (const auto& r : records) {
        if (r.kind == LogRecord::Kind::Growth) out.push_back(r.growth);
    }
    return out;
}

std::vector<PruneReport> TrainLog::prune_events() const {
    std::vector<PruneReport> out;
    for (const auto& r : records) {
        if (r.kind == LogRecord::Kind::Prune) out.push_back(r.prune);
    }
    return out;
}

std::vector<LogRecord> TrainLog::evals() const {
    std::vector<LogRecord> out;
    for (const auto& r : records) {
        if (r.kind == LogRecord::Kind::Eval) out.push_back(r);
    }
    return out;
}

std::string TrainLog::to_jsonl() const {
    std::string out;
    for (const auto& r : records) {
        nlohmann::json j;
        j["iter"] = r.iteration;
        switch (r.kind) {
        case LogRecord::Kind::Eval:
            j["type"] = "eval";
            j["loss"] = r.loss;
            j["psnr"] = std::isfinite(r.psnr) ? nlohmann::json(r.psnr) : nlohmann::json("inf");
            j["n_leaf"] = r.n_leaf;
            j["n_internal"] = r.n_internal;
            j["n_root"] = r.n_root;
            j["bytes"] = r.bytes;
            break;
        case LogRecord::Kind::Growth:
            j["type"] = "growth";
            j["case0"] = r.growth.case0;
            j["case1"] = r.growth.case1;
            j["case2"] = r.growth.case2;
            j["orphans_removed"] = r.growth.orphans_removed;
            break;
        case LogRecord::Kind::Prune:
            j["type"] = "prune";
            j["leaves_removed"] = r.prune.leaves_removed;
            j["internals_removed"] = r.prune.internals_removed;
            j["roots_removed"] = r.prune.roots_removed;
            break;
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

double mean_psnr(const Model& model, const SceneDataset& data, const std::vector<std::size_t>& views) {
    if (views.empty()) return 0.0;
    double sum = 0.0;
    for (const auto v : views) {
        const RenderOutput out = render(model, data.cameras[v], data.background);
        sum += psnr(out.image, data.images[v]);
    }
    return sum / static_cast<double>(views.size());
}

namespace {

double cg_norm(const Eigen::Vector2d& g, const Camera& cam, CgMode mode) {
    if (mode == CgMode::MeanNdc) {
        return Eigen::Vector2d(g.x() * 0.5 * cam.width, g.y() * 0.5 * cam.height).norm();
    }
    return g.norm();
}

} // namespace

TrainResult train(const SceneDataset& data, Model model, const TrainConfig& cfg, std::uint64_t seed) {
    cfg.check();
    data.check();
    if (data.cameras.empty()) throw ContractError("training needs at least one posed image");

    std::vector<std::size_t> train_views = data.train;
    if (train_views.empty()) {
        train_views.resize(data.cameras.size());
        std::iota(train_views.begin(), train_views.end(), 0);
    }
    const std::vector<std::size_t>& eval_views = data.test.empty() ? train_views : data.test;

    TrainResult result{std::move(model), {}};
    Model& m = result.model;
    std::mt19937_64 rng(seed);
    OptState opt = OptState::for_model(m);
    CgAccumulator cg(m.forest.leaves.size());

    const auto log_eval = [&](long iter, double loss) {
        LogRecord r;
        r.kind = LogRecord::Kind::Eval;
        r.iteration = iter;
        r.loss = loss;
        r.psnr = mean_psnr(m, data, eval_views);
        r.n_leaf = m.forest.leaves.size();
        r.n_internal = m.forest.internals.size();
        r.n_root = m.forest.roots.size();
        r.bytes = model_byte_size(m);
        result.log.records.push_back(r);
        spdlog::info("iter {:>6}  loss {:.5f}  psnr {:.2f}  nodes {}/{}/{}  bytes {}", iter, loss, r.psnr,
                     r.n_root, r.n_internal, r.n_leaf, r.bytes);
    };

    if (cfg.total_iters == 0) return result;
    log_eval(0, 0.0);

    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    const double reset_logit = std::log(0.01 / 0.99);
    double last_loss = 0.0;

    for (long iter = 1; iter <= cfg.total_iters; ++iter) {
        if (cursor == order.size()) {
            order = train_views;
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        const std::size_t view = order[cursor++];
        const Camera& cam = data.cameras[view];

        const RenderTape tape = render_with_tape(m, cam, data.background);
        const LossResult loss = photometric_loss(tape.output.image, data.images[view], cfg.lambda);
        if (!std::isfinite(loss.value)) {
            throw NumericalError(fmt::format("non-finite loss at iteration {} (view {}, {} leaves, {} internals, {} roots)",
                                             iter, view, m.forest.leaves.size(), m.forest.internals.size(),
                                             m.forest.roots.size()));
        }
        last_loss = loss.value;
        const RenderGradient grad = render_backward(m, cam, tape, loss.gradient);

        for (std::size_t leaf = 0; leaf < grad.leaf_visible.size(); ++leaf) {
            if (grad.leaf_visible[leaf]) cg.add(leaf, cg_norm(grad.leaf_mean2d_grad[leaf], cam, cfg.cg_mode));
        }

        opt.apply(m, grad.model, cfg.lr, cfg.lr.position_at(iter, cfg.total_iters));

        const bool growing = iter < cfg.stop_leaf;
        if (growing && iter >= cfg.warmup && iter % cfg.growth_interval == 0) {
            LogRecord r;
            r.kind = LogRecord::Kind::Growth;
            r.iteration = iter;
            r.growth = grow(m, cg, opt, iter, cfg, rng);
            result.log.records.push_back(r);
        }
        const bool prune_tick = growing ? (iter >= cfg.warmup && iter % cfg.prune_interval == 0)
                                        : (iter % cfg.prune_interval_late == 0);
        if (prune_tick) {
            LogRecord r;
            r.kind = LogRecord::Kind::Prune;
            r.iteration = iter;
            r.prune = prune(m, opt, cg, cfg, iter);
            result.log.records.push_back(r);
        }
        if (cfg.opacity_reset && growing && iter % cfg.opacity_reset_interval == 0) {
            for (auto& leaf : m.forest.leaves) leaf.alpha_raw = std::min(leaf.alpha_raw, reset_logit);
        }
        if (!opt.aligned(m) || cg.size() != m.forest.leaves.size()) {
            throw ContractError(fmt::format("optimizer state misaligned after iteration {}", iter));
        }
        if (iter % cfg.log_interval == 0 || iter == cfg.total_iters) log_eval(iter, last_loss);
    }
    return result;
}

} // namespace gforest
