#include "gforest/config.hpp"
#include "gforest/errors.hpp"
#include "gforest/image_io.hpp"
#include "gforest/init.hpp"
#include "gforest/loss.hpp"
#include "gforest/model_io.hpp"
#include "gforest/ply.hpp"
#include "gforest/scene.hpp"
#include "gforest/size_report.hpp"
#include "gforest/trainer.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

using namespace gforest;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct InitSceneArgs {
    std::string out;
    SyntheticSceneOptions options;
    std::uint64_t seed = 0;
};

struct TrainArgs {
    std::string data;
    std::string config;
    std::vector<std::string> settings;
    std::string points;
    std::string out = "model.gfor";
    std::string log;
    std::optional<long> iters;
    std::optional<double> iters_scale;
    std::uint64_t seed = 0;
};

struct RenderArgs {
    std::string model;
    std::string data;
    std::size_t view = 0;
    std::string out = "render.png";
    std::string metrics;
};

struct ModelArgs {
    std::string model;
    std::string json;
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw FormatError(fmt::format("cannot write {}", path));
    out << text;
}

int run_init_scene(const InitSceneArgs& a) {
    const SyntheticScene scene = gen_synthetic_scene(a.options, a.seed);
    save_scene(scene.dataset, a.out);
    fmt::print("wrote {} views ({} train, {} test) to {}\n", scene.dataset.cameras.size(),
               scene.dataset.train.size(), scene.dataset.test.size(), a.out);
    return kOk;
}

int run_train(const TrainArgs& a) {
    TrainConfig cfg;
    if (!a.config.empty()) apply_config_file(cfg, a.config);
    for (const auto& s : a.settings) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw FormatError(fmt::format("--set expects key=value, got '{}'", s));
        apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (a.iters_scale) cfg.iters_scale = *a.iters_scale;
    cfg.check();
    TrainConfig run = cfg.scaled();
    if (a.iters) run.total_iters = *a.iters;

    const SceneDataset data = load_scene(a.data);
    const PointCloud cloud = a.points.empty() ? synth_points(run.n_synth, data.bounds, a.seed) : load_ply(a.points);
    InitOptions init;
    init.k = run.k;
    init.dims = run.dims;
    const Model model = build_initial_model(cloud, init, a.seed);

    const TrainResult result = train(data, model, run, a.seed);
    save_model_file(result.model, a.out);
    if (!a.log.empty()) write_text(a.log, result.log.to_jsonl());
    const ForestStats st = stats(result.model.forest);
    fmt::print("saved {} ({} roots, {} internals, {} leaves, {} bytes)\n", a.out, st.n_root, st.n_internal,
               st.n_leaf, model_byte_size(result.model));
    return kOk;
}

int run_render(const RenderArgs& a) {
    const Model model = load_model_file(a.model);
    const SceneDataset data = load_scene(a.data);
    if (a.view >= data.cameras.size()) {
        throw FormatError(fmt::format("view {} out of range ({} views)", a.view, data.cameras.size()));
    }
    const RenderOutput out = render(model, data.cameras[a.view], data.background);
    write_png(out.image, a.out);
    if (!a.metrics.empty()) {
        const ImageMetrics m = metrics(out.image, data.images[a.view]);
        nlohmann::json j;
        j["view"] = a.view;
        j["psnr"] = std::isinf(m.psnr) ? nlohmann::json("inf") : nlohmann::json(m.psnr);
        j["ssim"] = m.ssim;
        write_text(a.metrics, j.dump() + "\n");
    }
    fmt::print("wrote {}\n", a.out);
    return kOk;
}

int run_report(const ModelArgs& a) {
    const Model model = load_model_file(a.model);
    const SizeReport r = size_report(model);
    fmt::print("{}", r.to_table());
    fmt::print("{}\n", r.to_json());
    if (!a.json.empty()) write_text(a.json, r.to_json() + "\n");
    return kOk;
}

int run_validate(const ModelArgs& a) {
    const Model model = load_model_file(a.model);
    const ValidationReport r = validate(model.forest);
    const ForestStats st = stats(model.forest);
    fmt::print("{} roots, {} internals, {} leaves\n", st.n_root, st.n_internal, st.n_leaf);
    if (r.clean()) {
        fmt::print("clean\n");
        return kOk;
    }
    fmt::print("{}", r.summary());
    return kData;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical hybrid Gaussian scenes: synthesize, train, render and inspect."};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

    InitSceneArgs init_args;
    auto* init_cmd = app.add_subcommand("init-scene", "Generate a synthetic posed-image dataset");
    init_cmd->add_option("--out", init_args.out, "Output directory")->required();
    init_cmd->add_option("--gaussians", init_args.options.n_gaussians, "Ground-truth Gaussians");
    init_cmd->add_option("--cameras", init_args.options.n_cameras, "Number of cameras");
    init_cmd->add_option("--resolution", init_args.options.resolution, "Image width and height");
    init_cmd->add_option("--test-every", init_args.options.test_every, "Hold out every n-th view (0: none)");
    init_cmd->add_option("--seed", init_args.seed, "Random seed");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Initialize and train a model on a dataset");
    train_cmd->add_option("--data", train_args.data, "Dataset directory")->required();
    train_cmd->add_option("--config", train_args.config, "key=value configuration file");
    train_cmd->add_option("--set", train_args.settings, "Override one setting (key=value)");
    train_cmd->add_option("--points", train_args.points, "Initial point cloud (PLY)");
    train_cmd->add_option("--iters", train_args.iters, "Total iterations after scaling");
    train_cmd->add_option("--iters-scale", train_args.iters_scale, "Schedule scale factor");
    train_cmd->add_option("--seed", train_args.seed, "Random seed");
    train_cmd->add_option("--out", train_args.out, "Output model file");
    train_cmd->add_option("--log", train_args.log, "Training log (JSON lines)");

    RenderArgs render_args;
    auto* render_cmd = app.add_subcommand("render", "Render one dataset view with a model");
    render_cmd->add_option("--model", render_args.model, "Model file")->required();
    render_cmd->add_option("--data", render_args.data, "Dataset directory")->required();
    render_cmd->add_option("--view", render_args.view, "Camera index");
    render_cmd->add_option("--out", render_args.out, "Output PNG");
    render_cmd->add_option("--metrics", render_args.metrics, "Write PSNR/SSIM against the view's image");

    ModelArgs report_args;
    auto* report_cmd = app.add_subcommand("report", "Print storage accounting for a model");
    report_cmd->add_option("model", report_args.model, "Model file")->required();
    report_cmd->add_option("--json", report_args.json, "Also write the JSON record here");

    ModelArgs validate_args;
    auto* validate_cmd = app.add_subcommand("validate", "Check a model's forest structure");
    validate_cmd->add_option("model", validate_args.model, "Model file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }
    spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        if (*init_cmd) return run_init_scene(init_args);
        if (*train_cmd) return run_train(train_args);
        if (*render_cmd) return run_render(render_args);
        if (*report_cmd) return run_report(report_args);
        if (*validate_cmd) return run_validate(validate_args);
    } catch (const NumericalError& e) {
        spdlog::error("{}", e.what());
        return kNumerical;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kData;
    }
    return kUsage;
}
