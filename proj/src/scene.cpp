#include "gforest/scene.hpp"
#include "gforest/errors.hpp"
#include "gforest/image_io.hpp"
#include "gforest/pipeline.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"

namespace gforest {

using nlohmann::json;

void SceneDataset::check() const {
    if (cameras.size() != images.size()) {
        throw ContractError(fmt::format("scene has {} cameras but {} images", cameras.size(), images.size()));
    }
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        cameras[i].check();
        if (images[i].width != cameras[i].width || images[i].height != cameras[i].height ||
            images[i].data.size() != images[i].pixel_count() * 3) {
            throw ContractError(fmt::format("view {}: image size does not match its camera", i));
        }
    }
    for (const auto* split : {&train, &test}) {
        for (const auto v : *split) {
            if (v >= cameras.size()) throw ContractError(fmt::format("split index {} out of range", v));
        }
    }
}

namespace {

json vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d to_vec3(const json& j) {
    if (!j.is_array() || j.size() != 3) throw FormatError("scene manifest: expected a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::string view_name(std::size_t i) { return fmt::format("view_{:03d}.png", i); }

} // namespace

void save_scene(const SceneDataset& scene, const std::filesystem::path& dir) {
    scene.check();
    std::filesystem::create_directories(dir);
    json views = json::array();
    for (std::size_t i = 0; i < scene.cameras.size(); ++i) {
        const Camera& c = scene.cameras[i];
        json rot = json::array();
        for (int r = 0; r < 3; ++r) rot.push_back(vec3(c.rotation.row(r).transpose()));
        views.push_back({{"image", view_name(i)},
                         {"width", c.width},
                         {"height", c.height},
                         {"fx", c.fx},
                         {"fy", c.fy},
                         {"cx", c.cx},
                         {"cy", c.cy},
                         {"rotation", rot},
                         {"translation", vec3(c.translation)}});
        write_png(scene.images[i], dir / view_name(i));
    }
    const json manifest = {{"views", views},
                           {"train", scene.train},
                           {"test", scene.test},
                           {"background", vec3(scene.background)},
                           {"bounds", {{"min", vec3(scene.bounds.min)}, {"max", vec3(scene.bounds.max)}}}};
    std::ofstream out(dir / kManifestName);
    if (!out) throw FormatError(fmt::format("cannot write {}", (dir / kManifestName).string()));
    out << manifest.dump(2) << "\n";
}

SceneDataset load_scene(const std::filesystem::path& dir) {
    const auto path = dir / kManifestName;
    std::ifstream in(path);
    if (!in) throw FormatError(fmt::format("cannot open {}", path.string()));
    SceneDataset scene;
    try {
        const json m = json::parse(in);
        for (const auto& v : m.at("views")) {
            Camera c;
            c.width = v.at("width").get<int>();
            c.height = v.at("height").get<int>();
            c.fx = v.at("fx").get<double>();
            c.fy = v.at("fy").get<double>();
            c.cx = v.at("cx").get<double>();
            c.cy = v.at("cy").get<double>();
            const auto& rot = v.at("rotation");
            if (!rot.is_array() || rot.size() != 3) throw FormatError("scene manifest: rotation needs 3 rows");
            for (int r = 0; r < 3; ++r) c.rotation.row(r) = to_vec3(rot[r]).transpose();
            c.translation = to_vec3(v.at("translation"));
            scene.cameras.push_back(c);
            scene.images.push_back(read_png(dir / v.at("image").get<std::string>()));
        }
        scene.train = m.at("train").get<std::vector<std::size_t>>();
        scene.test = m.at("test").get<std::vector<std::size_t>>();
        scene.background = to_vec3(m.at("background"));
        scene.bounds.min = to_vec3(m.at("bounds").at("min"));
        scene.bounds.max = to_vec3(m.at("bounds").at("max"));
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
    }
    try {
        scene.check();
    } catch (const ContractError& e) {
        throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
    }
    return scene;
}

DecodedGaussian FlatGaussian::decoded() const {
    DecodedGaussian g;
    g.mu = mu;
    g.s = scale;
    g.q = rotation.normalized();
    g.sigma = build_covariance(g.s, g.q);
    g.alpha = opacity;
    g.color = color;
    return g;
}

SyntheticScene gen_synthetic_scene(const SyntheticSceneOptions& options, std::uint64_t seed) {
    if (options.n_gaussians < 1) throw ContractError("gen_synthetic_scene needs at least one Gaussian");
    if (options.n_cameras < 1 || options.resolution < 1) {
        throw ContractError("gen_synthetic_scene needs at least one camera and pixel");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    SyntheticScene out;
    out.truth.reserve(options.n_gaussians);
    for (std::size_t i = 0; i < options.n_gaussians; ++i) {
        FlatGaussian g;
        g.mu = {unit(rng), unit(rng), unit(rng)};
        for (int k = 0; k < 3; ++k) g.scale[k] = 0.02 * std::pow(4.0, unit(rng));
        Quat q(normal(rng), normal(rng), normal(rng), normal(rng));
        g.rotation = q.norm() > 1e-12 ? Quat(q.normalized()) : Quat(1.0, 0.0, 0.0, 0.0);
        g.opacity = 0.5 + 0.45 * unit(rng);
        g.color = {unit(rng), unit(rng), unit(rng)};
        out.truth.push_back(g);
    }
    std::vector<DecodedGaussian> decoded;
    decoded.reserve(out.truth.size());
    for (const auto& g : out.truth) decoded.push_back(g.decoded());

    SceneDataset& data = out.dataset;
    data.background = Eigen::Vector3d::Zero();
    data.bounds.min = Eigen::Vector3d::Zero();
    data.bounds.max = Eigen::Vector3d::Ones();
    const Eigen::Vector3d target = data.bounds.center();
    const int res = options.resolution;
    for (std::size_t i = 0; i < options.n_cameras; ++i) {
        const double theta = 2.0 * std::numbers::pi * static_cast<double>(i) / options.n_cameras;
        const double lift = 0.6 * (static_cast<double>(i % 3) - 1.0);
        const Eigen::Vector3d eye = target + Eigen::Vector3d(options.ring_radius * std::cos(theta),
                                                             options.ring_radius * std::sin(theta), lift);
        const Camera cam = Camera::look_at(eye, target, Eigen::Vector3d::UnitZ(),
                                           options.focal_factor * res, res, res);
        data.cameras.push_back(cam);
        data.images.push_back(render_gaussians(decoded, cam, data.background).image);
        if (options.test_every > 0 && i % options.test_every == options.test_every - 1) {
            data.test.push_back(i);
        } else {
            data.train.push_back(i);
        }
    }
    return out;
}

} // namespace gforest
