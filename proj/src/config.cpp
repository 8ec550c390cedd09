#include "gforest/config.hpp"
#include "gforest/errors.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>

namespace gforest {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw FormatError(fmt::format("{}: expected a number, got '{}'", key, v));
}

long to_long(const std::string& key, const std::string& v) {
    long out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) {
        throw FormatError(fmt::format("{}: expected an integer, got '{}'", key, v));
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw FormatError(fmt::format("{}: expected a boolean, got '{}'", key, v));
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

Setter real(double TrainConfig::*m) {
    return [m](TrainConfig& c, const std::string& k, const std::string& v) { c.*m = to_double(k, v); };
}
Setter integer(long TrainConfig::*m) {
    return [m](TrainConfig& c, const std::string& k, const std::string& v) { c.*m = to_long(k, v); };
}
Setter rate(double LearningRates::*m) {
    return [m](TrainConfig& c, const std::string& k, const std::string& v) { c.lr.*m = to_double(k, v); };
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"grow_t0", real(&TrainConfig::grow_t0)},
        {"grow_t1", real(&TrainConfig::grow_t1)},
        {"grow_t2", real(&TrainConfig::grow_t2)},
        {"stop_root", integer(&TrainConfig::stop_root)},
        {"stop_internal", integer(&TrainConfig::stop_internal)},
        {"stop_leaf", integer(&TrainConfig::stop_leaf)},
        {"total_iters", integer(&TrainConfig::total_iters)},
        {"warmup", integer(&TrainConfig::warmup)},
        {"iters_scale", real(&TrainConfig::iters_scale)},
        {"growth_interval", integer(&TrainConfig::growth_interval)},
        {"prune_interval", integer(&TrainConfig::prune_interval)},
        {"prune_interval_late", integer(&TrainConfig::prune_interval_late)},
        {"prune_alpha", real(&TrainConfig::prune_alpha)},
        {"prune_scale", real(&TrainConfig::prune_scale)},
        {"split_factor", real(&TrainConfig::split_factor)},
        {"lambda", real(&TrainConfig::lambda)},
        {"opacity_reset_interval", integer(&TrainConfig::opacity_reset_interval)},
        {"log_interval", integer(&TrainConfig::log_interval)},
        {"lr_position", rate(&LearningRates::position)},
        {"lr_position_final", rate(&LearningRates::position_final)},
        {"lr_position_scale", rate(&LearningRates::position_scale)},
        {"lr_alpha", rate(&LearningRates::alpha)},
        {"lr_log_gamma", rate(&LearningRates::log_gamma)},
        {"lr_features", rate(&LearningRates::features)},
        {"lr_mlp", rate(&LearningRates::mlp)},
        {"opacity_reset",
         [](TrainConfig& c, const std::string& k, const std::string& v) { c.opacity_reset = to_bool(k, v); }},
        {"d_root",
         [](TrainConfig& c, const std::string& k, const std::string& v) { c.dims.root = static_cast<int>(to_long(k, v)); }},
        {"d_internal",
         [](TrainConfig& c, const std::string& k, const std::string& v) {
             c.dims.internal = static_cast<int>(to_long(k, v));
         }},
        {"k", [](TrainConfig& c, const std::string& k, const std::string& v) {
             const long n = to_long(k, v);
             if (n < 1) throw FormatError("k must be >= 1");
             c.k = static_cast<std::size_t>(n);
         }},
        {"n_synth", [](TrainConfig& c, const std::string& k, const std::string& v) {
             const long n = to_long(k, v);
             if (n < 1) throw FormatError("n_synth must be >= 1");
             c.n_synth = static_cast<std::size_t>(n);
         }},
        {"dims", [](TrainConfig& c, const std::string&, const std::string& v) {
             const auto d = dims_preset(v);
             if (!d) throw FormatError(fmt::format("dims: unknown preset '{}'", v));
             c.dims = *d;
         }},
        {"init", [](TrainConfig& c, const std::string&, const std::string& v) {
             if (v == "desk") {
                 c.k = 64;
                 c.n_synth = 5000;
             } else if (v == "full") {
                 c.k = 10000;
                 c.n_synth = 100000;
             } else {
                 throw FormatError(fmt::format("init: unknown preset '{}'", v));
             }
         }},
        {"cg_mode", [](TrainConfig& c, const std::string&, const std::string& v) {
             if (v == "mean_pixel") c.cg_mode = CgMode::MeanPixel;
             else if (v == "sum_pixel") c.cg_mode = CgMode::SumPixel;
             else if (v == "mean_ndc") c.cg_mode = CgMode::MeanNdc;
             else throw FormatError(fmt::format("cg_mode: unknown mode '{}'", v));
         }},
    };
    return table;
}

} // namespace

std::optional<FeatureDims> dims_preset(const std::string& name) {
    if (name == "dims-a") return FeatureDims{16, 8};
    if (name == "dims-b") return FeatureDims{24, 16};
    if (name == "dims-c") return FeatureDims{32, 24};
    return std::nullopt;
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw FormatError(fmt::format("unknown config key '{}'", key));
    it->second(cfg, key, value);
}

void apply_config(TrainConfig& cfg, std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError(fmt::format("config line {}: expected key = value", line_no));
        }
        try {
            apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const FormatError& e) {
            throw FormatError(fmt::format("config line {}: {}", line_no, e.what()));
        }
    }
}

void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(fmt::format("cannot open {}", path.string()));
    apply_config(cfg, in);
}

} // namespace gforest
