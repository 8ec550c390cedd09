#include "gforest/model_io.hpp"
#include "gforest/errors.hpp"

#include <Eigen/Core>
#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gforest {

std::uint16_t to_half_bits(double value) {
    return Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(static_cast<float>(value)));
}

double from_half_bits(std::uint16_t bits) {
    return static_cast<double>(static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits)));
}

namespace {

class Writer {
public:
    explicit Writer(std::size_t reserve) { bytes_.reserve(reserve); }

    void u16(std::uint16_t v) {
        bytes_.push_back(static_cast<std::uint8_t>(v & 0xff));
        bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int s = 0; s < 32; s += 8) bytes_.push_back(static_cast<std::uint8_t>((v >> s) & 0xff));
    }
    void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    void half(double v) { u16(to_half_bits(v)); }
    void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }

    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint16_t u16() {
        need(2);
        const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
    double half() { return from_half_bits(u16()); }
    void raw(char* out, std::size_t n) {
        need(n);
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(fmt::format("model file truncated at byte {}", pos_));
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

struct MlpShape {
    std::uint16_t input = 0;
    std::uint16_t hidden = 0;
    std::uint16_t layers = 0;
    std::uint16_t output = 0;

    bool empty() const { return input == 0 && hidden == 0 && layers == 0 && output == 0; }
};

MlpShape shape_of(const Mlp& mlp) {
    return {static_cast<std::uint16_t>(mlp.input_dim()), static_cast<std::uint16_t>(mlp.hidden_dim()),
            static_cast<std::uint16_t>(mlp.n_hidden()), static_cast<std::uint16_t>(mlp.output_dim())};
}

Mlp make_mlp(const MlpShape& s) {
    if (s.empty()) return Mlp{};
    if (s.input == 0 || s.hidden == 0 || s.layers == 0 || s.output == 0) {
        throw FormatError("model file has a partially zero decoder shape");
    }
    return Mlp(s.input, s.output, s.hidden, s.layers);
}

void check_dim(std::size_t v, const char* what) {
    if (v > 0xffff) throw ContractError(fmt::format("{} does not fit the file format", what));
}

} // namespace

std::size_t model_byte_size(const Model& model) {
    const auto& f = model.forest;
    return kModelHeaderSize + 2 * f.roots.size() * static_cast<std::size_t>(f.dims.root) +
           f.internals.size() * (2 * static_cast<std::size_t>(f.dims.internal) + 4) +
           kLeafRecordSize * f.leaves.size() +
           2 * (model.decoders.cov.parameter_count() + model.decoders.rgb.parameter_count());
}

std::vector<std::uint8_t> save_model(const Model& model) {
    const Forest& f = model.forest;
    const ValidationReport report = validate(f);
    if (!report.range_violations.empty() || !report.dim_mismatch.empty()) {
        throw ContractError("refusing to save a structurally invalid forest:\n" + report.summary());
    }
    check_dim(static_cast<std::size_t>(f.dims.root), "D_R");
    check_dim(static_cast<std::size_t>(f.dims.internal), "D_I");
    const MlpShape cov = shape_of(model.decoders.cov);
    const MlpShape rgb = shape_of(model.decoders.rgb);

    Writer w(model_byte_size(model));
    w.raw(kModelMagic, 4);
    w.u16(kModelVersion);
    w.u16(0);
    w.u32(static_cast<std::uint32_t>(f.roots.size()));
    w.u32(static_cast<std::uint32_t>(f.internals.size()));
    w.u32(static_cast<std::uint32_t>(f.leaves.size()));
    w.u16(static_cast<std::uint16_t>(f.dims.root));
    w.u16(static_cast<std::uint16_t>(f.dims.internal));
    for (const MlpShape& s : {cov, rgb}) {
        w.u16(s.input);
        w.u16(s.hidden);
        w.u16(s.layers);
        w.u16(s.output);
    }

    for (const auto& r : f.roots) {
        for (Eigen::Index k = 0; k < r.features.size(); ++k) w.half(r.features[k]);
    }
    for (const auto& n : f.internals) {
        for (Eigen::Index k = 0; k < n.features.size(); ++k) w.half(n.features[k]);
    }
    for (const auto& n : f.internals) w.u32(n.parent);
    for (const auto& l : f.leaves) {
        w.f32(l.mu.x());
        w.f32(l.mu.y());
        w.f32(l.mu.z());
        w.f32(l.log_gamma_s);
        w.f32(l.alpha_raw);
        w.u32(l.parent);
    }
    for (const Mlp* mlp : {&model.decoders.cov, &model.decoders.rgb}) {
        const Eigen::VectorXd& p = mlp->parameters();
        for (Eigen::Index k = 0; k < p.size(); ++k) w.half(p[k]);
    }
    return w.take();
}

Model load_model(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kModelMagic, 4) != 0) throw FormatError("bad model magic");
    const auto version = r.u16();
    if (version != kModelVersion) throw FormatError(fmt::format("unsupported model version {}", version));
    r.u16();
    const std::size_t n_root = r.u32();
    const std::size_t n_int = r.u32();
    const std::size_t n_leaf = r.u32();
    const int d_root = r.u16();
    const int d_int = r.u16();
    MlpShape shapes[2];
    for (auto& s : shapes) {
        s.input = r.u16();
        s.hidden = r.u16();
        s.layers = r.u16();
        s.output = r.u16();
    }

    Model model{Forest(FeatureDims{d_root, d_int}), Decoders{make_mlp(shapes[0]), make_mlp(shapes[1])}};
    const std::size_t expected = kModelHeaderSize + 2 * n_root * static_cast<std::size_t>(d_root) +
                                 n_int * (2 * static_cast<std::size_t>(d_int) + 4) + kLeafRecordSize * n_leaf +
                                 2 * (model.decoders.cov.parameter_count() + model.decoders.rgb.parameter_count());
    if (bytes.size() != expected) {
        throw FormatError(fmt::format("model file is {} bytes, header implies {}", bytes.size(), expected));
    }

    Forest& f = model.forest;
    f.roots.resize(n_root);
    for (auto& root : f.roots) {
        root.features.resize(d_root);
        for (int k = 0; k < d_root; ++k) root.features[k] = r.half();
    }
    f.internals.resize(n_int);
    for (auto& n : f.internals) {
        n.features.resize(d_int);
        for (int k = 0; k < d_int; ++k) n.features[k] = r.half();
    }
    for (auto& n : f.internals) n.parent = r.u32();
    f.leaves.resize(n_leaf);
    for (auto& l : f.leaves) {
        l.mu.x() = r.f32();
        l.mu.y() = r.f32();
        l.mu.z() = r.f32();
        l.log_gamma_s = r.f32();
        l.alpha_raw = r.f32();
        l.parent = r.u32();
    }
    for (Mlp* mlp : {&model.decoders.cov, &model.decoders.rgb}) {
        Eigen::VectorXd& p = mlp->mutable_parameters();
        for (Eigen::Index k = 0; k < p.size(); ++k) p[k] = r.half();
    }

    const ValidationReport report = validate(f);
    if (!report.range_violations.empty()) {
        throw FormatError("model file has dangling parent pointers:\n" + report.summary());
    }
    return model;
}

void save_model_file(const Model& model, const std::filesystem::path& path) {
    const auto bytes = save_model(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(fmt::format("cannot open {} for writing", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(fmt::format("failed writing {}", path.string()));
}

Model load_model_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(fmt::format("cannot open {}", path.string()));
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_model(bytes);
}

} // namespace gforest
