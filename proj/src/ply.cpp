#include "gforest/ply.hpp"
#include "gforest/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gforest {

namespace {

enum class Scalar { Int8, Uint8, Int16, Uint16, Int32, Uint32, Float32, Float64 };

std::optional<Scalar> parse_scalar(const std::string& s) {
    if (s == "char" || s == "int8") return Scalar::Int8;
    if (s == "uchar" || s == "uint8") return Scalar::Uint8;
    if (s == "short" || s == "int16") return Scalar::Int16;
    if (s == "ushort" || s == "uint16") return Scalar::Uint16;
    if (s == "int" || s == "int32") return Scalar::Int32;
    if (s == "uint" || s == "uint32") return Scalar::Uint32;
    if (s == "float" || s == "float32") return Scalar::Float32;
    if (s == "double" || s == "float64") return Scalar::Float64;
    return std::nullopt;
}

std::size_t scalar_size(Scalar s) {
    switch (s) {
    case Scalar::Int8:
    case Scalar::Uint8: return 1;
    case Scalar::Int16:
    case Scalar::Uint16: return 2;
    case Scalar::Int32:
    case Scalar::Uint32:
    case Scalar::Float32: return 4;
    case Scalar::Float64: return 8;
    }
    return 0;
}

struct Property {
    std::string name;
    Scalar type = Scalar::Float32;
    bool is_list = false;
    Scalar count_type = Scalar::Uint8;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> props;
};

enum class Encoding { Ascii, BinaryLe };

double read_binary(std::istream& in, Scalar t) {
    unsigned char b[8] = {};
    const std::size_t n = scalar_size(t);
    in.read(reinterpret_cast<char*>(b), static_cast<std::streamsize>(n));
    if (!in) throw FormatError("ply: unexpected end of binary data");
    std::uint64_t u = 0;
    for (std::size_t i = 0; i < n; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    switch (t) {
    case Scalar::Int8: return static_cast<std::int8_t>(u);
    case Scalar::Uint8: return static_cast<std::uint8_t>(u);
    case Scalar::Int16: return static_cast<std::int16_t>(u);
    case Scalar::Uint16: return static_cast<std::uint16_t>(u);
    case Scalar::Int32: return static_cast<std::int32_t>(u);
    case Scalar::Uint32: return static_cast<std::uint32_t>(u);
    case Scalar::Float32: return std::bit_cast<float>(static_cast<std::uint32_t>(u));
    case Scalar::Float64: return std::bit_cast<double>(u);
    }
    return 0.0;
}

class AsciiTokens {
public:
    AsciiTokens(std::istream& in, std::size_t line) : in_(in), line_(line) {}

    double next() {
        while (!(line_stream_ >> token_)) {
            std::string line;
            if (!std::getline(in_, line)) throw FormatError("ply: unexpected end of ASCII data");
            ++line_;
            line_stream_.clear();
            line_stream_.str(line);
        }
        try {
            std::size_t used = 0;
            const double v = std::stod(token_, &used);
            if (used != token_.size()) throw std::invalid_argument(token_);
            return v;
        } catch (const std::exception&) {
            throw FormatError(fmt::format("ply line {}: bad number '{}'", line_, token_));
        }
    }

private:
    std::istream& in_;
    std::size_t line_;
    std::istringstream line_stream_;
    std::string token_;
};

double color_value(double v, Scalar t) {
    if (t == Scalar::Uint8) return v / 255.0;
    if (t == Scalar::Uint16) return v / 65535.0;
    return v;
}

} // namespace

PointCloud read_ply(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) -> FormatError {
        return FormatError(fmt::format("ply line {}: {}", line_no, what));
    };

    if (!std::getline(in, line)) throw FormatError("ply line 1: empty file");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "ply") throw fail("missing 'ply' magic");

    std::optional<Encoding> encoding;
    std::vector<Element> elements;
    bool ended = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "comment" || key == "obj_info") continue;
        if (key == "format") {
            std::string fmt_name, version;
            if (!(ls >> fmt_name >> version)) throw fail("malformed format line");
            if (fmt_name == "ascii") encoding = Encoding::Ascii;
            else if (fmt_name == "binary_little_endian") encoding = Encoding::BinaryLe;
            else throw fail(fmt::format("unsupported format '{}'", fmt_name));
        } else if (key == "element") {
            Element e;
            long long count = -1;
            if (!(ls >> e.name >> count) || count < 0) throw fail("malformed element line");
            e.count = static_cast<std::size_t>(count);
            elements.push_back(std::move(e));
        } else if (key == "property") {
            if (elements.empty()) throw fail("property before any element");
            Property p;
            std::string type;
            if (!(ls >> type)) throw fail("malformed property line");
            if (type == "list") {
                std::string count_type, item_type;
                if (!(ls >> count_type >> item_type >> p.name)) throw fail("malformed list property");
                const auto ct = parse_scalar(count_type);
                const auto it = parse_scalar(item_type);
                if (!ct || !it) throw fail("unknown list property type");
                p.is_list = true;
                p.count_type = *ct;
                p.type = *it;
            } else {
                const auto t = parse_scalar(type);
                if (!t || !(ls >> p.name)) throw fail(fmt::format("unknown property type '{}'", type));
                p.type = *t;
            }
            elements.back().props.push_back(std::move(p));
        } else if (key == "end_header") {
            ended = true;
            break;
        } else {
            throw fail(fmt::format("unexpected header keyword '{}'", key));
        }
    }
    if (!ended) throw fail("header has no end_header");
    if (!encoding) throw fail("header has no format line");

    PointCloud cloud;
    AsciiTokens ascii(in, line_no);
    auto read_value = [&](Scalar t) {
        return *encoding == Encoding::Ascii ? ascii.next() : read_binary(in, t);
    };

    bool found_vertex = false;
    for (const Element& e : elements) {
        const bool is_vertex = e.name == "vertex";
        int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
        for (int k = 0; k < static_cast<int>(e.props.size()); ++k) {
            const auto& p = e.props[k];
            if (p.is_list) continue;
            if (p.name == "x") ix = k;
            else if (p.name == "y") iy = k;
            else if (p.name == "z") iz = k;
            else if (p.name == "red" || p.name == "r") ir = k;
            else if (p.name == "green" || p.name == "g") ig = k;
            else if (p.name == "blue" || p.name == "b") ib = k;
        }
        if (is_vertex) {
            found_vertex = true;
            if (ix < 0 || iy < 0 || iz < 0) throw FormatError("ply: vertex element lacks x, y or z");
        }
        const bool colors = is_vertex && ir >= 0 && ig >= 0 && ib >= 0;

        std::vector<double> values(e.props.size());
        for (std::size_t i = 0; i < e.count; ++i) {
            for (std::size_t k = 0; k < e.props.size(); ++k) {
                const Property& p = e.props[k];
                if (p.is_list) {
                    const double n = read_value(p.count_type);
                    if (n < 0 || n != std::floor(n)) throw FormatError("ply: bad list length");
                    for (long long j = 0; j < static_cast<long long>(n); ++j) read_value(p.type);
                } else {
                    values[k] = read_value(p.type);
                }
            }
            if (!is_vertex) continue;
            cloud.positions.emplace_back(values[ix], values[iy], values[iz]);
            if (colors) {
                cloud.colors.emplace_back(color_value(values[ir], e.props[ir].type),
                                          color_value(values[ig], e.props[ig].type),
                                          color_value(values[ib], e.props[ib].type));
            }
        }
        if (is_vertex) break;
    }
    if (!found_vertex) throw FormatError("ply: no vertex element");
    return cloud;
}

PointCloud load_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(fmt::format("cannot open {}", path.string()));
    return read_ply(in);
}

void save_ply(const PointCloud& cloud, const std::filesystem::path& path) {
    const bool colors = !cloud.colors.empty();
    if (colors && cloud.colors.size() != cloud.positions.size()) {
        throw ContractError("save_ply: colors and positions differ in length");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(fmt::format("cannot open {} for writing", path.string()));
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << cloud.positions.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    if (colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "end_header\n";
    auto put_f32 = [&](double v) {
        const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
        out.write(b, 4);
    };
    for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
        for (int k = 0; k < 3; ++k) put_f32(cloud.positions[i][k]);
        if (colors) {
            for (int k = 0; k < 3; ++k) {
                const double v = std::clamp(cloud.colors[i][k], 0.0, 1.0);
                out.put(static_cast<char>(std::lround(v * 255.0)));
            }
        }
    }
    if (!out) throw FormatError(fmt::format("failed writing {}", path.string()));
}

} // namespace gforest
