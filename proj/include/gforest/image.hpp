#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace gforest {

/// Interleaved RGB image, row-major, values nominally in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    static Image filled(int w, int h, const Eigen::Vector3d& rgb) {
        Image img(w, h);
        for (std::size_t p = 0; p < img.pixel_count(); ++p) {
            for (int c = 0; c < 3; ++c) img.data[p * 3 + c] = rgb[c];
        }
        return img;
    }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * 3 + c;
    }
    double& at(int x, int y, int c) { return data[index(x, y, c)]; }
    double at(int x, int y, int c) const { return data[index(x, y, c)]; }
    bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

} // namespace gforest
