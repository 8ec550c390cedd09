#pragma once

#include <Eigen/Core>

namespace gforest {

/// Pinhole camera, OpenCV convention: camera x right, y down, z forward.
/// `rotation`/`translation` map world to camera: x_cam = R x_world + t.
struct Camera {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

    /// Throws ContractError on a non-orthonormal rotation or empty image.
    void check() const;

    static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                          const Eigen::Vector3d& up, double focal, int width, int height);
};

} // namespace gforest
