#include "gforest/camera.hpp"
#include "gforest/errors.hpp"

#include <Eigen/Geometry>

#include <cmath>

namespace gforest {

void Camera::check() const {
    if (width < 1 || height < 1) throw ContractError("camera image size must be at least 1x1");
    const Eigen::Matrix3d err = rotation * rotation.transpose() - Eigen::Matrix3d::Identity();
    if (!rotation.allFinite() || err.cwiseAbs().maxCoeff() > 1e-6) {
        throw ContractError("camera rotation is not orthonormal");
    }
    if (!(fx > 0.0) || !(fy > 0.0) || !translation.allFinite()) {
        throw ContractError("camera intrinsics must be positive and finite");
    }
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                       const Eigen::Vector3d& up, double focal, int width, int height) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d right = forward.cross(up);
    if (right.norm() < 1e-9) right = forward.cross(Eigen::Vector3d::UnitX());
    right.normalize();
    const Eigen::Vector3d down = forward.cross(right);

    Camera cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * eye;
    cam.fx = cam.fy = focal;
    cam.width = width;
    cam.height = height;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    return cam;
}

} // namespace gforest
