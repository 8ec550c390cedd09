#pragma once

#include <Eigen/Core>

namespace gforest {

inline constexpr int kShBasisSize = 16;

using ShBasis = Eigen::Matrix<double, kShBasisSize, 1>;
using ShJacobian = Eigen::Matrix<double, kShBasisSize, 3>;

/// Real spherical-harmonics basis of bands 0..3 evaluated at a unit direction.
ShBasis sh_basis(const Eigen::Vector3d& dir);

/// Derivative of each basis polynomial w.r.t. (x, y, z), treating the
/// components as independent (no renormalization).
ShJacobian sh_basis_jacobian(const Eigen::Vector3d& dir);

} // namespace gforest
