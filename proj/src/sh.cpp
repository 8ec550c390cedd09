#include "gforest/sh.hpp"

namespace gforest {

namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                          -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                          0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                          -0.5900435899266435};

} // namespace

ShBasis sh_basis(const Eigen::Vector3d& dir) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    const double xx = x * x, yy = y * y, zz = z * z;
    ShBasis b;
    b[0] = kC0;
    b[1] = -kC1 * y;
    b[2] = kC1 * z;
    b[3] = -kC1 * x;
    b[4] = kC2[0] * x * y;
    b[5] = kC2[1] * y * z;
    b[6] = kC2[2] * (2.0 * zz - xx - yy);
    b[7] = kC2[3] * x * z;
    b[8] = kC2[4] * (xx - yy);
    b[9] = kC3[0] * y * (3.0 * xx - yy);
    b[10] = kC3[1] * x * y * z;
    b[11] = kC3[2] * y * (4.0 * zz - xx - yy);
    b[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = kC3[4] * x * (4.0 * zz - xx - yy);
    b[14] = kC3[5] * z * (xx - yy);
    b[15] = kC3[6] * x * (xx - 3.0 * yy);
    return b;
}

ShJacobian sh_basis_jacobian(const Eigen::Vector3d& dir) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    const double xx = x * x, yy = y * y, zz = z * z;
    ShJacobian j = ShJacobian::Zero();
    j.row(1) << 0.0, -kC1, 0.0;
    j.row(2) << 0.0, 0.0, kC1;
    j.row(3) << -kC1, 0.0, 0.0;
    j.row(4) << kC2[0] * y, kC2[0] * x, 0.0;
    j.row(5) << 0.0, kC2[1] * z, kC2[1] * y;
    j.row(6) << -2.0 * kC2[2] * x, -2.0 * kC2[2] * y, 4.0 * kC2[2] * z;
    j.row(7) << kC2[3] * z, 0.0, kC2[3] * x;
    j.row(8) << 2.0 * kC2[4] * x, -2.0 * kC2[4] * y, 0.0;
    j.row(9) << 6.0 * kC3[0] * x * y, kC3[0] * (3.0 * xx - 3.0 * yy), 0.0;
    j.row(10) << kC3[1] * y * z, kC3[1] * x * z, kC3[1] * x * y;
    j.row(11) << -2.0 * kC3[2] * x * y, kC3[2] * (4.0 * zz - xx - 3.0 * yy), 8.0 * kC3[2] * y * z;
    j.row(12) << -6.0 * kC3[3] * x * z, -6.0 * kC3[3] * y * z, kC3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy);
    j.row(13) << kC3[4] * (4.0 * zz - 3.0 * xx - yy), -2.0 * kC3[4] * x * y, 8.0 * kC3[4] * x * z;
    j.row(14) << 2.0 * kC3[5] * x * z, -2.0 * kC3[5] * y * z, kC3[5] * (xx - yy);
    j.row(15) << kC3[6] * (3.0 * xx - 3.0 * yy), -6.0 * kC3[6] * x * y, 0.0;
    return j;
}

} // namespace gforest
