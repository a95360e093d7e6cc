#include "lfcal/distortion.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace lfcal {

Eigen::Vector2d apply_distortion(const Eigen::Vector2d& n, const DistortionCoeffs& d) {
  const double x = n.x();
  const double y = n.y();
  const double r2 = x * x + y * y;
  const double radial = d.k1 * r2 + d.k2 * r2 * r2;
  const double x_tan = 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
  const double y_tan = d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;
  return {x + x * radial + x_tan, y + y * radial + y_tan};
}

Eigen::Vector2d remove_distortion(const Eigen::Vector2d& distorted, const DistortionCoeffs& d) {
  if (d.is_zero()) return distorted;
  Eigen::Vector2d x = distorted;
  for (int it = 0; it < 50; ++it) {
    const Eigen::Vector2d r = apply_distortion(x, d) - distorted;
    if (r.norm() < 1e-15) break;
    // analytic Jacobian of apply_distortion
    const double u = x.x(), v = x.y();
    const double r2 = u * u + v * v;
    const double rad = d.k1 * r2 + d.k2 * r2 * r2;
    const double drad = d.k1 + 2.0 * d.k2 * r2;  // d(rad)/d(r2)
    Eigen::Matrix2d J;
    J(0, 0) = 1 + rad + u * drad * 2 * u + 2 * d.p1 * v + d.p2 * 6 * u;
    J(0, 1) = u * drad * 2 * v + 2 * d.p1 * u + d.p2 * 2 * v;
    J(1, 0) = v * drad * 2 * u + d.p1 * 2 * u + 2 * d.p2 * v;
    J(1, 1) = 1 + rad + v * drad * 2 * v + d.p1 * 6 * v + 2 * d.p2 * u;
    x -= J.lu().solve(r);
  }
  return x;
}

Eigen::Vector2d normalize(const PixelPoint& p, const SarbIntrinsics& intr) {
  return {(p.x() - intr.c_x) / intr.f_x, (p.y() - intr.c_y) / intr.f_y};
}

PixelPoint denormalize(const Eigen::Vector2d& n, const SarbIntrinsics& intr) {
  return {intr.f_x * n.x() + intr.c_x, intr.f_y * n.y() + intr.c_y};
}

PixelPoint project_distorted(const ScenePoint& P, const SarbIntrinsics& intr,
                             const DistortionCoeffs& d) {
  return denormalize(apply_distortion({P.x() / P.z(), P.y() / P.z()}, d), intr);
}

PixelPoint undistort_pixel(const PixelPoint& p, const SarbIntrinsics& intr,
                           const DistortionCoeffs& d) {
  return denormalize(remove_distortion(normalize(p, intr), d), intr);
}

}  // namespace lfcal
