#pragma once

#include <Eigen/Core>

#include "lfcal/core_model.hpp"

namespace lfcal {

/// Main-lens distortion of the center view: second-order radial (k1, k2)
/// plus tangential (p1, p2), acting on normalized coordinates.
struct DistortionCoeffs {
  double k1 = 0, k2 = 0, p1 = 0, p2 = 0;

  bool is_zero() const { return k1 == 0 && k2 == 0 && p1 == 0 && p2 == 0; }
};

/// Distorted normalized coordinates of an undistorted normalized point.
Eigen::Vector2d apply_distortion(const Eigen::Vector2d& undistorted, const DistortionCoeffs& d);

/// Inverse of apply_distortion by Newton iteration.
Eigen::Vector2d remove_distortion(const Eigen::Vector2d& distorted, const DistortionCoeffs& d);

/// Normalized coordinates of a center-view pixel, (x - c_x) / f_x.
Eigen::Vector2d normalize(const PixelPoint& p, const SarbIntrinsics& intr);
PixelPoint denormalize(const Eigen::Vector2d& n, const SarbIntrinsics& intr);

/// Full forward center-view model: pinhole, then distortion, then pixels.
PixelPoint project_distorted(const ScenePoint& P, const SarbIntrinsics& intr,
                             const DistortionCoeffs& d);

/// Undistorted pixel position of a distorted center-view observation.
PixelPoint undistort_pixel(const PixelPoint& p, const SarbIntrinsics& intr,
                           const DistortionCoeffs& d);

}  // namespace lfcal
