#pragma once

// Sub-aperture related bipartition (SARB) geometry of a micro-lens-array
// light-field camera: ray/pixel parameterizations, the 5x5 pixel-to-ray
// projection matrix, the center-view pinhole intrinsics and the
// disparity-depth law that links all sub-apertures.
//
// Conventions: lengths in millimetres, image coordinates in raw-sensor
// pixels, disparity dimensionless. The camera Z axis points out of the
// camera; the main lens sits at Z = 0, the MLA at Z = -L and the sensor at
// Z = -(L + l).

#include <array>

#include <Eigen/Core>

namespace lfcal {

using ScenePoint = Eigen::Vector3d;
using PixelPoint = Eigen::Vector2d;

/// Two-plane ray: (s, t) on the main-lens plane, (u, v) slopes per unit Z.
struct Ray4 {
  double s = 0, t = 0, u = 0, v = 0;
};

/// Pixel in sensor-plane millimetres: offset from its sub-image center and
/// the sub-image center itself (relative to the optical axis).
struct PixelPhysical4 {
  double x_s = 0, y_s = 0, x_c = 0, y_c = 0;
};

/// Pixel by index: offset from its sub-image center and the center's pixel
/// position. Fractional values are allowed.
struct PixelIndex4 {
  double x_sp = 0, y_sp = 0, x_cp = 0, y_cp = 0;
};

struct PhysicalCameraParams {
  double F = 0;      ///< main-lens focal length
  double L = 0;      ///< main lens to MLA
  double l = 0;      ///< MLA to sensor
  double d_pix = 0;  ///< pixel pitch
  double c_x = 0, c_y = 0;  ///< principal point (pixels)

  /// Throws InvalidArgument unless F, L, l, d_pix are all positive and finite.
  void validate() const;
};

/// Calibrated model: center-view pinhole plus the inter-sub-aperture pair.
struct SarbIntrinsics {
  double f_x = 0, f_y = 0;
  double c_x = 0, c_y = 0;
  double K1 = 0;  ///< dimensionless disparity offset
  double K2 = 0;  ///< disparity-depth slope (mm)
};

/// Complete 4D description of a scene point: its center-view image position
/// in raw pixels plus its disparity.
struct LFPoint {
  double x_c_sub = 0, y_c_sub = 0;
  double lambda = 0;
};

/// Row-major 5x5 homogeneous map from [x_sp, y_sp, x_cp, y_cp, 1] to
/// [s, t, u_out, v_out, 1].
class ProjectionMatrix {
 public:
  ProjectionMatrix() { m_.fill(0.0); }

  double operator()(int r, int c) const { return m_[r * 5 + c]; }
  double& operator()(int r, int c) { return m_[r * 5 + c]; }

  Ray4 apply(const PixelIndex4& p) const;

 private:
  std::array<double, 25> m_;
};

PixelPhysical4 pixel_index_to_physical(const PixelIndex4& p, const PhysicalCameraParams& cam);

/// Thin-lens refraction. Takes the inner ray (u = u_in) and returns the outer
/// one; s, t are untouched. F may be +infinity.
Ray4 refract_main_lens(const Ray4& ray_in, double F);

/// Chief ray of a pixel through its micro-lens pinhole, on the camera side of
/// the main lens (u = u_in).
Ray4 pixel_to_inner_ray(const PixelPhysical4& p, const PhysicalCameraParams& cam);

ProjectionMatrix projection_matrix(const PhysicalCameraParams& cam);

SarbIntrinsics sarb_from_physical(const PhysicalCameraParams& cam);

/// Pinhole projection of a camera-frame point into the center view.
/// Throws DegeneratePoint when Z == 0.
PixelPoint center_view_project(const ScenePoint& P, const SarbIntrinsics& intr);

/// Offset (x_sp, y_sp) of the pixel that records P inside the sub-image
/// centered at (x_cp, y_cp). Throws FocalSingularity when K1*Z + K2 == 0.
PixelPoint scene_to_pixel(const ScenePoint& P, const PixelPoint& sub_center,
                          const SarbIntrinsics& intr);

double disparity_from_depth(double Z, const SarbIntrinsics& intr);
double depth_from_disparity(double lambda, const SarbIntrinsics& intr);

/// Position of an LF-point in the sub-aperture image at the given pixel
/// offset; the center view is offset (0, 0).
PixelPoint lf_point_slice(const LFPoint& lp, const PixelPoint& sub_aperture_offset);

}  // namespace lfcal
