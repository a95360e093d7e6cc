#pragma once

// Ray-traced checkerboard renderer for a thin main lens in front of a pinhole
// micro-lens array. It works from the optical geometry only (similar
// triangles plus the thin-lens law) and never calls the projection model, so
// its output can serve as ground truth for it.

#include <cstdint>
#include <vector>

#include "lfcal/board.hpp"
#include "lfcal/core_model.hpp"
#include "lfcal/distortion.hpp"
#include "lfcal/raw_image.hpp"

namespace lfcal {

struct SceneBoard {
  CheckerboardSpec spec;
  Pose pose;

  /// Throws InvalidArgument for a non-rotation R and BehindCamera if any part
  /// of the printed area (corners plus one border cell) has Z <= 0.
  void validate() const;
};

struct RenderConfig {
  PhysicalCameraParams cam;
  MicroLensGrid grid;
  int width = 0;
  int height = 0;
  /// Per-pixel samples on a regular n x n lattice (rounded up to a square).
  int samples_per_pixel = 16;
  /// When larger than samples_per_pixel, pixels are first probed on their
  /// boundary (sqrt(samples_per_pixel) points per side); uniform pixels take
  /// that value exactly and the rest are integrated on this denser lattice.
  int edge_samples_per_pixel = 256;
  /// Subdivision of the main-lens patch each pixel integrates. With pinhole
  /// micro-lenses that patch is the back-projected pixel footprint, so this
  /// multiplies the footprint lattice.
  int aperture_samples = 1;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  DistortionCoeffs distortion;
  int threads = 0;

  double black = 0.1;
  double white = 0.9;
  double background = 0.5;

  void validate() const;
};

/// Outward ray (after the main lens) of the chief ray through the point
/// (x, y) on the sensor and the pinhole of the micro-lens whose image center
/// is `sub_center`.
Ray4 trace_pixel_ray(const PhysicalCameraParams& cam, const PixelPoint& sensor_point,
                     const PixelPoint& sub_center);

/// Board intensity at board-plane coordinates (millimetres).
double board_intensity(const CheckerboardSpec& spec, double bx, double by,
                       const RenderConfig& cfg);

RawImage render(const SceneBoard& board, const RenderConfig& cfg);

/// Adds clipped zero-mean Gaussian noise. Each pixel draws from a hash of
/// (seed, pixel index), so output is independent of thread count.
void add_noise(RawImage& img, double sigma, std::uint64_t seed, int threads = 0);

/// Ground-truth LF-point per inner corner, row-major over (i, j). With
/// non-zero distortion the center-view position is the distorted one.
std::vector<LFPoint> analytic_corner_lf_points(const SceneBoard& board,
                                               const PhysicalCameraParams& cam,
                                               const DistortionCoeffs& distortion = {});

/// Flat-field image with a Gaussian fall-off around every sub-image center.
RawImage render_white_image(const MicroLensGrid& grid, int width, int height,
                            double sigma_fraction = 0.35);

}  // namespace lfcal
