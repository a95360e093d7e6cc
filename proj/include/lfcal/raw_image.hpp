#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lfcal/core_model.hpp"

namespace lfcal {

/// Single-channel raw sensor image, intensities normalized to [0, 1].
/// Pixel (x, y) has its center at integer coordinates.
class RawImage {
 public:
  RawImage() = default;
  RawImage(int width, int height, float fill = 0.0f);
  /// Throws InvalidArgument on a size mismatch or any value outside [0, 1].
  RawImage(int width, int height, std::vector<float> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  float at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  float& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<const float> pixels() const { return pixels_; }
  std::span<float> pixels() { return pixels_; }

  bool contains(double x, double y) const {
    return x >= 0.0 && y >= 0.0 && x <= width_ - 1.0 && y <= height_ - 1.0;
  }

  /// Bilinear sample; zero outside the sensor.
  double sample(double x, double y) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> pixels_;
};

/// Dense double-valued image used for derived views (center view, lens means).
struct Image2D {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image2D() = default;
  Image2D(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double sample(double x, double y) const;  ///< bilinear, edge-clamped
};

enum class GridLayout { Rectangular, Hexagonal };

struct LensIndex {
  int i = 0;  ///< row
  int j = 0;  ///< column
  friend bool operator==(const LensIndex&, const LensIndex&) = default;
};

/// Lattice of sub-image centers on the sensor.
struct MicroLensGrid {
  GridLayout layout = GridLayout::Rectangular;
  double pitch = 10.0;   ///< pixels between neighboring centers
  double rotation = 0.0; ///< radians, lattice row direction vs. sensor +x
  PixelPoint origin = PixelPoint::Zero();  ///< center of lens (0, 0)
  int rows = 0;
  int cols = 0;

  void validate() const;

  /// Throws IndexOutOfRange outside [0, rows) x [0, cols).
  PixelPoint lens_center(int i, int j) const;
  /// Continuous version of lens_center for fractional indices. Only
  /// meaningful for rectangular grids.
  PixelPoint lens_center_fractional(double i, double j) const;
  /// Inverse of lens_center_fractional for rectangular grids: (i, j) as (row, col).
  Eigen::Vector2d fractional_index(const PixelPoint& p) const;

  /// Nearest lattice index to p among valid indices; ties go to the smaller
  /// (i, j) lexicographically.
  LensIndex nearest_lens(const PixelPoint& p) const;

  bool center_in_bounds(int i, int j, int width, int height) const;
};

/// One micro-lens image: its center, the usable disc radius and the image it
/// refers to.
struct SubImage {
  PixelPoint center;
  double radius = 0;
  const RawImage* raw = nullptr;
};

/// Guard-banded disc radius used for sub-images: 0.5 * pitch - 0.5.
inline double default_sub_image_radius(const MicroLensGrid& grid) {
  return 0.5 * grid.pitch - 0.5;
}

/// Throws InvalidArgument if radius exceeds pitch / 2.
SubImage sub_image(const RawImage& raw, const MicroLensGrid& grid, int i, int j, double radius);

/// Integer pixel offsets (dx, dy) with dx^2 + dy^2 <= radius^2.
std::vector<Eigen::Vector2i> disc_offsets(double radius);

struct GridEstimate {
  MicroLensGrid grid;
  double residual_rms = 0;  ///< pixels
  int maxima_used = 0;
};

/// Recovers the sub-image lattice from a white (flat-field) image. Throws
/// EstimationFailure when fewer than 16 usable maxima are found.
GridEstimate estimate_grid_from_white_image(const RawImage& white, GridLayout layout);

/// Center-view sub-aperture image: bilinear sample of the raw image at every
/// sub-image center, indexed (col, row). Centers off the sensor read 0.
Image2D center_view_image(const RawImage& raw, const MicroLensGrid& grid);

/// Mean intensity over each sub-image disc. A refocused view with a small
/// symmetric blur; the coarse corner stage works on it.
Image2D lens_mean_image(const RawImage& raw, const MicroLensGrid& grid, double radius);

}  // namespace lfcal
