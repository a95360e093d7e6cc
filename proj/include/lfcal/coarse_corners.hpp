#pragma once

// Pixel-level checkerboard corner finding on per-lens views (lens-mean or
// center view) and ordering of the corners into board topology.

#include <optional>
#include <vector>

#include "lfcal/board.hpp"
#include "lfcal/raw_image.hpp"

namespace lfcal {

/// A corner position stored as an anchor lens plus an offset from its center
/// in raw pixels. Keeping the two apart makes downstream arithmetic exact
/// under translations by whole lens pitches.
struct CoarseCorner {
  LensIndex anchor;
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();
  PixelPoint position = PixelPoint::Zero();  ///< anchor center + offset
  double strength = 0;                       ///< saddle response
};

struct SaddleOptions {
  double smoothing_sigma = 1.0;     ///< lens units
  double relative_threshold = 0.1;  ///< of the strongest response
  double circle_radius = 1.5;       ///< lens units, alternation test
  int max_candidates = 0;           ///< 0 = unlimited
};

/// Saddle points of a lens-indexed view (x = column, y = row): local maxima
/// of -det(Hessian) in a 5x5 window that also pass a four-alternation circle
/// test, refined to sub-lens accuracy on a local quadratic model. Sorted by
/// decreasing strength.
std::vector<CoarseCorner> find_saddle_points(const Image2D& view, const MicroLensGrid& grid,
                                             const SaddleOptions& opt = {});

/// Board-indexed coarse corners, row-major (i * cols + j); missing corners
/// are empty.
struct BoardTopology {
  int rows = 0;
  int cols = 0;
  std::vector<std::optional<CoarseCorner>> corners;

  const std::optional<CoarseCorner>& at(int i, int j) const { return corners[i * cols + j]; }
};

/// Grows a lattice from the strongest candidates and labels it with board
/// indices. Throws DetectionFailure unless the lattice spans exactly
/// spec.rows x spec.cols (in either orientation).
BoardTopology order_board(const std::vector<CoarseCorner>& candidates,
                          const CheckerboardSpec& spec);

/// Baseline detector for comparisons: saddle points on the center view,
/// ordered into board topology. Positions are raw pixels.
BoardTopology detect_center_view_corners(const RawImage& raw, const MicroLensGrid& grid,
                                         const CheckerboardSpec& spec,
                                         const SaddleOptions& opt = {});

/// Raw-pixel anchor/offset form of a fractional (row, col) lens position.
CoarseCorner corner_from_lens_coords(const MicroLensGrid& grid, double row, double col);

}  // namespace lfcal
