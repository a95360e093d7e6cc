#pragma once

// Light-field line and point detection on raw micro-lens images: 4D
// templates for checkerboard edges, NCC scoring, derivative-free line
// refinement and line-line intersection in (x, y, lambda) space.

#include <array>
#include <optional>
#include <vector>

#include "lfcal/board.hpp"
#include "lfcal/coarse_corners.hpp"
#include "lfcal/core_model.hpp"
#include "lfcal/raw_image.hpp"

namespace lfcal {

enum class Orientation { Horizontal, Vertical };

/// Horizontal when the segment makes an angle of at most 45 degrees with the
/// x axis (|dy| <= |dx|). Throws DegenerateLine for coincident points.
Orientation classify_orientation(const PixelPoint& p1, const PixelPoint& p2);

/// A 3D line through its two endpoint LF-points. For a horizontal line the
/// endpoint abscissae are fixed and params = [y1, lambda1, y2, lambda2]; for
/// a vertical line the ordinates are fixed and params = [x1, lambda1, x2,
/// lambda2].
struct LFLine {
  Orientation orientation = Orientation::Horizontal;
  std::array<double, 2> fixed{0, 0};
  std::array<double, 4> params{0, 0, 0, 0};

  LFPoint endpoint(int k) const;
  /// Throws DegenerateLine when the endpoints coincide.
  static LFLine through(const LFPoint& a, const LFPoint& b);
  static LFLine through(Orientation o, const LFPoint& a, const LFPoint& b);
};

/// 2D line a*x + b*y + c = 0 with a^2 + b^2 = 1.
struct Line2D {
  double a = 0, b = 0, c = 0;
  double distance(double x, double y) const { return a * x + b * y + c; }
};

/// The line in the micro-lens image centered at `sub_center`, in pixel
/// offsets from that center. Each endpoint is mapped to the offset s at which
/// the sub-image records it (sub_center = x + lambda * s, homogeneously
/// (sub_center - x, lambda)); the line is their cross product. With
/// d = x1 - x0 in the center view, distance() is positive for pixels that
/// see the side of n = (-d_y, d_x).
/// Throws DegenerateLine when both mapped endpoints coincide or lie at
/// infinity (e.g. both disparities zero).
Line2D slice_line(const LFLine& line, const PixelPoint& sub_center);

/// The line in the sub-aperture image at pixel offset `offset` (raw-pixel
/// coordinates): through x_k + lambda_k * offset for both endpoints.
Line2D slice_line_sub_aperture(const LFLine& line, const PixelPoint& offset);

/// Disc window of one micro-lens image: integer pixels within `radius` of the
/// (possibly fractional) center.
struct SubImageWindow {
  PixelPoint center;
  std::vector<Eigen::Vector2i> pixels;
};

SubImageWindow make_window(const SubImage& sub);

/// Zero-mean template over a window, empty when the line crosses no window
/// pixel (the template is then constant).
struct Template2D {
  SubImageWindow window;
  std::vector<double> values;
  bool empty = true;
};

/// Cross-section of the edge in a template. LinearRamp is a 1 px linear
/// ramp in the signed distance; PixelArea is the exact fraction of each unit
/// pixel on the positive side, which equals the ramp for axis-aligned edges
/// and widens to sqrt(2) px at 45 degrees.
enum class TemplateProfile { LinearRamp, PixelArea };

/// Signed step across the line, +polarity on the positive side, masked to
/// the disc and mean-subtracted.
Template2D make_template(const Line2D& line_offsets, const SubImage& sub, int polarity,
                         TemplateProfile shape = TemplateProfile::PixelArea);

struct Template4D {
  std::vector<Template2D> items;
};

/// Zero-normalized cross-correlation of one template against the raw pixels
/// under it; 0 for empty templates and flat windows.
double template_ncc(const Template2D& t, const RawImage& raw);

/// Sum of template_ncc over all items.
double total_ncc(const Template4D& t, const RawImage& raw);

struct DetectorOptions {
  double radius = -1;                ///< sub-image radius; < 0 selects the grid default
  double strip_half_width = 1.5;     ///< lens pitches from the center-view segment
  TemplateProfile profile = TemplateProfile::PixelArea;
  double min_window_contrast = 0.15;  ///< drop windows with std below this share of the strip's peak
  double endpoint_margin_scale = 1.0;  ///< see segment_strip
  double lambda_min = -1.2, lambda_max = 1.2, lambda_step = 0.05;
  double step_px = 0.5, step_lambda = 0.05, contraction = 0.5;
  double tol_px = 1e-3, tol_lambda = 1e-4;
  int max_iterations = 200;         ///< per pattern-search run
  int restarts = 3;                  ///< extra runs from the best point while they improve
  double residual_threshold = 0.05;  ///< smallest singular value, normalized system
  double min_mean_ncc = 0.5;         ///< per-term mean score a segment needs
  int min_terms = 4;                 ///< non-empty templates a segment needs
  SaddleOptions saddle;
  int threads = 1;
};

/// Lenses whose disc lies inside the sensor and whose center is within the
/// strip around the center-view segment p1-p2, trimmed near both ends by
/// endpoint_margin_scale * radius * max(1, |lambda_hint|) + 1 px.
std::vector<LensIndex> segment_strip(const MicroLensGrid& grid, int width, int height,
                                     const PixelPoint& p1, const PixelPoint& p2,
                                     const DetectorOptions& opt, double lambda_hint = 0.0);

/// Template set of an LF-line over a strip. Lines that degenerate in a
/// sub-image give an empty item there.
Template4D build_template(const LFLine& line, const std::vector<LensIndex>& strip,
                          const RawImage& raw, const MicroLensGrid& grid, double radius,
                          int polarity, TemplateProfile shape = TemplateProfile::PixelArea);

struct LineInit {
  LFLine line;
  double score = 0;
  std::vector<double> sweep;  ///< score per lambda sample
  bool boundary_warning = false;  ///< best lambda at the sweep boundary or no signal
};

/// Endpoints from the coarse corners, one shared lambda picked by a sweep.
LineInit initial_lf_line(const RawImage& raw, const MicroLensGrid& grid,
                         const PixelPoint& p1, const PixelPoint& p2, int polarity,
                         const DetectorOptions& opt = {});

struct RefineResult {
  LFLine line;
  double initial_score = 0;
  double score = 0;
  std::vector<double> trace;  ///< accepted score per iteration, starts with the initial one
  int iterations = 0;
  bool improved = false;
  int terms = 0;  ///< non-empty templates at the optimum
};

/// Pattern search on the four free parameters maximizing total_ncc.
RefineResult refine_lf_line(const LFLine& init, const RawImage& raw, const MicroLensGrid& grid,
                            int polarity, const DetectorOptions& opt = {});

struct Intersection {
  LFPoint point;
  double residual = 0;
};

/// Intersection of two LF-lines through the plane pencils of each line.
/// Throws PointAtInfinity or InconsistentLines (rank deficiency or residual
/// above `residual_threshold`).
/// Disparity is weighted as `lambda_scale` pixels per unit when normalizing
/// the system.
Intersection intersect_lf_lines(const LFLine& v, const LFLine& h,
                                double residual_threshold = 1e-2, double lambda_scale = 5.0);

struct DetectedCorner {
  int i = 0, j = 0;
  LFPoint point;
  double residual = 0;
  double score = 0;  ///< mean per-term NCC of the segments used
  bool valid = false;
};

struct SegmentResult {
  int i0 = 0, j0 = 0, i1 = 0, j1 = 0;  ///< board indices of the endpoints
  RefineResult refine;
  LineInit init;
  int polarity = 1;
  bool ok = false;
};

struct DetectedBoard {
  int rows = 0, cols = 0;
  std::vector<DetectedCorner> corners;  ///< row-major
  std::vector<SegmentResult> segments;

  const DetectedCorner& at(int i, int j) const { return corners[i * cols + j]; }
  int valid_count() const;
};

/// End-to-end detection: coarse corners on the lens-mean view, board
/// topology, per-segment LF-lines, intersections. Throws DetectionFailure
/// when the board cannot be ordered.
DetectedBoard detect_board(const RawImage& raw, const MicroLensGrid& grid,
                           const CheckerboardSpec& spec, const DetectorOptions& opt = {});

}  // namespace lfcal
