#pragma once

// Two-step calibration. Step 1 fits the center-view pinhole, distortion and
// board poses from planar homographies plus damped least squares; Step 2
// solves the disparity law for K1, K2 with one SVD. Step 2 never touches
// the Step 1 outputs.

#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lfcal/board.hpp"
#include "lfcal/core_model.hpp"
#include "lfcal/corner_detect.hpp"
#include "lfcal/distortion.hpp"

namespace lfcal {

/// Corners of one image: board-plane coordinates (mm), center-view pixels and
/// detected disparities (may be empty when Step 2 is not needed).
struct ViewCorners {
  std::vector<Eigen::Vector2d> board;
  std::vector<PixelPoint> pixels;
  std::vector<double> lambdas;
};

/// Valid corners of a detected board.
ViewCorners view_from_detection(const DetectedBoard& det, const CheckerboardSpec& spec);

/// Board-to-image homography by the normalized DLT. Needs at least 4 points
/// that are not all collinear (DegenerateSolution otherwise).
Eigen::Matrix3d estimate_homography(const std::vector<Eigen::Vector2d>& board,
                                    const std::vector<PixelPoint>& pixels);

struct ClosedFormResult {
  SarbIntrinsics intrinsics;  ///< K1, K2 left at zero
  std::vector<Pose> poses;
  double condition = 0;       ///< second smallest over largest singular value of the conic system
  bool ill_conditioned = false;
};

/// Zero-skew intrinsics from the image of the absolute conic, then one pose
/// per view. The returned focal lengths are negative (the center view is
/// inverted, see sarb_from_physical). Throws UnderConstrained for fewer than
/// 3 views with 4+ corners and DegenerateSolution when the conic is not
/// positive definite.
ClosedFormResult step1_closed_form(const std::vector<ViewCorners>& views,
                                   double warn_condition = 1e-6);

struct RefineOptions {
  int max_iterations = 100;
  double relative_tolerance = 1e-12;
  double initial_damping = 1e-3;
  double max_damping = 1e12;
  bool estimate_distortion = true;
};

struct Step1Refined {
  SarbIntrinsics intrinsics;
  DistortionCoeffs distortion;
  std::vector<Pose> poses;
  double initial_rms = 0;  ///< px, closed form
  double final_rms = 0;    ///< px
  int iterations = 0;
  bool converged = false;
  bool diverged = false;   ///< no damping gave a decrease before convergence; best iterate returned
};

/// Levenberg-Marquardt over f_x, f_y, c_x, c_y, k1, k2, p1, p2 and all
/// poses; rotations are updated through an axis-angle increment.
Step1Refined step1_refine(const ClosedFormResult& init, const std::vector<ViewCorners>& views,
                           const RefineOptions& opt = {});

/// Center-view RMS reprojection error (px) of a model over all views.
double reprojection_rms(const SarbIntrinsics& intr, const DistortionCoeffs& dist,
                        const std::vector<Pose>& poses, const std::vector<ViewCorners>& views);

struct Step2Result {
  double K1 = 0, K2 = 0;
  double residual = 0;        ///< least singular value of the normalized system
  double rms_law = 0;         ///< RMS of K2/Z + K1 + lambda over the samples
  double law_bound = 0;       ///< upper bound on rms_law implied by residual
  double ls_K1 = 0, ls_K2 = 0;  ///< diagnostic least-squares line fit
  int samples = 0;
};

/// Solves K2/Z + K1 + lambda = 0 over (Z, lambda) samples. Rows are scaled
/// to unit norm after an equilibrating column scaling. Throws
/// UnderConstrained below 2 samples, RankDeficient when all Z are equal and
/// DegenerateSolution when the null vector has no lambda component.
Step2Result step2_solve(const std::vector<std::pair<double, double>>& samples);

struct ViewResidual {
  int corners = 0;
  double rms = 0;  ///< px
  double max = 0;  ///< px
};

struct CalibrationResult {
  SarbIntrinsics intrinsics;
  DistortionCoeffs distortion;
  std::vector<Pose> poses;
  std::vector<ViewResidual> residuals;
  double rms_reprojection = 0;  ///< px, all views
  double closed_form_rms = 0;
  double k1k2_residual = 0;
  Step2Result step2;
  bool ill_conditioned = false;
  bool refine_diverged = false;
  int refine_iterations = 0;
};

/// Step 1 on the valid center-view corners, depths from the Step 1 poses,
/// Step 2 on every valid (Z, lambda) pair.
CalibrationResult calibrate_full(const std::vector<DetectedBoard>& boards,
                                 const CheckerboardSpec& spec, const RefineOptions& opt = {});

/// Same, from prepared corner sets (lambdas required).
CalibrationResult calibrate_views(const std::vector<ViewCorners>& views,
                                  const RefineOptions& opt = {});

}  // namespace lfcal
