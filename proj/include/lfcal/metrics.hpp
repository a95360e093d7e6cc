#pragma once

// Evaluation metrics on the calibration target: point-to-ray and
// point-to-point reprojection errors (mm) from the center view, and the
// relative depth error from disparity.

#include <string>
#include <vector>

#include "lfcal/board.hpp"
#include "lfcal/calibrate.hpp"
#include "lfcal/core_model.hpp"
#include "lfcal/corner_detect.hpp"
#include "lfcal/distortion.hpp"

namespace lfcal {

/// Camera-frame direction of the ray through an observed (distorted)
/// center-view pixel, with unit Z component.
Eigen::Vector3d back_project(const PixelPoint& pixel, const SarbIntrinsics& intr,
                             const DistortionCoeffs& dist);

/// Distance from the camera-frame corner to the back-projected ray.
double p2re(const LFPoint& detected, const SarbIntrinsics& intr, const DistortionCoeffs& dist,
            const Pose& pose, const Eigen::Vector2d& board_point);

/// Distance on the board plane between the corner and the ray's hit point.
/// Throws NoIntersection when the ray is parallel to the plane or meets it
/// behind the camera.
double p2pe(const LFPoint& detected, const SarbIntrinsics& intr, const DistortionCoeffs& dist,
            const Pose& pose, const Eigen::Vector2d& board_point);

/// |Z_in - Z_ex| / Z_ex with Z_in from the disparity law and Z_ex from the
/// pose. Throws PointAtInfinity when lambda + K1 = 0.
double rde(double lambda, const SarbIntrinsics& intr, const Pose& pose,
           const Eigen::Vector2d& board_point);

struct CornerMetrics {
  int image = 0;
  int i = 0, j = 0;
  double p2re = 0, p2pe = 0, rde = 0;
  double z_in = 0, z_ex = 0;
};

struct MetricSummary {
  int count = 0;
  double p2re_rms = 0, p2re_mean = 0;
  double p2pe_rms = 0, p2pe_mean = 0;
  double rde_rms = 0, rde_mean = 0;
};

struct EvaluationReport {
  std::vector<CornerMetrics> corners;
  std::vector<MetricSummary> per_image;
  MetricSummary overall;
  int skipped = 0;  ///< valid corners whose ray misses the board or whose depth is at infinity
};

MetricSummary summarize(const std::vector<CornerMetrics>& corners);

/// Metrics for every valid corner; boards[k] pairs with calib.poses[k].
EvaluationReport evaluate(const std::vector<DetectedBoard>& boards, const CheckerboardSpec& spec,
                          const CalibrationResult& calib);

}  // namespace lfcal
