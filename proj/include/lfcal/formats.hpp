#pragma once

// On-disk artifacts: JSON sidecars, corner files, calibration results and
// metrics reports, plus atomic writes and the config hash they embed.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfcal/board.hpp"
#include "lfcal/calibrate.hpp"
#include "lfcal/core_model.hpp"
#include "lfcal/corner_detect.hpp"
#include "lfcal/metrics.hpp"
#include "lfcal/raw_image.hpp"
#include "lfcal/synthetic_renderer.hpp"

namespace lfcal {

using Json = nlohmann::json;

/// 64-bit FNV-1a, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& data);

/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

Json pose_to_json(const Pose& p);
/// Accepts {"R": 9 values row-major, "T": 3} or {"rvec": axis-angle, "T": 3}.
Pose pose_from_json(const Json& j);

Json grid_to_json(const MicroLensGrid& g);
MicroLensGrid grid_from_json(const Json& j);

Json physical_to_json(const PhysicalCameraParams& c);
PhysicalCameraParams physical_from_json(const Json& j);

Json distortion_to_json(const DistortionCoeffs& d);
DistortionCoeffs distortion_from_json(const Json& j);

CheckerboardSpec board_from_json(const Json& j);
Json board_to_json(const CheckerboardSpec& s);

struct GroundTruth {
  std::string image;
  Pose pose;
  PhysicalCameraParams camera;
  DistortionCoeffs distortion;
  CheckerboardSpec board;
  std::vector<LFPoint> corners;  ///< row-major, analytic
};

Json ground_truth_to_json(const GroundTruth& gt);
GroundTruth ground_truth_from_json(const Json& j);

/// Corner file: one entry per board corner with validity, residual and score.
Json detection_to_json(const DetectedBoard& det);
DetectedBoard detection_from_json(const Json& j);

/// Keys fx, fy, cx, cy, k1, k2_dist, p1, p2, K1, K2, per-image R (row-major)
/// and T, plus residual summaries.
Json calibration_to_json(const CalibrationResult& res, const std::vector<std::string>& images);
CalibrationResult calibration_from_json(const Json& j, std::vector<std::string>* images = nullptr);

Json metrics_to_json(const EvaluationReport& rep);
/// One row per corner.
std::string metrics_to_csv(const EvaluationReport& rep, const std::vector<std::string>& images);

}  // namespace lfcal
