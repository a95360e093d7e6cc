#include "lfcal/metrics.hpp"

#include <cmath>

#include <Eigen/Geometry>

#include "lfcal/error.hpp"

namespace lfcal {

Eigen::Vector3d back_project(const PixelPoint& pixel, const SarbIntrinsics& intr,
                             const DistortionCoeffs& dist) {
  const Eigen::Vector2d n = remove_distortion(normalize(pixel, intr), dist);
  return {n.x(), n.y(), 1.0};
}

double p2re(const LFPoint& detected, const SarbIntrinsics& intr, const DistortionCoeffs& dist,
            const Pose& pose, const Eigen::Vector2d& board_point) {
  const Eigen::Vector3d d = back_project({detected.x_c_sub, detected.y_c_sub}, intr, dist);
  const Eigen::Vector3d P = pose.R * Eigen::Vector3d(board_point.x(), board_point.y(), 0.0) + pose.T;
  return P.cross(d).norm() / d.norm();
}

double p2pe(const LFPoint& detected, const SarbIntrinsics& intr, const DistortionCoeffs& dist,
            const Pose& pose, const Eigen::Vector2d& board_point) {
  const Eigen::Vector3d d = back_project({detected.x_c_sub, detected.y_c_sub}, intr, dist);
  const Eigen::Vector3d n = pose.R.col(2);
  const double denom = n.dot(d);
  if (std::abs(denom) < 1e-12 * d.norm()) {
    throw Error(ErrorCode::NoIntersection, "ray is parallel to the board plane");
  }
  const double t = n.dot(pose.T) / denom;
  if (t <= 0) {
    throw Error(ErrorCode::NoIntersection, "ray meets the board plane behind the camera");
  }
  const Eigen::Vector3d P = pose.R * Eigen::Vector3d(board_point.x(), board_point.y(), 0.0) + pose.T;
  return (t * d - P).norm();
}

double rde(double lambda, const SarbIntrinsics& intr, const Pose& pose,
           const Eigen::Vector2d& board_point) {
  const double z_ex = corner_depth(pose, board_point).z();
  const double z_in = depth_from_disparity(lambda, intr);
  return std::abs((z_in - z_ex) / z_ex);
}

MetricSummary summarize(const std::vector<CornerMetrics>& corners) {
  MetricSummary s;
  s.count = static_cast<int>(corners.size());
  if (corners.empty()) return s;
  for (const auto& c : corners) {
    s.p2re_mean += c.p2re;
    s.p2re_rms += c.p2re * c.p2re;
    s.p2pe_mean += c.p2pe;
    s.p2pe_rms += c.p2pe * c.p2pe;
    s.rde_mean += c.rde;
    s.rde_rms += c.rde * c.rde;
  }
  const double n = s.count;
  s.p2re_mean /= n;
  s.p2pe_mean /= n;
  s.rde_mean /= n;
  s.p2re_rms = std::sqrt(s.p2re_rms / n);
  s.p2pe_rms = std::sqrt(s.p2pe_rms / n);
  s.rde_rms = std::sqrt(s.rde_rms / n);
  return s;
}

EvaluationReport evaluate(const std::vector<DetectedBoard>& boards, const CheckerboardSpec& spec,
                          const CalibrationResult& calib) {
  if (boards.size() != calib.poses.size()) {
    throw Error(ErrorCode::InvalidArgument, "evaluation: board and pose counts differ");
  }
  EvaluationReport rep;
  for (size_t k = 0; k < boards.size(); ++k) {
    std::vector<CornerMetrics> image;
    const Pose& pose = calib.poses[k];
    for (const auto& c : boards[k].corners) {
      if (!c.valid) continue;
      const Eigen::Vector2d b = spec.corner(c.i, c.j);
      CornerMetrics m;
      m.image = static_cast<int>(k);
      m.i = c.i;
      m.j = c.j;
      try {
        m.p2re = p2re(c.point, calib.intrinsics, calib.distortion, pose, b);
        m.p2pe = p2pe(c.point, calib.intrinsics, calib.distortion, pose, b);
        m.z_ex = corner_depth(pose, b).z();
        m.z_in = depth_from_disparity(c.point.lambda, calib.intrinsics);
        m.rde = std::abs((m.z_in - m.z_ex) / m.z_ex);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoIntersection && e.code() != ErrorCode::PointAtInfinity) throw;
        ++rep.skipped;
        continue;
      }
      image.push_back(m);
    }
    rep.per_image.push_back(summarize(image));
    rep.corners.insert(rep.corners.end(), image.begin(), image.end());
  }
  rep.overall = summarize(rep.corners);
  return rep;
}

}  // namespace lfcal
