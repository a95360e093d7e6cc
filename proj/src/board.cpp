#include "lfcal/board.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "lfcal/error.hpp"

namespace lfcal {

void CheckerboardSpec::validate() const {
  if (rows < 2 || cols < 2) {
    throw Error(ErrorCode::InvalidArgument, "checkerboard needs at least 2x2 inner corners");
  }
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
    throw Error(ErrorCode::InvalidArgument, "checkerboard cell size must be positive");
  }
}

double orthonormality_error(const Eigen::Matrix3d& R) {
  return (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
}

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& M) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  D(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * D * svd.matrixV().transpose();
}

Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& w) {
  const double angle = w.norm();
  if (angle < 1e-300) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

Eigen::Vector3d axis_angle_from_rotation(const Eigen::Matrix3d& R) {
  const Eigen::AngleAxisd aa(R);
  return aa.axis() * aa.angle();
}

ScenePoint corner_depth(const Pose& pose, const Eigen::Vector2d& board_point) {
  const ScenePoint P = pose.R.col(0) * board_point.x() + pose.R.col(1) * board_point.y() + pose.T;
  if (!(P.z() > 0.0)) {
    throw Error(ErrorCode::BehindCamera, "board point lies behind the camera");
  }
  return P;
}

}  // namespace lfcal
