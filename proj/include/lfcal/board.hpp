#pragma once

#include <Eigen/Core>

#include "lfcal/core_model.hpp"

namespace lfcal {

/// Rigid board-to-camera transform: X_cam = R * X_board + T.
struct Pose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d T = Eigen::Vector3d::Zero();
};

/// Inner-corner layout of a checkerboard. Corner (i, j) sits at board
/// coordinates (j * cell_size, i * cell_size, 0).
struct CheckerboardSpec {
  int rows = 6;   ///< inner corners along board Y
  int cols = 8;   ///< inner corners along board X
  double cell_size = 30.0;  ///< mm

  int corner_count() const { return rows * cols; }
  Eigen::Vector2d corner(int i, int j) const { return {j * cell_size, i * cell_size}; }
  void validate() const;
};

/// Largest deviation of R from orthonormality, max |R^T R - I|.
double orthonormality_error(const Eigen::Matrix3d& R);

/// Nearest rotation in the Frobenius sense (det fixed to +1).
Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& M);

/// Rodrigues map and its inverse.
Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& w);
Eigen::Vector3d axis_angle_from_rotation(const Eigen::Matrix3d& R);

/// Camera-frame position of a board point. Throws BehindCamera if Z <= 0.
ScenePoint corner_depth(const Pose& pose, const Eigen::Vector2d& board_point);

}  // namespace lfcal
