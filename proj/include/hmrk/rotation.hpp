#pragma once

#include <Eigen/Core>

namespace hmrk {

// Axis-angle to rotation matrix, R = I + a(s) K + b(s) K^2 with K = [w]x and
// s = |w|^2. The coefficient functions switch to their Taylor series for small
// angles and are shared with the graph primitives.
Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis_angle);

// Inverse of rodrigues with angle in [0, pi].
Eigen::Vector3d axis_angle_from_matrix(const Eigen::Matrix3d& rotation);

Eigen::Matrix3d skew(const Eigen::Vector3d& w);

}  // namespace hmrk
