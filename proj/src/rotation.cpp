#include "hmrk/rotation.hpp"

#include <Eigen/Geometry>

#include "hmrk/graph.hpp"

namespace hmrk {

Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d k;
  k << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return k;
}

Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis_angle) {
  const double s = axis_angle.squaredNorm();
  const Eigen::Matrix3d k = skew(axis_angle);
  Eigen::Matrix3d k2;
  // Same summation order as the batched graph matmul.
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) k2(i, j) = k(i, 0) * k(0, j) + k(i, 1) * k(1, j) + k(i, 2) * k(2, j);
  return Eigen::Matrix3d::Identity() + ad::rodrigues_a_value(s) * k + ad::rodrigues_b_value(s) * k2;
}

Eigen::Vector3d axis_angle_from_matrix(const Eigen::Matrix3d& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  return aa.angle() * aa.axis();
}

}  // namespace hmrk
