#pragma once

#include <Eigen/Core>
#include <cstddef>

namespace hmrk {

inline constexpr std::size_t kNumJoints = 24;      // K + 1, root included
inline constexpr std::size_t kNumPoseJoints = 23;  // K
inline constexpr std::size_t kNumShape = 10;       // B
inline constexpr std::size_t kPoseDim = 3 * kNumPoseJoints;
inline constexpr std::size_t kThetaDim = 85;

using ShapeCoeffs = Eigen::Matrix<double, kNumShape, 1>;
using PoseVector = Eigen::Matrix<double, kPoseDim, 1>;

// Packed regression target, in this fixed order:
//   [0, 69)   pose: axis-angle of joints 1..23, three values per joint
//   [69, 79)  shape coefficients
//   [79, 82)  global rotation, axis-angle
//   [82, 84)  2D translation
//   [84]      scale
struct ThetaVector {
  static constexpr std::size_t kPoseOffset = 0;
  static constexpr std::size_t kShapeOffset = 69;
  static constexpr std::size_t kRotOffset = 79;
  static constexpr std::size_t kTransOffset = 82;
  static constexpr std::size_t kScaleOffset = 84;

  Eigen::Matrix<double, kThetaDim, 1> values = Eigen::Matrix<double, kThetaDim, 1>::Zero();

  auto pose() { return values.segment<kPoseDim>(kPoseOffset); }
  auto pose() const { return values.segment<kPoseDim>(kPoseOffset); }
  auto shape() { return values.segment<kNumShape>(kShapeOffset); }
  auto shape() const { return values.segment<kNumShape>(kShapeOffset); }
  auto global_rot() { return values.segment<3>(kRotOffset); }
  auto global_rot() const { return values.segment<3>(kRotOffset); }
  auto translation() { return values.segment<2>(kTransOffset); }
  auto translation() const { return values.segment<2>(kTransOffset); }
  double& scale() { return values[kScaleOffset]; }
  double scale() const { return values[kScaleOffset]; }
};

}  // namespace hmrk
