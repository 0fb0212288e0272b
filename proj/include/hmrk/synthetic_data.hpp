#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"

#include "hmrk/body_model.hpp"
#include "hmrk/camera.hpp"
#include "hmrk/model.hpp"
#include "hmrk/random.hpp"
#include "hmrk/theta.hpp"

namespace hmrk {

// Per-joint box on the axis-angle components.
struct AngleBox {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();
};
using JointLimits = std::array<AngleBox, kNumPoseJoints>;  // joints 1..23

// Loose anatomical ranges for the y-up, +z-facing template.
JointLimits default_joint_limits();

struct PoolConfig {
  JointLimits limits = default_joint_limits();
  std::array<double, kNumShape> beta_sigma = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  double beta_truncation = 3.0;  // in units of sigma
  // Poses cluster around `modes` prototype poses drawn uniformly inside the
  // boxes; each component gets Gaussian spread of mode_spread * box width,
  // redrawn until inside its box. modes = 0 draws uniformly in the boxes.
  std::size_t modes = 16;
  double mode_spread = 0.15;
};

struct MocapPool {
  std::vector<ShapeCoeffs> shapes;
  std::vector<PoseVector> poses;

  std::size_t size() const { return poses.size(); }
  bool empty() const { return poses.empty(); }
};

// Draws n (beta, theta) pairs; sample i depends only on (seed, i).
MocapPool sample_pool(const PoolConfig& config, std::size_t n, std::uint64_t seed);
std::vector<double> pool_mean_pose(const MocapPool& pool);
// Rotation angle |theta_j| of each of the 23 joints.
std::array<double, kNumPoseJoints> joint_angles(const PoseVector& pose);
// Per-joint q-quantile of the pool's rotation angles.
std::array<double, kNumPoseJoints> pool_angle_quantile(const MocapPool& pool, double q);
// Implausible poses: every axis-angle component uniform in [-pi, pi], beta
// uniform in [-3, 3].
MocapPool random_monsters(std::size_t n, std::uint64_t seed);

inline constexpr int kPoolFileVersion = 1;
void save_pool(const std::filesystem::path& path, const MocapPool& pool);
MocapPool load_pool(const std::filesystem::path& path);

// Camera sampling ranges. The global rotation is a half turn about x (y-up
// body to y-down image) after yaw about the body's vertical axis and small
// pitch and roll.
struct CameraRanges {
  double scale_min = 0.6;
  double scale_max = 1.2;
  double translation = 0.3;  // t uniform in [-v, v]^2
  double yaw = 1.5707963267948966;  // uniform in [-v, v]
  double pitch = 0.2;
  double roll = 0.2;
};

CameraParams sample_camera(const CameraRanges& ranges, Rng& rng);

struct DataConfig {
  PoolConfig pool;
  CameraRanges camera;
  double noise_sigma = 0.005;  // Gaussian 2D noise in crop units
  double p_occ = 0.05;         // extra random invisibility
  double paired_fraction = 0.5;  // share of samples carrying 3D labels
  ObservationMode observation = ObservationMode::kPartImage;
  int image_size = 64;
  std::size_t num_train = 5000;
  std::size_t num_val = 500;
  std::size_t pool_size = 10000;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const DataConfig& c);
DataConfig data_config_from_json(const nlohmann::json& j);

struct SampleRecord {
  std::uint32_t id = 0;
  ThetaVector theta;                   // ground truth, for evaluation only
  Matrix2X keypoints2d;                // 2 x P after noise
  std::vector<std::uint8_t> visible;   // P
  bool has_3d = false;
  Matrix3X joints3d;                   // 3 x P, camera frame
  std::vector<std::uint8_t> labels;    // size x size part image, empty in keypoint mode
};

struct Dataset {
  ObservationMode observation = ObservationMode::kKeypoints;
  int image_size = 64;
  std::vector<SampleRecord> samples;

  std::size_t size() const { return samples.size(); }
};

// Samples first_id .. first_id + n - 1; sample i depends only on (seed, i).
Dataset generate_paired(const BodyTemplate& body, const DataConfig& config, const MocapPool& pool, std::size_t n,
                        std::uint64_t seed, std::uint32_t first_id = 0);

// Encoder input for one sample. Keypoints: (x'*v, y'*v, v) per keypoint with
// x', y' centred on the visible mean and divided by their RMS spread, then
// the centre and spread. Part images: the share of each 4x4 block covered by
// each of the six parts.
std::vector<double> observation_features(const SampleRecord& sample, ObservationMode mode, int image_size);
// [rows.size(), D] batch of observation features.
ad::Tensor observation_batch(const Dataset& data, std::span<const std::size_t> rows);

inline constexpr int kDatasetFileVersion = 1;
void save_dataset(const std::filesystem::path& path, const Dataset& data, const nlohmann::json& config = {});
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace hmrk
