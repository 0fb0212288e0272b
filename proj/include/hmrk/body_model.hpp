#pragma once

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hmrk/theta.hpp"

namespace hmrk {

using Matrix3X = Eigen::Matrix3Xd;
using Matrix2X = Eigen::Matrix2Xd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One output keypoint: either a linear regression over mesh vertices, or a
// copy of a single vertex.
struct KeypointEntry {
  enum class Kind { kRegression, kVertex };

  std::string name;
  Kind kind = Kind::kRegression;
  std::vector<std::pair<int, double>> weights;  // regression rows only
  int vertex = -1;                              // vertex rows only
};

// Default keypoint layout: 14 regressed joints followed by 5 face vertices.
inline constexpr std::size_t kNumKeypoints = 19;
inline constexpr std::size_t kNumRegressedKeypoints = 14;
inline constexpr std::array<const char*, kNumKeypoints> kKeypointNames = {
    "r_ankle", "r_knee", "r_hip",   "l_hip", "l_knee", "l_ankle", "r_wrist", "r_elbow", "r_shoulder", "l_shoulder",
    "l_elbow", "l_wrist", "neck", "head_top", "nose",  "l_eye",  "r_eye",   "l_ear",   "r_ear"};
// Keypoints averaged to form the skeleton root for root-relative comparisons.
inline constexpr std::array<int, 2> kRootKeypoints = {2, 3};

// Rest mesh, blendshapes, kinematic tree, skinning weights and regressors.
// Immutable once validated.
struct BodyTemplate {
  Matrix3X rest_vertices;                       // 3 x N
  Eigen::Matrix<int, 3, Eigen::Dynamic> faces;  // 3 x F, vertex indices
  RowMatrix shape_blendshapes;                  // 3N x B, row 3v+c
  RowMatrix joint_regressor;                    // (K+1) x N
  std::vector<int> parents;                     // K+1, parents[0] == -1
  RowMatrix skin_weights;                       // N x (K+1)
  std::vector<KeypointEntry> keypoints;         // P entries
  std::optional<RowMatrix> pose_blendshapes;    // 3N x 9K, applied to (R_j - I)

  std::size_t num_vertices() const { return static_cast<std::size_t>(rest_vertices.cols()); }
  std::size_t num_joints() const { return parents.size(); }
  std::size_t num_keypoints() const { return keypoints.size(); }

  // Throws Error(kInvalidModel) naming the offending field.
  void validate() const;
  // Joints ordered so that every parent precedes its children.
  std::vector<int> kinematic_order() const;
  // Dense P x N matrix equivalent of the keypoint entries.
  RowMatrix keypoint_matrix() const;
};

// Rigid 4x4 transforms, one per joint.
using TransformList = std::vector<Eigen::Matrix4d>;

Matrix3X shape_vertices(const BodyTemplate& body, const ShapeCoeffs& beta);
// 3 x (K+1) rest joint locations regressed from shaped vertices.
Matrix3X regress_joints(const BodyTemplate& body, const Matrix3X& shaped_vertices);

// World transform of each joint. The root rotates about the model origin, so
// at zero pose joint j lands at global_rot * rest_joints[j].
TransformList forward_kinematics(const Matrix3X& rest_joints, const PoseVector& theta,
                                 const Eigen::Matrix3d& global_rot, const std::vector<int>& parents);
// G_j * [I, -J_j]: the transforms linear blend skinning applies to rest vertices.
TransformList skinning_transforms(const TransformList& world, const Matrix3X& rest_joints);
// v' = sum_j w_vj A_j [v; 1].
Matrix3X linear_blend_skinning(const Matrix3X& shaped_vertices, const TransformList& skinning,
                               const RowMatrix& skin_weights);
// 3 x P keypoints from a posed mesh.
Matrix3X regress_keypoints(const Matrix3X& mesh, const std::vector<KeypointEntry>& spec);

struct PosedBody {
  Matrix3X mesh;       // 3 x N
  Matrix3X joints;     // 3 x (K+1), posed joint centres
  Matrix3X keypoints;  // 3 x P
  TransformList world;
};

// M(theta, beta) and X(theta, beta), with the root additionally rotated by
// global_rot.
PosedBody pose_body(const BodyTemplate& body, const ShapeCoeffs& beta, const PoseVector& theta,
                    const Eigen::Matrix3d& global_rot = Eigen::Matrix3d::Identity());

// Model file: container of kind "body_model" holding float64 arrays
// rest_vertices [N,3], faces [F,3], shape_blendshapes [3N,B],
// joint_regressor [K+1,N], parents [K+1], skin_weights [N,K+1],
// keypoint_regressor [P,N], keypoint_vertex [P] (-1 for regression rows) and
// optionally pose_blendshapes [3N,9K]; the manifest meta carries N, K, B,
// dtype and keypoint names.
inline constexpr int kModelFileVersion = 1;
void save_model(const std::filesystem::path& path, const BodyTemplate& body);
BodyTemplate load_model(const std::filesystem::path& path);

// Six body parts plus background.
inline constexpr int kNumPartLabels = 7;
enum PartLabel : int { kBackground = 0, kHead = 1, kTorso = 2, kLeftArm = 3, kRightArm = 4, kLeftLeg = 5, kRightLeg = 6 };
// Fixed joint -> part table.
int joint_part(int joint);
// Part of each vertex's dominant skinning joint (lowest joint index on ties).
std::vector<int> vertex_part_labels(const BodyTemplate& body);

}  // namespace hmrk
