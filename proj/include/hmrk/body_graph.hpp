#pragma once

#include <optional>
#include <vector>

#include "hmrk/body_model.hpp"
#include "hmrk/graph.hpp"

namespace hmrk {

// Template arrays in the layout the batched graph body model consumes,
// restricted to a subset of vertices.
struct BodyGraphConstants {
  std::vector<int> vertices;               // template vertex ids kept, ascending
  ad::Tensor vertex_template;              // [Ns * 3]
  ad::Tensor vertex_dirs;                  // [10, Ns * 3]
  std::optional<ad::Tensor> pose_dirs;     // [9K, Ns * 3]
  ad::Tensor joint_template;               // [(K+1) * 3]
  ad::Tensor joint_dirs;                   // [10, (K+1) * 3]
  ad::Tensor skin_weights;                 // [Ns, K+1]
  ad::Tensor keypoint_regressor;           // [P, Ns]
  std::vector<int> parents;
  std::vector<int> order;                  // parents before children
};

// With full_mesh = false only the vertices the keypoints read are kept, which
// is all training needs.
BodyGraphConstants make_body_graph_constants(const BodyTemplate& body, bool full_mesh);

struct BodyGraphOutputs {
  ad::Var vertices;   // [B, Ns, 3]
  ad::Var joints;     // [B, K+1, 3]
  ad::Var keypoints;  // [B, P, 3]
};

// M(theta, beta) and X(theta, beta) for a batch: pose [B, 69], shape [B, 10],
// global_rot [B, 3] axis-angle.
BodyGraphOutputs body_graph(const BodyGraphConstants& c, ad::Var pose, ad::Var shape, ad::Var global_rot);

// [M, 3] axis-angle -> [M, 3, 3] rotation matrices.
ad::Var batch_rodrigues(ad::Var axis_angle);

}  // namespace hmrk
