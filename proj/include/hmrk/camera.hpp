#pragma once

#include "hmrk/body_graph.hpp"
#include "hmrk/body_model.hpp"
#include "hmrk/theta.hpp"

namespace hmrk {

// Weak-perspective camera. Image frame: origin at the crop centre, x right,
// y down, the longer crop side spanning [-1, 1].
struct CameraParams {
  double scale = 1.0;
  Eigen::Vector3d global_rot = Eigen::Vector3d::Zero();  // axis-angle
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();
};

CameraParams camera_of(const ThetaVector& theta);

// x = s * (R X)_xy + t for each column.
Matrix2X project(const Matrix3X& points, const CameraParams& cam);

struct Projection {
  Matrix3X mesh;         // camera frame, 3 x N
  Matrix3X keypoints3d;  // camera frame, 3 x P
  Matrix2X keypoints2d;
};

// Runs the body model with the root rotated by R, then projects.
Projection compose_projection(const ThetaVector& theta, const BodyTemplate& body);

// --- graph versions ---------------------------------------------------------

struct ThetaParts {
  ad::Var pose;         // [B, 69]
  ad::Var shape;        // [B, 10]
  ad::Var global_rot;   // [B, 3]
  ad::Var translation;  // [B, 2]
  ad::Var scale;        // [B, 1]
};
ThetaParts split_theta(ad::Var theta);

// points [B, P, 3] -> [B, P, 2].
ad::Var project_graph(ad::Var points, ad::Var scale, ad::Var global_rot, ad::Var translation);

struct ComposeOutputs {
  ad::Var vertices;     // [B, Ns, 3], camera frame
  ad::Var keypoints3d;  // [B, P, 3], camera frame
  ad::Var keypoints2d;  // [B, P, 2]
};
ComposeOutputs compose_projection_graph(const BodyGraphConstants& c, ad::Var theta);

}  // namespace hmrk
