#include "hmrk/camera.hpp"

#include "hmrk/error.hpp"
#include "hmrk/rotation.hpp"

namespace hmrk {

using ad::Var;

CameraParams camera_of(const ThetaVector& theta) {
  return {theta.scale(), theta.global_rot(), theta.translation()};
}

Matrix2X project(const Matrix3X& points, const CameraParams& cam) {
  const Eigen::Matrix3d r = rodrigues(cam.global_rot);
  Matrix2X out(2, points.cols());
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    out.col(i) = cam.scale * (r * points.col(i)).head<2>() + cam.translation;
  }
  return out;
}

Projection compose_projection(const ThetaVector& theta, const BodyTemplate& body) {
  const PosedBody posed = pose_body(body, theta.shape(), theta.pose(), rodrigues(theta.global_rot()));
  Projection out;
  out.mesh = posed.mesh;
  out.keypoints3d = posed.keypoints;
  out.keypoints2d.resize(2, posed.keypoints.cols());
  for (Eigen::Index i = 0; i < posed.keypoints.cols(); ++i) {
    out.keypoints2d.col(i) = theta.scale() * posed.keypoints.col(i).head<2>() + theta.translation();
  }
  return out;
}

ThetaParts split_theta(Var theta) {
  if (theta.shape().size() != 2 || theta.dim(1) != kThetaDim) {
    fail(ErrorKind::kShapeMismatch, "theta must be [B, 85], got " + ad::shape_str(theta.shape()));
  }
  return {ad::slice(theta, 1, ThetaVector::kPoseOffset, kPoseDim),
          ad::slice(theta, 1, ThetaVector::kShapeOffset, kNumShape),
          ad::slice(theta, 1, ThetaVector::kRotOffset, 3),
          ad::slice(theta, 1, ThetaVector::kTransOffset, 2),
          ad::slice(theta, 1, ThetaVector::kScaleOffset, 1)};
}

namespace {

Var weak_perspective(Var camera_points, Var scale, Var translation) {
  const std::size_t b = camera_points.dim(0);
  const Var xy = ad::slice(camera_points, 2, 0, 2);
  return ad::reshape(scale, {b, 1, 1}) * xy + ad::reshape(translation, {b, 1, 2});
}

}  // namespace

Var project_graph(Var points, Var scale, Var global_rot, Var translation) {
  const Var r = batch_rodrigues(global_rot);
  return weak_perspective(ad::matmul(points, ad::transpose(r)), scale, translation);
}

ComposeOutputs compose_projection_graph(const BodyGraphConstants& c, Var theta) {
  const ThetaParts parts = split_theta(theta);
  const BodyGraphOutputs body = body_graph(c, parts.pose, parts.shape, parts.global_rot);
  return {body.vertices, body.keypoints, weak_perspective(body.keypoints, parts.scale, parts.translation)};
}

}  // namespace hmrk
