#include "hmrk/body_model.hpp"

#include <cmath>
#include <queue>

#include "hmrk/container.hpp"
#include "hmrk/error.hpp"
#include "hmrk/rotation.hpp"

namespace hmrk {

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& what) {
  fail(ErrorKind::kInvalidModel, "model field '" + field + "': " + what);
}

Eigen::Vector3d pose_block(const PoseVector& theta, int joint) {
  return theta.segment<3>(3 * (joint - 1));
}

}  // namespace

void BodyTemplate::validate() const {
  const auto n = static_cast<Eigen::Index>(num_vertices());
  const auto nj = static_cast<Eigen::Index>(parents.size());
  if (n == 0) invalid("rest_vertices", "mesh has no vertices");
  if (!rest_vertices.allFinite()) invalid("rest_vertices", "non-finite coordinates");
  if (nj != static_cast<Eigen::Index>(kNumJoints)) {
    invalid("parents", "K = " + std::to_string(nj - 1) + " joints; the model requires K = 23");
  }
  if (shape_blendshapes.rows() != 3 * n || shape_blendshapes.cols() != static_cast<Eigen::Index>(kNumShape)) {
    invalid("shape_blendshapes", "expected 3N x 10, got " + std::to_string(shape_blendshapes.rows()) + " x " +
                                     std::to_string(shape_blendshapes.cols()));
  }
  if (!shape_blendshapes.allFinite()) invalid("shape_blendshapes", "non-finite values");
  if (joint_regressor.rows() != nj || joint_regressor.cols() != n) {
    invalid("joint_regressor", "expected (K+1) x N");
  }
  if (!joint_regressor.allFinite()) invalid("joint_regressor", "non-finite values");
  if (skin_weights.rows() != n || skin_weights.cols() != nj) invalid("skin_weights", "expected N x (K+1)");
  for (Eigen::Index v = 0; v < n; ++v) {
    if ((skin_weights.row(v).array() < 0.0).any() || !skin_weights.row(v).allFinite()) {
      invalid("skin_weights", "row " + std::to_string(v) + " has a negative or non-finite weight");
    }
    const double total = skin_weights.row(v).sum();
    if (std::fabs(total - 1.0) > 1e-9) {
      invalid("skin_weights", "row " + std::to_string(v) + " sums to " + std::to_string(total));
    }
  }
  for (Eigen::Index f = 0; f < faces.cols(); ++f) {
    for (int c = 0; c < 3; ++c) {
      if (faces(c, f) < 0 || faces(c, f) >= n) {
        invalid("faces", "face " + std::to_string(f) + " references vertex " + std::to_string(faces(c, f)));
      }
    }
  }
  if (parents[0] != -1) invalid("parents", "joint 0 must be the root (parent -1)");
  for (std::size_t j = 1; j < parents.size(); ++j) {
    if (parents[j] < 0 || parents[j] >= nj || parents[j] == static_cast<int>(j)) {
      invalid("parents", "joint " + std::to_string(j) + " has invalid parent " + std::to_string(parents[j]));
    }
  }
  if (kinematic_order().size() != parents.size()) invalid("parents", "kinematic tree contains a cycle");
  if (keypoints.empty()) invalid("keypoints", "no keypoints defined");
  for (const auto& kp : keypoints) {
    if (kp.kind == KeypointEntry::Kind::kVertex) {
      if (kp.vertex < 0 || kp.vertex >= n) {
        invalid("keypoints", "'" + kp.name + "' uses vertex " + std::to_string(kp.vertex) + " >= N");
      }
    } else {
      if (kp.weights.empty()) invalid("keypoints", "'" + kp.name + "' has an empty regression row");
      for (const auto& [v, w] : kp.weights) {
        if (v < 0 || v >= n || !std::isfinite(w)) invalid("keypoints", "'" + kp.name + "' has an invalid term");
      }
    }
  }
  if (pose_blendshapes) {
    if (pose_blendshapes->rows() != 3 * n || pose_blendshapes->cols() != 9 * (nj - 1)) {
      invalid("pose_blendshapes", "expected 3N x 9K");
    }
    if (!pose_blendshapes->allFinite()) invalid("pose_blendshapes", "non-finite values");
  }
}

std::vector<int> BodyTemplate::kinematic_order() const {
  std::vector<std::vector<int>> children(parents.size());
  int root = -1;
  for (std::size_t j = 0; j < parents.size(); ++j) {
    if (parents[j] < 0) {
      if (root >= 0) return {};
      root = static_cast<int>(j);
    } else if (static_cast<std::size_t>(parents[j]) < parents.size()) {
      children[static_cast<std::size_t>(parents[j])].push_back(static_cast<int>(j));
    }
  }
  std::vector<int> order;
  if (root < 0) return order;
  std::queue<int> q;
  q.push(root);
  while (!q.empty()) {
    const int j = q.front();
    q.pop();
    order.push_back(j);
    for (int c : children[static_cast<std::size_t>(j)]) q.push(c);
  }
  return order;
}

RowMatrix BodyTemplate::keypoint_matrix() const {
  RowMatrix m = RowMatrix::Zero(static_cast<Eigen::Index>(keypoints.size()), rest_vertices.cols());
  for (std::size_t p = 0; p < keypoints.size(); ++p) {
    const auto& kp = keypoints[p];
    const auto row = static_cast<Eigen::Index>(p);
    if (kp.kind == KeypointEntry::Kind::kVertex) {
      m(row, kp.vertex) = 1.0;
    } else {
      for (const auto& [v, w] : kp.weights) m(row, v) += w;
    }
  }
  return m;
}

Matrix3X shape_vertices(const BodyTemplate& body, const ShapeCoeffs& beta) {
  const Eigen::VectorXd offsets = body.shape_blendshapes * beta;
  Matrix3X out = body.rest_vertices;
  out += Eigen::Map<const Matrix3X>(offsets.data(), 3, body.rest_vertices.cols());
  return out;
}

Matrix3X regress_joints(const BodyTemplate& body, const Matrix3X& shaped_vertices) {
  return shaped_vertices * body.joint_regressor.transpose();
}

TransformList forward_kinematics(const Matrix3X& rest_joints, const PoseVector& theta,
                                 const Eigen::Matrix3d& global_rot, const std::vector<int>& parents) {
  TransformList world(parents.size(), Eigen::Matrix4d::Identity());
  std::vector<char> done(parents.size(), 0);
  // Repeated passes handle parent arrays that are not topologically sorted.
  std::size_t remaining = parents.size();
  while (remaining > 0) {
    std::size_t progressed = 0;
    for (std::size_t j = 0; j < parents.size(); ++j) {
      if (done[j]) continue;
      const int p = parents[j];
      Eigen::Matrix4d& g = world[j];
      if (p < 0) {
        g.topLeftCorner<3, 3>() = global_rot;
        g.topRightCorner<3, 1>() = global_rot * rest_joints.col(static_cast<Eigen::Index>(j));
      } else {
        if (!done[static_cast<std::size_t>(p)]) continue;
        Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
        local.topLeftCorner<3, 3>() = rodrigues(pose_block(theta, static_cast<int>(j)));
        local.topRightCorner<3, 1>() = rest_joints.col(static_cast<Eigen::Index>(j)) - rest_joints.col(p);
        g = world[static_cast<std::size_t>(p)] * local;
      }
      done[j] = 1;
      ++progressed;
      --remaining;
    }
    if (progressed == 0) fail(ErrorKind::kInvalidModel, "model field 'parents': kinematic tree contains a cycle");
  }
  return world;
}

TransformList skinning_transforms(const TransformList& world, const Matrix3X& rest_joints) {
  TransformList out(world.size());
  for (std::size_t j = 0; j < world.size(); ++j) {
    out[j] = world[j];
    out[j].topRightCorner<3, 1>() -= world[j].topLeftCorner<3, 3>() * rest_joints.col(static_cast<Eigen::Index>(j));
  }
  return out;
}

Matrix3X linear_blend_skinning(const Matrix3X& shaped_vertices, const TransformList& skinning,
                               const RowMatrix& skin_weights) {
  Matrix3X out(3, shaped_vertices.cols());
  for (Eigen::Index v = 0; v < shaped_vertices.cols(); ++v) {
    Eigen::Matrix<double, 3, 4> blended = Eigen::Matrix<double, 3, 4>::Zero();
    for (std::size_t j = 0; j < skinning.size(); ++j) {
      const double w = skin_weights(v, static_cast<Eigen::Index>(j));
      if (w != 0.0) blended += w * skinning[j].topRows<3>();
    }
    out.col(v) = blended.leftCols<3>() * shaped_vertices.col(v) + blended.col(3);
  }
  return out;
}

Matrix3X regress_keypoints(const Matrix3X& mesh, const std::vector<KeypointEntry>& spec) {
  Matrix3X out = Matrix3X::Zero(3, static_cast<Eigen::Index>(spec.size()));
  for (std::size_t p = 0; p < spec.size(); ++p) {
    const auto& kp = spec[p];
    const auto col = static_cast<Eigen::Index>(p);
    if (kp.kind == KeypointEntry::Kind::kVertex) {
      out.col(col) = mesh.col(kp.vertex);
    } else {
      for (const auto& [v, w] : kp.weights) out.col(col) += w * mesh.col(v);
    }
  }
  return out;
}

PosedBody pose_body(const BodyTemplate& body, const ShapeCoeffs& beta, const PoseVector& theta,
                    const Eigen::Matrix3d& global_rot) {
  Matrix3X shaped = shape_vertices(body, beta);
  const Matrix3X rest_joints = regress_joints(body, shaped);
  PosedBody out;
  out.world = forward_kinematics(rest_joints, theta, global_rot, body.parents);
  if (body.pose_blendshapes) {
    Eigen::VectorXd feature(9 * (body.num_joints() - 1));
    for (std::size_t j = 1; j < body.num_joints(); ++j) {
      const Eigen::Matrix3d r = rodrigues(pose_block(theta, static_cast<int>(j))) - Eigen::Matrix3d::Identity();
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) feature[static_cast<Eigen::Index>(9 * (j - 1) + 3 * a + b)] = r(a, b);
    }
    const Eigen::VectorXd offsets = *body.pose_blendshapes * feature;
    shaped += Eigen::Map<const Matrix3X>(offsets.data(), 3, shaped.cols());
  }
  out.mesh = linear_blend_skinning(shaped, skinning_transforms(out.world, rest_joints), body.skin_weights);
  out.joints.resize(3, static_cast<Eigen::Index>(body.num_joints()));
  for (std::size_t j = 0; j < body.num_joints(); ++j) {
    out.joints.col(static_cast<Eigen::Index>(j)) = out.world[j].topRightCorner<3, 1>();
  }
  out.keypoints = regress_keypoints(out.mesh, body.keypoints);
  return out;
}

int joint_part(int joint) {
  switch (joint) {
    case 12:
    case 15:
      return kHead;
    case 16:
    case 18:
    case 20:
    case 22:
      return kLeftArm;
    case 17:
    case 19:
    case 21:
    case 23:
      return kRightArm;
    case 1:
    case 4:
    case 7:
    case 10:
      return kLeftLeg;
    case 2:
    case 5:
    case 8:
    case 11:
      return kRightLeg;
    default:
      return kTorso;  // 0, 3, 6, 9, 13, 14
  }
}

std::vector<int> vertex_part_labels(const BodyTemplate& body) {
  std::vector<int> labels(body.num_vertices());
  for (Eigen::Index v = 0; v < body.skin_weights.rows(); ++v) {
    Eigen::Index best = 0;
    body.skin_weights.row(v).maxCoeff(&best);
    labels[static_cast<std::size_t>(v)] = joint_part(static_cast<int>(best));
  }
  return labels;
}

// --- file format ------------------------------------------------------------

namespace {

std::vector<double> row_major(const RowMatrix& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

RowMatrix read_matrix(const Container& c, const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  const auto& shape = c.shape(name);
  if (shape.size() != 2 || static_cast<Eigen::Index>(shape[0]) != rows || static_cast<Eigen::Index>(shape[1]) != cols) {
    invalid(name, "array shape " + ad::shape_str(shape) + " does not match the manifest sizes");
  }
  const auto& data = c.f64(name);
  return Eigen::Map<const RowMatrix>(data.data(), rows, cols);
}

std::vector<double> read_vector(const Container& c, const std::string& name, Eigen::Index n) {
  const auto& shape = c.shape(name);
  if (shape.size() != 1 || static_cast<Eigen::Index>(shape[0]) != n) {
    invalid(name, "array shape " + ad::shape_str(shape) + " does not match the manifest sizes");
  }
  return c.f64(name);
}

int as_index(double v, const std::string& field) {
  if (v != std::floor(v) || std::fabs(v) > 1e9) invalid(field, "non-integer index value");
  return static_cast<int>(v);
}

}  // namespace

void save_model(const std::filesystem::path& path, const BodyTemplate& body) {
  body.validate();
  const std::size_t n = body.num_vertices(), nj = body.num_joints(), p = body.num_keypoints();
  Container c("body_model", kModelFileVersion);
  nlohmann::json names = nlohmann::json::array();
  for (const auto& kp : body.keypoints) names.push_back(kp.name);
  c.meta() = {{"version", kModelFileVersion},
              {"N", n},
              {"K", nj - 1},
              {"B", kNumShape},
              {"P", p},
              {"dtype", "f64"},
              {"keypoint_names", names},
              {"has_pose_blendshapes", body.pose_blendshapes.has_value()}};
  std::vector<double> verts(3 * n);
  for (std::size_t v = 0; v < n; ++v)
    for (int k = 0; k < 3; ++k) verts[3 * v + static_cast<std::size_t>(k)] = body.rest_vertices(k, static_cast<Eigen::Index>(v));
  c.put_f64("rest_vertices", {n, 3}, std::move(verts));
  const auto nf = static_cast<std::size_t>(body.faces.cols());
  std::vector<double> faces(3 * nf);
  for (std::size_t f = 0; f < nf; ++f)
    for (int k = 0; k < 3; ++k) faces[3 * f + static_cast<std::size_t>(k)] = body.faces(k, static_cast<Eigen::Index>(f));
  c.put_f64("faces", {nf, 3}, std::move(faces));
  c.put_f64("shape_blendshapes", {3 * n, kNumShape}, row_major(body.shape_blendshapes));
  c.put_f64("joint_regressor", {nj, n}, row_major(body.joint_regressor));
  c.put_f64("parents", {nj}, std::vector<double>(body.parents.begin(), body.parents.end()));
  c.put_f64("skin_weights", {n, nj}, row_major(body.skin_weights));
  RowMatrix kreg = RowMatrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n));
  std::vector<double> kvert(p, -1.0);
  for (std::size_t i = 0; i < p; ++i) {
    const auto& kp = body.keypoints[i];
    if (kp.kind == KeypointEntry::Kind::kVertex) {
      kvert[i] = kp.vertex;
    } else {
      for (const auto& [v, w] : kp.weights) kreg(static_cast<Eigen::Index>(i), v) += w;
    }
  }
  c.put_f64("keypoint_regressor", {p, n}, row_major(kreg));
  c.put_f64("keypoint_vertex", {p}, std::move(kvert));
  if (body.pose_blendshapes) {
    c.put_f64("pose_blendshapes", {3 * n, 9 * (nj - 1)}, row_major(*body.pose_blendshapes));
  }
  c.save(path);
}

BodyTemplate load_model(const std::filesystem::path& path) {
  const Container c = Container::load(path, "body_model", kModelFileVersion);
  BodyTemplate body;
  const auto& meta = c.meta();
  Eigen::Index n = 0, nj = 0, p = 0;
  try {
    if (meta.at("version").get<int>() != kModelFileVersion) {
      fail(ErrorKind::kVersion, "model version " + meta.at("version").dump() + " is not supported");
    }
    if (meta.at("dtype").get<std::string>() != "f64") invalid("dtype", "only f64 arrays are supported");
    n = meta.at("N").get<Eigen::Index>();
    nj = meta.at("K").get<Eigen::Index>() + 1;
    p = meta.at("P").get<Eigen::Index>();
    if (meta.at("B").get<std::size_t>() != kNumShape) invalid("B", "the model requires B = 10 shape coefficients");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCorrupt, "model manifest is missing a field (" + std::string(e.what()) + ")");
  }
  if (nj != static_cast<Eigen::Index>(kNumJoints)) {
    invalid("K", "K = " + std::to_string(nj - 1) + "; the model requires K = 23 joints");
  }
  const RowMatrix verts = read_matrix(c, "rest_vertices", n, 3);
  body.rest_vertices = verts.transpose();
  const auto nf = static_cast<Eigen::Index>(c.shape("faces").at(0));
  const RowMatrix faces = read_matrix(c, "faces", nf, 3);
  body.faces.resize(3, nf);
  for (Eigen::Index f = 0; f < nf; ++f)
    for (int k = 0; k < 3; ++k) body.faces(k, f) = as_index(faces(f, k), "faces");
  body.shape_blendshapes = read_matrix(c, "shape_blendshapes", 3 * n, static_cast<Eigen::Index>(kNumShape));
  body.joint_regressor = read_matrix(c, "joint_regressor", nj, n);
  for (double p : read_vector(c, "parents", nj)) body.parents.push_back(as_index(p, "parents"));
  body.skin_weights = read_matrix(c, "skin_weights", n, nj);
  const RowMatrix kreg = read_matrix(c, "keypoint_regressor", p, n);
  const std::vector<double> kvert = read_vector(c, "keypoint_vertex", p);
  const auto& names = meta.at("keypoint_names");
  for (Eigen::Index i = 0; i < p; ++i) {
    KeypointEntry kp;
    kp.name = i < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(i)].get<std::string>()
                                                          : "kp" + std::to_string(i);
    const int vid = as_index(kvert[static_cast<std::size_t>(i)], "keypoint_vertex");
    if (vid >= 0) {
      kp.kind = KeypointEntry::Kind::kVertex;
      kp.vertex = vid;
    } else {
      for (Eigen::Index v = 0; v < n; ++v) {
        if (kreg(i, v) != 0.0) kp.weights.emplace_back(static_cast<int>(v), kreg(i, v));
      }
    }
    body.keypoints.push_back(std::move(kp));
  }
  if (c.has("pose_blendshapes")) body.pose_blendshapes = read_matrix(c, "pose_blendshapes", 3 * n, 9 * (nj - 1));
  body.validate();
  return body;
}

}  // namespace hmrk
