#include "hmrk/body_graph.hpp"

#include <set>

#include "hmrk/error.hpp"

namespace hmrk {

using ad::Graph;
using ad::Shape;
using ad::Tensor;
using ad::Var;

BodyGraphConstants make_body_graph_constants(const BodyTemplate& body, bool full_mesh) {
  body.validate();
  BodyGraphConstants c;
  const std::size_t nj = body.num_joints();
  const std::size_t p = body.num_keypoints();
  const RowMatrix kp = body.keypoint_matrix();
  if (full_mesh) {
    for (std::size_t v = 0; v < body.num_vertices(); ++v) c.vertices.push_back(static_cast<int>(v));
  } else {
    std::set<int> used;
    for (Eigen::Index r = 0; r < kp.rows(); ++r)
      for (Eigen::Index v = 0; v < kp.cols(); ++v)
        if (kp(r, v) != 0.0) used.insert(static_cast<int>(v));
    c.vertices.assign(used.begin(), used.end());
  }
  const std::size_t ns = c.vertices.size();

  c.vertex_template = Tensor({ns * 3});
  c.vertex_dirs = Tensor({kNumShape, ns * 3});
  c.skin_weights = Tensor({ns, nj});
  c.keypoint_regressor = Tensor({p, ns});
  for (std::size_t i = 0; i < ns; ++i) {
    const int v = c.vertices[i];
    for (int k = 0; k < 3; ++k) {
      c.vertex_template[3 * i + static_cast<std::size_t>(k)] = body.rest_vertices(k, v);
      for (std::size_t b = 0; b < kNumShape; ++b) {
        c.vertex_dirs[b * ns * 3 + 3 * i + static_cast<std::size_t>(k)] =
            body.shape_blendshapes(3 * v + k, static_cast<Eigen::Index>(b));
      }
    }
    for (std::size_t j = 0; j < nj; ++j) c.skin_weights[i * nj + j] = body.skin_weights(v, static_cast<Eigen::Index>(j));
    for (std::size_t r = 0; r < p; ++r) c.keypoint_regressor[r * ns + i] = kp(static_cast<Eigen::Index>(r), v);
  }
  if (body.pose_blendshapes) {
    const RowMatrix& pd = *body.pose_blendshapes;
    c.pose_dirs = Tensor({static_cast<std::size_t>(pd.cols()), ns * 3});
    for (Eigen::Index f = 0; f < pd.cols(); ++f)
      for (std::size_t i = 0; i < ns; ++i)
        for (int k = 0; k < 3; ++k)
          (*c.pose_dirs)[static_cast<std::size_t>(f) * ns * 3 + 3 * i + static_cast<std::size_t>(k)] =
              pd(3 * c.vertices[i] + k, f);
  }

  // Joints are linear in beta: J(beta) = J0 + sum_b beta_b * (Jreg * S_b).
  const Matrix3X j0 = regress_joints(body, body.rest_vertices);
  c.joint_template = Tensor({nj * 3});
  c.joint_dirs = Tensor({kNumShape, nj * 3});
  for (std::size_t j = 0; j < nj; ++j)
    for (int k = 0; k < 3; ++k) c.joint_template[3 * j + static_cast<std::size_t>(k)] = j0(k, static_cast<Eigen::Index>(j));
  for (std::size_t b = 0; b < kNumShape; ++b) {
    const Eigen::VectorXd col = body.shape_blendshapes.col(static_cast<Eigen::Index>(b));
    const Matrix3X dir = Eigen::Map<const Matrix3X>(col.data(), 3, body.rest_vertices.cols());
    const Matrix3X jd = regress_joints(body, dir);
    for (std::size_t j = 0; j < nj; ++j)
      for (int k = 0; k < 3; ++k)
        c.joint_dirs[b * nj * 3 + 3 * j + static_cast<std::size_t>(k)] = jd(k, static_cast<Eigen::Index>(j));
  }
  c.parents = body.parents;
  c.order = body.kinematic_order();
  return c;
}

Var batch_rodrigues(Var w) {
  if (w.shape().size() != 2 || w.dim(1) != 3) {
    fail(ErrorKind::kShapeMismatch, "batch_rodrigues expects [M, 3], got " + ad::shape_str(w.shape()));
  }
  Graph& g = *w.graph;
  const std::size_t m = w.dim(0);
  const Var s = ad::sum_axis(ad::square(w), 1);  // [M, 1]
  const Var a = ad::reshape(ad::rodrigues_a(s), {m, 1, 1});
  const Var b = ad::reshape(ad::rodrigues_b(s), {m, 1, 1});
  const Var x = ad::slice(w, 1, 0, 1), y = ad::slice(w, 1, 1, 1), z = ad::slice(w, 1, 2, 1);
  const Var zero = g.constant(Tensor({m, 1}));
  const Var k = ad::reshape(ad::concat({zero, -z, y, z, zero, -x, -y, x, zero}, 1), {m, 3, 3});
  Tensor eye({3, 3});
  eye[0] = eye[4] = eye[8] = 1.0;
  return g.constant(eye) + a * k + b * ad::matmul(k, k);
}

BodyGraphOutputs body_graph(const BodyGraphConstants& c, Var pose, Var shape, Var global_rot) {
  Graph& g = *pose.graph;
  const std::size_t bsz = pose.dim(0);
  const std::size_t nj = c.parents.size();
  const std::size_t ns = c.vertices.size();
  if (pose.shape() != Shape{bsz, kPoseDim} || shape.shape() != Shape{bsz, kNumShape} ||
      global_rot.shape() != Shape{bsz, 3}) {
    fail(ErrorKind::kShapeMismatch, "body_graph expects pose [B,69], shape [B,10], global_rot [B,3]; got " +
                                        ad::shape_str(pose.shape()) + ", " + ad::shape_str(shape.shape()) + ", " +
                                        ad::shape_str(global_rot.shape()));
  }

  const Var joints_rest =
      ad::reshape(ad::matmul(shape, g.constant(c.joint_dirs)) + g.constant(c.joint_template), {bsz, nj, 3});
  const Var local = ad::reshape(batch_rodrigues(ad::reshape(pose, {bsz * (nj - 1), 3})), {bsz, nj - 1, 9});
  const Var root = batch_rodrigues(global_rot);

  auto joint_col = [&](std::size_t j) { return ad::reshape(ad::slice(joints_rest, 1, j, 1), {bsz, 3, 1}); };
  auto local_rot = [&](std::size_t j) { return ad::reshape(ad::slice(local, 1, j - 1, 1), {bsz, 3, 3}); };

  std::vector<Var> rot(nj), pos(nj), rest(nj);
  std::vector<Var> skin(nj);
  for (int jj : c.order) {
    const auto j = static_cast<std::size_t>(jj);
    rest[j] = joint_col(j);
    const int p = c.parents[j];
    if (p < 0) {
      rot[j] = root;
      pos[j] = ad::matmul(root, rest[j]);
    } else {
      const auto pj = static_cast<std::size_t>(p);
      rot[j] = ad::matmul(rot[pj], local_rot(j));
      pos[j] = ad::matmul(rot[pj], rest[j] - rest[pj]) + pos[pj];
    }
    skin[j] = ad::reshape(ad::concat({rot[j], pos[j] - ad::matmul(rot[j], rest[j])}, 2), {bsz, 1, 12});
  }
  std::vector<Var> pos_rows(nj);
  for (std::size_t j = 0; j < nj; ++j) pos_rows[j] = ad::reshape(pos[j], {bsz, 1, 3});

  Var shaped = ad::matmul(shape, g.constant(c.vertex_dirs)) + g.constant(c.vertex_template);  // [B, Ns*3]
  if (c.pose_dirs) {
    Tensor eye({9});
    eye[0] = eye[4] = eye[8] = 1.0;
    const Var feature = ad::reshape(local - g.constant(eye), {bsz, 9 * (nj - 1)});
    shaped = shaped + ad::matmul(feature, g.constant(*c.pose_dirs));
  }
  const Var ones = g.constant(Tensor({bsz, ns, 1}, 1.0));
  const Var homo = ad::reshape(ad::concat({ad::reshape(shaped, {bsz, ns, 3}), ones}, 2), {bsz, ns, 1, 4});
  const Var blended = ad::reshape(ad::matmul(g.constant(c.skin_weights), ad::concat(skin, 1)), {bsz, ns, 3, 4});
  const Var posed = ad::reshape(ad::sum_axis(blended * homo, 3, false), {bsz, ns, 3});

  BodyGraphOutputs out;
  out.vertices = posed;
  out.joints = ad::concat(pos_rows, 1);
  out.keypoints = ad::matmul(g.constant(c.keypoint_regressor), posed);
  return out;
}

}  // namespace hmrk
