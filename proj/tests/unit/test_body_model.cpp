#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "hmrk/body_graph.hpp"
#include "hmrk/body_model.hpp"
#include "hmrk/camera.hpp"
#include "hmrk/container.hpp"
#include "hmrk/error.hpp"
#include "hmrk/grad_check.hpp"
#include "hmrk/random.hpp"
#include "hmrk/rotation.hpp"
#include "hmrk/synth_template.hpp"

namespace hmrk {
namespace {

using std::numbers::pi;

const BodyTemplate& body() {
  static const BodyTemplate b = synth_template();
  return b;
}

PoseVector random_pose(Rng& rng, double range = 1.0) {
  PoseVector p;
  for (auto& v : p) v = rng.uniform(-range, range);
  return p;
}

ShapeCoeffs random_shape(Rng& rng) {
  ShapeCoeffs s;
  for (auto& v : s) v = rng.uniform(-2.0, 2.0);
  return s;
}

Eigen::Vector3d random_axis_angle(Rng& rng) {
  return Eigen::Vector3d(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("hmrk_test_" + name);
}

TEST(Rodrigues, ZeroIsIdentity) {
  EXPECT_EQ(rodrigues(Eigen::Vector3d::Zero()), Eigen::Matrix3d::Identity());
}

TEST(Rodrigues, HalfTurnAboutX) {
  const Eigen::Matrix3d r = rodrigues(Eigen::Vector3d(pi, 0, 0));
  EXPECT_LT((r - Eigen::Vector3d(1, -1, -1).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Rodrigues, QuarterTurnAboutZ) {
  Eigen::Matrix3d expect;
  expect << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  EXPECT_LT((rodrigues(Eigen::Vector3d(0, 0, pi / 2)) - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Rodrigues, ProperRotationAcrossScales) {
  Rng rng(3);
  for (double mag : {1e-12, 1e-7, 1e-3, 0.05, 0.099, 0.1, 0.11, 1.0, 3.0}) {
    Eigen::Vector3d w(rng.normal(), rng.normal(), rng.normal());
    w *= mag / w.norm();
    const Eigen::Matrix3d r = rodrigues(w);
    EXPECT_LT((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-14) << mag;
    EXPECT_NEAR(r.determinant(), 1.0, 1e-14);
    const Eigen::Matrix3d ref = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
    EXPECT_LT((r - ref).cwiseAbs().maxCoeff(), 1e-14) << mag;
  }
}

TEST(ShapeVertices, ZeroBetaIsTemplate) {
  EXPECT_EQ(shape_vertices(body(), ShapeCoeffs::Zero()), body().rest_vertices);
}

TEST(ShapeVertices, UnitBetaAddsFirstColumn) {
  ShapeCoeffs e1 = ShapeCoeffs::Zero();
  e1[0] = 1.0;
  const Matrix3X got = shape_vertices(body(), e1);
  const Eigen::VectorXd col = body().shape_blendshapes.col(0);
  const Matrix3X expect = body().rest_vertices + Eigen::Map<const Matrix3X>(col.data(), 3, got.cols());
  EXPECT_EQ(got, expect);
}

TEST(ShapeVertices, Superposition) {
  Rng rng(4);
  const ShapeCoeffs a = random_shape(rng), b = random_shape(rng);
  const Matrix3X& t = body().rest_vertices;
  const Matrix3X lhs = (shape_vertices(body(), a) - t) + (shape_vertices(body(), b) - t);
  const Matrix3X rhs = shape_vertices(body(), a + b) - t;
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ForwardKinematics, IdentityPoseKeepsRestJoints) {
  const Matrix3X j = regress_joints(body(), body().rest_vertices);
  const auto world = forward_kinematics(j, PoseVector::Zero(), Eigen::Matrix3d::Identity(), body().parents);
  for (std::size_t k = 0; k < world.size(); ++k) {
    EXPECT_LT((world[k].topRightCorner<3, 1>() - j.col(static_cast<Eigen::Index>(k))).norm(), 1e-15);
  }
}

TEST(ForwardKinematics, GlobalRotationRotatesEveryJoint) {
  Rng rng(5);
  const Eigen::Matrix3d r = rodrigues(random_axis_angle(rng));
  const Matrix3X j = regress_joints(body(), body().rest_vertices);
  const auto world = forward_kinematics(j, PoseVector::Zero(), r, body().parents);
  for (std::size_t k = 0; k < world.size(); ++k) {
    EXPECT_LT((world[k].topRightCorner<3, 1>() - r * j.col(static_cast<Eigen::Index>(k))).norm(), 1e-14);
  }
}

TEST(ForwardKinematics, ThreeJointChainMatchesHandComposition) {
  Matrix3X rest(3, 3);
  rest << 0.0, 1.0, 1.5, 0.0, 0.2, 0.9, 0.0, -0.1, 0.3;
  const std::vector<int> parents = {-1, 0, 1};
  PoseVector theta = PoseVector::Zero();
  const Eigen::Vector3d w1(0.3, -0.7, 0.2), w2(-0.4, 0.1, 0.9);
  theta.segment<3>(0) = w1;
  theta.segment<3>(3) = w2;
  const Eigen::Matrix3d g = rodrigues(Eigen::Vector3d(0.1, 0.2, -0.3));
  const auto world = forward_kinematics(rest, theta, g, parents);

  auto rigid = [](const Eigen::Matrix3d& r, const Eigen::Vector3d& t) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = r;
    m.topRightCorner<3, 1>() = t;
    return m;
  };
  const Eigen::Matrix4d g0 = rigid(g, g * rest.col(0));
  const Eigen::Matrix4d g1 = g0 * rigid(rodrigues(w1), rest.col(1) - rest.col(0));
  const Eigen::Matrix4d g2 = g1 * rigid(rodrigues(w2), rest.col(2) - rest.col(1));
  EXPECT_LT((world[0] - g0).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((world[1] - g1).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((world[2] - g2).cwiseAbs().maxCoeff(), 1e-15);

  // Rotating joint 1 moves joint 2 rigidly about joint 1's position.
  theta.segment<3>(3).setZero();
  const auto moved = forward_kinematics(rest, theta, Eigen::Matrix3d::Identity(), parents);
  const Eigen::Vector3d expect = rest.col(1) + rodrigues(w1) * (rest.col(2) - rest.col(1));
  EXPECT_LT((moved[2].topRightCorner<3, 1>() - expect).norm(), 1e-15);
  EXPECT_LT((moved[1].topRightCorner<3, 1>() - rest.col(1)).norm(), 1e-15);
}

TEST(Skinning, ZeroPoseGivesShapedMesh) {
  Rng rng(6);
  const Matrix3X shaped = shape_vertices(body(), random_shape(rng));
  const Matrix3X j = regress_joints(body(), shaped);
  const auto world = forward_kinematics(j, PoseVector::Zero(), Eigen::Matrix3d::Identity(), body().parents);
  const Matrix3X posed = linear_blend_skinning(shaped, skinning_transforms(world, j), body().skin_weights);
  EXPECT_LT((posed - shaped).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Skinning, OneHotWeightsAreRigid) {
  Rng rng(7);
  const Matrix3X shaped = shape_vertices(body(), random_shape(rng));
  const Matrix3X j = regress_joints(body(), shaped);
  const auto world = forward_kinematics(j, random_pose(rng), rodrigues(random_axis_angle(rng)), body().parents);
  const auto skin = skinning_transforms(world, j);
  RowMatrix onehot = RowMatrix::Zero(shaped.cols(), 24);
  for (Eigen::Index v = 0; v < shaped.cols(); ++v) onehot(v, v % 24) = 1.0;
  const Matrix3X posed = linear_blend_skinning(shaped, skin, onehot);
  for (Eigen::Index v = 0; v < shaped.cols(); ++v) {
    const Eigen::Matrix4d& a = skin[static_cast<std::size_t>(v % 24)];
    const Eigen::Vector3d expect = a.topLeftCorner<3, 3>() * shaped.col(v) + a.topRightCorner<3, 1>();
    EXPECT_LT((posed.col(v) - expect).norm(), 1e-14);
  }
}

TEST(Skinning, TwoJointBlendLandsAtMidpoint) {
  Matrix3X rest(3, 2);
  rest << 0.0, 1.0, 0.0, 0.0, 0.0, 0.0;
  PoseVector theta = PoseVector::Zero();
  theta[2] = pi;  // joint 1 half-turn about z through (1,0,0)
  const auto world = forward_kinematics(rest, theta, Eigen::Matrix3d::Identity(), {-1, 0});
  Matrix3X v(3, 1);
  v << 2.0, 0.5, 0.0;
  RowMatrix w(1, 2);
  w << 0.5, 0.5;
  const Matrix3X posed = linear_blend_skinning(v, skinning_transforms(world, rest), w);
  // Images: (2, 0.5, 0) under joint 0 and (0, -0.5, 0) under joint 1.
  EXPECT_LT((posed.col(0) - Eigen::Vector3d(1.0, 0.0, 0.0)).norm(), 1e-15);
}

TEST(Keypoints, VertexEntryCopiesColumn) {
  const Matrix3X& mesh = body().rest_vertices;
  const std::vector<KeypointEntry> spec = {{"k", KeypointEntry::Kind::kVertex, {}, 17}};
  EXPECT_EQ(regress_keypoints(mesh, spec).col(0), mesh.col(17));
}

TEST(Keypoints, UniformRegressionIsCentroid) {
  const Matrix3X& mesh = body().rest_vertices;
  KeypointEntry kp{"c", KeypointEntry::Kind::kRegression, {}, -1};
  for (Eigen::Index v = 0; v < mesh.cols(); ++v) kp.weights.emplace_back(static_cast<int>(v), 1.0 / mesh.cols());
  const Eigen::Vector3d got = regress_keypoints(mesh, {kp}).col(0);
  EXPECT_LT((got - mesh.rowwise().mean()).norm(), 1e-14);
}

TEST(Keypoints, DefaultSpecHasNineteenEntries) {
  EXPECT_EQ(body().num_keypoints(), 19u);
  std::size_t vertex_rows = 0;
  for (const auto& kp : body().keypoints) vertex_rows += kp.kind == KeypointEntry::Kind::kVertex;
  EXPECT_EQ(vertex_rows, 5u);
  for (std::size_t i = 0; i < 19; ++i) EXPECT_EQ(body().keypoints[i].name, kKeypointNames[i]);
}

TEST(ModelFile, RoundTripIsBitIdentical) {
  BodyTemplate b = body();
  Rng rng(8);
  b.pose_blendshapes = RowMatrix::Zero(3 * b.rest_vertices.cols(), 207);
  for (Eigen::Index i = 0; i < b.pose_blendshapes->size(); ++i) b.pose_blendshapes->data()[i] = 1e-3 * rng.normal();
  const auto path = temp_path("model_roundtrip.bin");
  save_model(path, b);
  const BodyTemplate r = load_model(path);
  EXPECT_EQ(r.rest_vertices, b.rest_vertices);
  EXPECT_EQ(r.faces, b.faces);
  EXPECT_EQ(r.shape_blendshapes, b.shape_blendshapes);
  EXPECT_EQ(r.joint_regressor, b.joint_regressor);
  EXPECT_EQ(r.parents, b.parents);
  EXPECT_EQ(r.skin_weights, b.skin_weights);
  EXPECT_EQ(r.keypoint_matrix(), b.keypoint_matrix());
  ASSERT_TRUE(r.pose_blendshapes.has_value());
  EXPECT_EQ(*r.pose_blendshapes, *b.pose_blendshapes);
  for (std::size_t i = 0; i < b.keypoints.size(); ++i) {
    EXPECT_EQ(r.keypoints[i].name, b.keypoints[i].name);
    EXPECT_EQ(r.keypoints[i].kind, b.keypoints[i].kind);
  }
  std::filesystem::remove(path);
}

TEST(ModelFile, RejectsSkinRowSummingToPointNine) {
  BodyTemplate b = body();
  b.skin_weights.row(5) *= 0.9;
  try {
    b.validate();
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidModel);
    EXPECT_NE(std::string(e.what()).find("skin_weights"), std::string::npos);
  }
}

TEST(ModelFile, RejectsWrongJointCount) {
  BodyTemplate b = body();
  b.parents.push_back(23);
  b.joint_regressor.conservativeResize(25, Eigen::NoChange);
  b.joint_regressor.row(24).setZero();
  b.skin_weights.conservativeResize(Eigen::NoChange, 25);
  b.skin_weights.col(24).setZero();
  try {
    b.validate();
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidModel);
    EXPECT_NE(std::string(e.what()).find("K = 24"), std::string::npos);
  }
}

TEST(ModelFile, RejectsCycleAndBadFaceIndex) {
  BodyTemplate cyc = body();
  cyc.parents[3] = 6;
  EXPECT_THROW(cyc.validate(), Error);
  BodyTemplate bad = body();
  bad.faces(1, 4) = static_cast<int>(bad.num_vertices());
  EXPECT_THROW(bad.validate(), Error);
}

TEST(ModelFile, RejectsUnsupportedVersion) {
  const auto path = temp_path("model_version.bin");
  Container c("body_model", kModelFileVersion + 1);
  c.save(path);
  try {
    load_model(path);
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kVersion);
  }
  std::filesystem::remove(path);
}

TEST(SynthTemplate, SameSeedSameTemplate) {
  SynthTemplateConfig c;
  c.seed = 11;
  const BodyTemplate a = synth_template(c), b = synth_template(c);
  EXPECT_EQ(a.rest_vertices, b.rest_vertices);
  EXPECT_EQ(a.shape_blendshapes, b.shape_blendshapes);
  EXPECT_EQ(a.skin_weights, b.skin_weights);
  EXPECT_EQ(a.faces, b.faces);
  c.seed = 12;
  EXPECT_NE(synth_template(c).rest_vertices, a.rest_vertices);
}

TEST(SynthTemplate, PassesModelValidationAtAnySize) {
  for (std::size_t n : {kMinSynthVertices, std::size_t{241}, std::size_t{600}, std::size_t{1001}}) {
    SynthTemplateConfig c;
    c.num_vertices = n;
    const BodyTemplate b = synth_template(c);
    EXPECT_EQ(b.num_vertices(), n);
    EXPECT_NO_THROW(b.validate());
    const auto path = temp_path("synth.bin");
    save_model(path, b);
    EXPECT_NO_THROW(load_model(path));
    std::filesystem::remove(path);
  }
  SynthTemplateConfig small;
  small.num_vertices = kMinSynthVertices - 1;
  EXPECT_THROW(synth_template(small), Error);
}

TEST(SynthTemplate, FirstBlendshapeIsUniformScale) {
  const SynthTemplateConfig c;
  const double s0 = c.blendshape_magnitudes[0];
  EXPECT_EQ(s0, 0.1);
  for (double coeff : {-2.0, 0.5, 3.0}) {
    ShapeCoeffs beta = ShapeCoeffs::Zero();
    beta[0] = coeff;
    const Matrix3X got = shape_vertices(body(), beta);
    EXPECT_LT((got - (1.0 + coeff * s0) * body().rest_vertices).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(SynthTemplate, BodyIsUprightAndFacesForward) {
  const auto kp = regress_keypoints(body().rest_vertices, body().keypoints);
  EXPECT_GT(kp(1, 13), kp(1, 12));  // head top above neck
  EXPECT_GT(kp(1, 12), kp(1, 2));   // neck above hips
  EXPECT_GT(kp(0, 3), 0.0);         // left hip at +x
  EXPECT_GT(kp(2, 14), 0.05);       // nose in front
}

TEST(PartLabels, TableAndDominantJoint) {
  EXPECT_EQ(joint_part(15), kHead);
  EXPECT_EQ(joint_part(0), kTorso);
  EXPECT_EQ(joint_part(13), kTorso);
  EXPECT_EQ(joint_part(18), kLeftArm);
  EXPECT_EQ(joint_part(23), kRightArm);
  EXPECT_EQ(joint_part(10), kLeftLeg);
  EXPECT_EQ(joint_part(5), kRightLeg);
  const auto labels = vertex_part_labels(body());
  ASSERT_EQ(labels.size(), body().num_vertices());
  for (int l : labels) {
    EXPECT_GE(l, 1);
    EXPECT_LE(l, 6);
  }
  const auto& nose = body().keypoints[14];
  EXPECT_EQ(labels[static_cast<std::size_t>(nose.vertex)], kHead);
}

// --- properties --------------------------------------------------------------

TEST(BodyProperties, RestPoseIsTemplate) {
  const PosedBody p = pose_body(body(), ShapeCoeffs::Zero(), PoseVector::Zero());
  EXPECT_LT((p.mesh - body().rest_vertices).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(BodyProperties, JointTransformsAreRigid) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const PosedBody p =
        pose_body(body(), random_shape(rng), random_pose(rng, pi), rodrigues(random_axis_angle(rng)));
    for (const auto& m : p.world) {
      const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
      EXPECT_LT((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
    }
  }
}

TEST(BodyProperties, GlobalRotationEquivariance) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const ShapeCoeffs beta = random_shape(rng);
    const PoseVector theta = random_pose(rng);
    const Eigen::Matrix3d r = rodrigues(random_axis_angle(rng));
    const PosedBody a = pose_body(body(), beta, theta);
    const PosedBody b = pose_body(body(), beta, theta, r);
    EXPECT_LT((b.keypoints - r * a.keypoints).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((b.mesh - r * a.mesh).cwiseAbs().maxCoeff(), 1e-9);
  }
}

// Graph body model: full mesh, keypoints and joints equal the plain route.
TEST(BodyGraph, MatchesPlainEvaluation) {
  Rng rng(12);
  const std::size_t bsz = 3;
  const BodyGraphConstants c = make_body_graph_constants(body(), true);
  ad::Graph g;
  const auto out = body_graph(c, g.input("pose", {bsz, 69}), g.input("shape", {bsz, 10}), g.input("rot", {bsz, 3}));
  g.mark_output("v", out.vertices);
  g.mark_output("k", out.keypoints);
  g.mark_output("j", out.joints);
  ad::Tensor pose({bsz, 69}), shape({bsz, 10}), rot({bsz, 3});
  std::vector<PosedBody> expect;
  for (std::size_t b = 0; b < bsz; ++b) {
    const PoseVector th = random_pose(rng, 2.0);
    const ShapeCoeffs be = random_shape(rng);
    const Eigen::Vector3d w = random_axis_angle(rng);
    for (std::size_t i = 0; i < 69; ++i) pose[b * 69 + i] = th[static_cast<Eigen::Index>(i)];
    for (std::size_t i = 0; i < 10; ++i) shape[b * 10 + i] = be[static_cast<Eigen::Index>(i)];
    for (std::size_t i = 0; i < 3; ++i) rot[b * 3 + i] = w[static_cast<Eigen::Index>(i)];
    expect.push_back(pose_body(body(), be, th, rodrigues(w)));
  }
  const auto res = g.evaluate({{"pose", pose}, {"shape", shape}, {"rot", rot}}, {});
  double worst = 0.0;
  for (std::size_t b = 0; b < bsz; ++b) {
    const auto& e = expect[b];
    for (Eigen::Index v = 0; v < e.mesh.cols(); ++v)
      for (int k = 0; k < 3; ++k)
        worst = std::max(worst, std::fabs(res.at("v")[(b * e.mesh.cols() + v) * 3 + k] - e.mesh(k, v)));
    for (Eigen::Index p = 0; p < 19; ++p)
      for (int k = 0; k < 3; ++k)
        worst = std::max(worst, std::fabs(res.at("k")[(b * 19 + p) * 3 + k] - e.keypoints(k, p)));
    for (Eigen::Index j = 0; j < 24; ++j)
      for (int k = 0; k < 3; ++k)
        worst = std::max(worst, std::fabs(res.at("j")[(b * 24 + j) * 3 + k] - e.joints(k, j)));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(BodyGraph, KeypointSubsetMatchesFullMesh) {
  const BodyGraphConstants full = make_body_graph_constants(body(), true);
  const BodyGraphConstants sub = make_body_graph_constants(body(), false);
  EXPECT_LT(sub.vertices.size(), full.vertices.size());
  Rng rng(13);
  ad::Tensor pose({2, 69}), shape({2, 10}), rot({2, 3});
  for (double& v : pose.data()) v = rng.uniform(-1, 1);
  for (double& v : shape.data()) v = rng.uniform(-1, 1);
  for (double& v : rot.data()) v = rng.uniform(-1, 1);
  std::vector<ad::Tensor> kps;
  for (const auto* c : {&full, &sub}) {
    ad::Graph g;
    g.mark_output("k", body_graph(*c, g.input("pose", {2, 69}), g.input("shape", {2, 10}), g.input("rot", {2, 3})).keypoints);
    kps.push_back(g.evaluate({{"pose", pose}, {"shape", shape}, {"rot", rot}}, {}).at("k"));
  }
  for (std::size_t i = 0; i < kps[0].size(); ++i) EXPECT_NEAR(kps[0][i], kps[1][i], 1e-13);
}

TEST(BodyGraph, PoseBlendshapesMatchPlainRoute) {
  BodyTemplate b = body();
  Rng rng(14);
  b.pose_blendshapes = RowMatrix::Zero(3 * b.rest_vertices.cols(), 207);
  for (Eigen::Index i = 0; i < b.pose_blendshapes->size(); ++i) b.pose_blendshapes->data()[i] = 1e-2 * rng.normal();
  const BodyGraphConstants c = make_body_graph_constants(b, true);
  const PoseVector th = random_pose(rng);
  const ShapeCoeffs be = random_shape(rng);
  ad::Graph g;
  g.mark_output("v", body_graph(c, g.input("pose", {1, 69}), g.input("shape", {1, 10}), g.input("rot", {1, 3})).vertices);
  const auto res = g.evaluate({{"pose", ad::Tensor({1, 69}, std::vector<double>(th.data(), th.data() + 69))},
                               {"shape", ad::Tensor({1, 10}, std::vector<double>(be.data(), be.data() + 10))},
                               {"rot", ad::Tensor({1, 3})}},
                              {});
  const PosedBody e = pose_body(b, be, th);
  const PosedBody plain_without = pose_body(body(), be, th);
  double worst = 0.0, moved = 0.0;
  for (Eigen::Index v = 0; v < e.mesh.cols(); ++v)
    for (int k = 0; k < 3; ++k) {
      worst = std::max(worst, std::fabs(res.at("v")[static_cast<std::size_t>(v * 3 + k)] - e.mesh(k, v)));
      moved = std::max(moved, std::fabs(e.mesh(k, v) - plain_without.mesh(k, v)));
    }
  EXPECT_LT(worst, 1e-12);
  EXPECT_GT(moved, 1e-3);
}

// dM/dtheta, dM/dbeta, dX/dtheta and dX/dbeta against central differences,
// contracted with random weights.
TEST(BodyGraph, DerivativesMatchFiniteDifferences) {
  Rng rng(15);
  const BodyGraphConstants c = make_body_graph_constants(body(), true);
  for (const char* which : {"vertices", "keypoints"}) {
    ad::Graph g;
    const auto out = body_graph(c, g.input("pose", {2, 69}, true), g.input("shape", {2, 10}, true),
                                g.input("rot", {2, 3}, true));
    const ad::Var target = std::string(which) == "vertices" ? out.vertices : out.keypoints;
    ad::Tensor w(target.shape());
    for (double& v : w.data()) v = rng.uniform(-1, 1);
    g.mark_output("loss", ad::sum(target * g.constant(w)));
    ad::TensorMap inputs{{"pose", ad::Tensor({2, 69})}, {"shape", ad::Tensor({2, 10})}, {"rot", ad::Tensor({2, 3})}};
    for (auto& [name, t] : inputs)
      for (double& v : t.data()) v = rng.uniform(-1.5, 1.5);
    const auto r = ad::grad_check(g, "loss", inputs, {});
    EXPECT_LT(r.max_rel_error, 1e-4) << which << " worst " << r.worst;
  }
}

// --- camera --------------------------------------------------------------------

TEST(Camera, OrthographicDrop) {
  Matrix3X p(3, 1);
  p << 1, 2, 5;
  const Matrix2X x = project(p, {1.0, Eigen::Vector3d::Zero(), Eigen::Vector2d::Zero()});
  EXPECT_EQ(x.col(0), Eigen::Vector2d(1, 2));
}

TEST(Camera, ScaleThenTranslate) {
  Matrix3X p(3, 1);
  p << 1, 2, 5;
  const Matrix2X x = project(p, {2.0, Eigen::Vector3d::Zero(), Eigen::Vector2d(1, 1)});
  EXPECT_EQ(x.col(0), Eigen::Vector2d(3, 5));
}

TEST(Camera, RotationBeforeProjection) {
  Matrix3X p(3, 1);
  p << 1, 0, 0;
  const Matrix2X x = project(p, {1.0, Eigen::Vector3d(0, 0, pi / 2), Eigen::Vector2d::Zero()});
  EXPECT_LT((x.col(0) - Eigen::Vector2d(0, 1)).norm(), 1e-15);
}

TEST(Camera, DepthIsInvisible) {
  Rng rng(16);
  Matrix3X p = Matrix3X::Random(3, 10);
  const Matrix2X a = project(p, {0.8, Eigen::Vector3d::Zero(), Eigen::Vector2d(0.1, -0.2)});
  p.row(2).array() += rng.uniform(-10, 10);
  const Matrix2X b = project(p, {0.8, Eigen::Vector3d::Zero(), Eigen::Vector2d(0.1, -0.2)});
  EXPECT_EQ(a, b);
}

ThetaVector mean_theta() {
  ThetaVector t;
  t.global_rot() = Eigen::Vector3d(pi, 0, 0);
  t.scale() = 0.9;
  return t;
}

TEST(Compose, MeanThetaProjectsRestKeypoints) {
  const ThetaVector t = mean_theta();
  const Projection p = compose_projection(t, body());
  const Matrix3X rest = regress_keypoints(body().rest_vertices, body().keypoints);
  const Matrix3X rotated = rodrigues(t.global_rot()) * rest;
  for (Eigen::Index i = 0; i < 19; ++i) {
    EXPECT_LT((p.keypoints2d.col(i) - 0.9 * rotated.col(i).head<2>()).norm(), 1e-12);
  }
}

TEST(Compose, DoublingScaleDoublesAboutTranslation) {
  Rng rng(17);
  ThetaVector t;
  for (auto& v : t.values) v = rng.uniform(-0.5, 0.5);
  const Projection a = compose_projection(t, body());
  t.scale() *= 2.0;
  const Projection b = compose_projection(t, body());
  const Matrix2X da = a.keypoints2d.colwise() - t.translation();
  const Matrix2X db = b.keypoints2d.colwise() - t.translation();
  EXPECT_LT((db - 2.0 * da).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Compose, EqualsStepByStepProjection) {
  Rng rng(18);
  ThetaVector t;
  for (auto& v : t.values) v = rng.uniform(-0.5, 0.5);
  const Projection p = compose_projection(t, body());
  const PosedBody unrotated = pose_body(body(), t.shape(), t.pose());
  const Matrix2X expect = project(unrotated.keypoints, camera_of(t));
  EXPECT_LT((p.keypoints2d - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Compose, GraphMatchesPlain) {
  Rng rng(19);
  const BodyGraphConstants c = make_body_graph_constants(body(), false);
  ad::Graph g;
  const ComposeOutputs out = compose_projection_graph(c, g.input("theta", {2, 85}));
  g.mark_output("x2", out.keypoints2d);
  g.mark_output("x3", out.keypoints3d);
  ad::Tensor theta({2, 85});
  std::vector<ThetaVector> ts(2);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 85; ++i) theta[b * 85 + i] = ts[b].values[static_cast<Eigen::Index>(i)] = rng.uniform(-1, 1);
  const auto res = g.evaluate({{"theta", theta}}, {});
  for (std::size_t b = 0; b < 2; ++b) {
    const Projection p = compose_projection(ts[b], body());
    for (Eigen::Index i = 0; i < 19; ++i) {
      for (int k = 0; k < 2; ++k) EXPECT_NEAR(res.at("x2")[(b * 19 + i) * 2 + k], p.keypoints2d(k, i), 1e-12);
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(res.at("x3")[(b * 19 + i) * 3 + k], p.keypoints3d(k, i), 1e-12);
    }
  }
}

TEST(Compose, ProjectionGradientMatchesFiniteDifferences) {
  Rng rng(20);
  ad::Graph g;
  const ad::Var x = project_graph(g.input("points", {2, 7, 3}, true), g.input("s", {2, 1}, true),
                                  g.input("rot", {2, 3}, true), g.input("t", {2, 2}, true));
  ad::Tensor w(x.shape());
  for (double& v : w.data()) v = rng.uniform(-1, 1);
  g.mark_output("loss", ad::sum(x * g.constant(w)));
  ad::TensorMap inputs{{"points", ad::Tensor({2, 7, 3})}, {"s", ad::Tensor({2, 1})}, {"rot", ad::Tensor({2, 3})},
                       {"t", ad::Tensor({2, 2})}};
  for (auto& [name, t] : inputs)
    for (double& v : t.data()) v = rng.uniform(-1.5, 1.5);
  const auto r = ad::grad_check(g, "loss", inputs, {});
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst;
}

}  // namespace
}  // namespace hmrk
