#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hmrk/error.hpp"
#include "hmrk/rotation.hpp"
#include "hmrk/synth_template.hpp"
#include "hmrk/synthetic_data.hpp"

namespace hmrk {
namespace {

const BodyTemplate& body() {
  static const BodyTemplate b = synth_template();
  return b;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("hmrk_test_" + name);
}

DataConfig clean_keypoint_config() {
  DataConfig c;
  c.observation = ObservationMode::kKeypoints;
  c.noise_sigma = 0.0;
  c.p_occ = 0.0;
  return c;
}

// --- pool -----------------------------------------------------------------------

TEST(Pool, EmptyWhenNIsZero) {
  EXPECT_TRUE(sample_pool({}, 0, 1).empty());
}

TEST(Pool, ZeroBoxesGiveZeroPose) {
  PoolConfig c;
  c.limits.fill(AngleBox{});
  for (const PoseVector& p : sample_pool(c, 100, 2).poses) EXPECT_EQ(p, PoseVector::Zero());
}

TEST(Pool, DrawsStayWithinLimits) {
  const PoolConfig c;
  const MocapPool pool = sample_pool(c, 10000, 3);
  std::array<double, kNumPoseJoints> max_angle{};
  for (const PoseVector& p : pool.poses) {
    const auto a = joint_angles(p);
    for (std::size_t j = 0; j < kNumPoseJoints; ++j) {
      max_angle[j] = std::max(max_angle[j], a[j]);
      for (int k = 0; k < 3; ++k) {
        const double v = p[static_cast<Eigen::Index>(3 * j) + k];
        EXPECT_GE(v, c.limits[j].lo[k]);
        EXPECT_LE(v, c.limits[j].hi[k]);
      }
    }
  }
  for (std::size_t j = 0; j < kNumPoseJoints; ++j) {
    const double bound = c.limits[j].lo.cwiseAbs().cwiseMax(c.limits[j].hi.cwiseAbs()).norm();
    EXPECT_LE(max_angle[j], bound) << "joint " << j + 1;
  }
  for (const ShapeCoeffs& s : pool.shapes) EXPECT_LE(s.cwiseAbs().maxCoeff(), 3.0);
}

TEST(Pool, ShapeSpread) {
  const MocapPool pool = sample_pool({}, 20000, 4);
  double m = 0, v = 0;
  for (const ShapeCoeffs& s : pool.shapes) m += s[0];
  m /= 20000;
  for (const ShapeCoeffs& s : pool.shapes) v += (s[0] - m) * (s[0] - m);
  v /= 20000;
  EXPECT_NEAR(m, 0.0, 0.03);
  EXPECT_NEAR(v, 0.9733, 0.03);  // variance of N(0,1) truncated at +-3
}

TEST(Pool, PerIdDeterminism) {
  const MocapPool a = sample_pool({}, 10, 5), b = sample_pool({}, 30, 5), c = sample_pool({}, 10, 6);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(a.poses[i], b.poses[i]);
    EXPECT_EQ(a.shapes[i], b.shapes[i]);
  }
  EXPECT_NE(a.poses[0], c.poses[0]);
}

TEST(Pool, FileRoundTrip) {
  const MocapPool a = sample_pool({}, 50, 7);
  const auto path = temp_path("pool.bin");
  save_pool(path, a);
  const MocapPool b = load_pool(path);
  ASSERT_EQ(b.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(a.poses[i], b.poses[i]);
    EXPECT_EQ(a.shapes[i], b.shapes[i]);
  }
  std::filesystem::remove(path);
}

TEST(Pool, QuantileBracketsAngles) {
  const MocapPool pool = sample_pool({}, 2000, 8);
  const auto q50 = pool_angle_quantile(pool, 0.5), q99 = pool_angle_quantile(pool, 0.99);
  const auto q100 = pool_angle_quantile(pool, 1.0);
  for (std::size_t j = 0; j < kNumPoseJoints; ++j) {
    EXPECT_LE(q50[j], q99[j]);
    EXPECT_LE(q99[j], q100[j]);
  }
}

TEST(Pool, MirroredLimits) {
  const JointLimits l = default_joint_limits();
  // Left/right shoulders (joints 16 and 17).
  EXPECT_EQ(l[15].lo.x(), l[16].lo.x());
  EXPECT_EQ(l[15].lo.z(), -l[16].hi.z());
  EXPECT_EQ(l[15].hi.y(), -l[16].lo.y());
}

// --- cameras --------------------------------------------------------------------

TEST(Camera, SampledRangesAndUprightBody) {
  Rng rng(9);
  const CameraRanges r;
  for (int i = 0; i < 1000; ++i) {
    const CameraParams c = sample_camera(r, rng);
    EXPECT_GE(c.scale, r.scale_min);
    EXPECT_LE(c.scale, r.scale_max);
    EXPECT_LE(c.translation.cwiseAbs().maxCoeff(), r.translation);
    const Eigen::Vector3d up = rodrigues(c.global_rot) * Eigen::Vector3d::UnitY();
    EXPECT_LT(up.y(), -0.9);  // body up is image up (negative y)
  }
}

// --- paired generation ----------------------------------------------------------

TEST(Paired, NoCorruptionMatchesProjection) {
  const MocapPool pool = sample_pool({}, 100, 10);
  const Dataset d = generate_paired(body(), clean_keypoint_config(), pool, 50, 11);
  for (const SampleRecord& s : d.samples) {
    const Projection proj = compose_projection(s.theta, body());
    EXPECT_EQ(s.keypoints2d, proj.keypoints2d);
    const CameraParams cam = camera_of(s.theta);
    const PosedBody pb = pose_body(body(), s.theta.shape(), s.theta.pose());
    EXPECT_LT((s.keypoints2d - project(pb.keypoints, cam)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Paired, GroundTruthReproducesAnnotations) {
  const MocapPool pool = sample_pool({}, 100, 12);
  DataConfig c = clean_keypoint_config();
  c.p_occ = 0.2;
  const Dataset d = generate_paired(body(), c, pool, 50, 13);
  for (const SampleRecord& s : d.samples) {
    const Projection proj = compose_projection(s.theta, body());
    EXPECT_LT((proj.keypoints2d - s.keypoints2d).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((proj.keypoints3d - s.joints3d).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Paired, OutOfFrameIsInvisible) {
  const MocapPool pool = sample_pool({}, 100, 14);
  DataConfig c = clean_keypoint_config();
  c.camera.translation = 1.5;
  const Dataset d = generate_paired(body(), c, pool, 300, 15);
  std::size_t outside = 0;
  for (const SampleRecord& s : d.samples) {
    for (Eigen::Index q = 0; q < s.keypoints2d.cols(); ++q) {
      const bool in = s.keypoints2d.col(q).cwiseAbs().maxCoeff() <= 1.0;
      EXPECT_EQ(s.visible[static_cast<std::size_t>(q)], in ? 1 : 0);
      outside += !in;
    }
  }
  EXPECT_GT(outside, 100u);
}

TEST(Paired, OcclusionRateMatchesBernoulli) {
  const MocapPool pool = sample_pool({}, 1000, 16);
  DataConfig c = clean_keypoint_config();
  c.p_occ = 0.3;
  const Dataset d = generate_paired(body(), c, pool, 10000, 17);
  double visible = 0, in_frame = 0;
  for (const SampleRecord& s : d.samples) {
    for (Eigen::Index q = 0; q < s.keypoints2d.cols(); ++q) {
      in_frame += s.keypoints2d.col(q).cwiseAbs().maxCoeff() <= 1.0;
      visible += s.visible[static_cast<std::size_t>(q)];
    }
  }
  EXPECT_NEAR(visible / in_frame, 0.7, 0.01);
}

TEST(Paired, NoiseHasConfiguredSpread) {
  const MocapPool pool = sample_pool({}, 100, 18);
  DataConfig c = clean_keypoint_config();
  c.noise_sigma = 0.02;
  const Dataset d = generate_paired(body(), c, pool, 500, 19);
  double ss = 0;
  std::size_t n = 0;
  for (const SampleRecord& s : d.samples) {
    const Matrix2X diff = s.keypoints2d - compose_projection(s.theta, body()).keypoints2d;
    ss += diff.squaredNorm();
    n += static_cast<std::size_t>(diff.size());
  }
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(n)), 0.02, 0.001);
}

TEST(Paired, DeterministicPerId) {
  const MocapPool pool = sample_pool({}, 100, 20);
  const DataConfig c;
  const Dataset all = generate_paired(body(), c, pool, 10, 21);
  const Dataset tail = generate_paired(body(), c, pool, 5, 21, 5);
  for (std::size_t i = 0; i < 5; ++i) {
    const SampleRecord &a = all.samples[5 + i], &b = tail.samples[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.theta.values, b.theta.values);
    EXPECT_EQ(a.keypoints2d, b.keypoints2d);
    EXPECT_EQ(a.visible, b.visible);
    EXPECT_EQ(a.labels, b.labels);
  }
}

TEST(Paired, PairedFractionSplitsThe3dLabels) {
  const MocapPool pool = sample_pool({}, 100, 22);
  const Dataset d = generate_paired(body(), clean_keypoint_config(), pool, 4000, 23);
  double with3d = 0;
  for (const SampleRecord& s : d.samples) with3d += s.has_3d;
  EXPECT_NEAR(with3d / 4000.0, 0.5, 0.03);
}

TEST(Paired, EmptyPoolThrows) {
  EXPECT_THROW(generate_paired(body(), {}, MocapPool{}, 3, 1), Error);
}

// --- observations ---------------------------------------------------------------

TEST(Observation, KeypointFeaturesGateInvisible) {
  SampleRecord s;
  s.keypoints2d = Matrix2X::Constant(2, 19, 0.5);
  s.keypoints2d(0, 0) = 0.1;
  s.keypoints2d(0, 1) = 0.9;
  s.keypoints2d(0, 3) = 40.0;
  s.visible.assign(19, 1);
  s.visible[3] = 0;
  const auto f = observation_features(s, ObservationMode::kKeypoints, 64);
  ASSERT_EQ(f.size(), 60u);
  // 18 visible, centre (0.5, 0.5), squared spread 0.32 / 18
  const double spread = std::sqrt(0.32 / 18.0);
  EXPECT_EQ(f[9], 0.0);
  EXPECT_EQ(f[10], 0.0);
  EXPECT_EQ(f[11], 0.0);
  EXPECT_NEAR(f[0], -0.4 / spread, 1e-12);
  EXPECT_NEAR(f[3], 0.4 / spread, 1e-12);
  EXPECT_NEAR(f[12], 0.0, 1e-12);
  EXPECT_EQ(f[14], 1.0);
  EXPECT_NEAR(f[57], 0.5, 1e-12);
  EXPECT_NEAR(f[58], 0.5, 1e-12);
  EXPECT_NEAR(f[59], spread, 1e-12);
}

TEST(Observation, KeypointFeaturesInvariantToShiftAndScale) {
  Rng rng(3);
  SampleRecord a;
  a.keypoints2d = Matrix2X(2, 19);
  for (Eigen::Index i = 0; i < a.keypoints2d.size(); ++i) a.keypoints2d.data()[i] = rng.uniform(-1, 1);
  a.visible.assign(19, 1);
  a.visible[7] = 0;
  SampleRecord b = a;
  b.keypoints2d = (2.5 * a.keypoints2d).colwise() + Eigen::Vector2d(0.3, -0.2);
  const auto fa = observation_features(a, ObservationMode::kKeypoints, 64);
  const auto fb = observation_features(b, ObservationMode::kKeypoints, 64);
  for (std::size_t i = 0; i < 57; ++i) EXPECT_NEAR(fa[i], fb[i], 1e-12);
  EXPECT_NEAR(fb[59], 2.5 * fa[59], 1e-12);

  SampleRecord none = a;
  none.visible.assign(19, 0);
  const auto fn = observation_features(none, ObservationMode::kKeypoints, 64);
  for (std::size_t i = 0; i < 59; ++i) EXPECT_EQ(fn[i], 0.0);
  EXPECT_EQ(fn[59], 1.0);
}

TEST(Observation, PartImageFeaturesPoolOccupancy) {
  const MocapPool pool = sample_pool({}, 20, 24);
  const Dataset d = generate_paired(body(), DataConfig{}, pool, 3, 25);
  for (const SampleRecord& s : d.samples) {
    const auto f = observation_features(s, ObservationMode::kPartImage, 64);
    ASSERT_EQ(f.size(), 6u * 16 * 16);
    double total = 0;
    for (double v : f) {
      total += v;
      EXPECT_LE(v, 1.0);
    }
    std::size_t fg = 0;
    for (auto l : s.labels) fg += l != 0;
    EXPECT_NEAR(total * 16.0, static_cast<double>(fg), 1e-9);
    EXPECT_GT(fg, 100u);
  }
}

// --- dataset files --------------------------------------------------------------

TEST(DatasetFile, RoundTripIsBitIdentical) {
  const MocapPool pool = sample_pool({}, 20, 26);
  const DataConfig c;
  const Dataset a = generate_paired(body(), c, pool, 12, 27);
  const auto path = temp_path("data.bin");
  save_dataset(path, a, to_json(c));
  const Dataset b = load_dataset(path);
  ASSERT_EQ(b.size(), a.size());
  EXPECT_EQ(b.observation, a.observation);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.samples[i].id, b.samples[i].id);
    EXPECT_EQ(a.samples[i].theta.values, b.samples[i].theta.values);
    EXPECT_EQ(a.samples[i].keypoints2d, b.samples[i].keypoints2d);
    EXPECT_EQ(a.samples[i].joints3d, b.samples[i].joints3d);
    EXPECT_EQ(a.samples[i].visible, b.samples[i].visible);
    EXPECT_EQ(a.samples[i].has_3d, b.samples[i].has_3d);
    EXPECT_EQ(a.samples[i].labels, b.samples[i].labels);
  }
  std::filesystem::remove(path);
}

TEST(DatasetFile, TruncatedFileIsCorrupt) {
  const MocapPool pool = sample_pool({}, 20, 28);
  const Dataset a = generate_paired(body(), clean_keypoint_config(), pool, 12, 29);
  const auto path = temp_path("trunc.bin");
  save_dataset(path, a);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 100);
  try {
    load_dataset(path);
    FAIL() << "expected a corruption error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCorrupt);
  }
  std::filesystem::remove(path);
}

TEST(DatasetFile, ConfigRoundTrip) {
  DataConfig c;
  c.camera.yaw = 0.5;
  c.pool.limits[3].hi.x() = 1.0;
  c.observation = ObservationMode::kKeypoints;
  EXPECT_EQ(to_json(data_config_from_json(to_json(c))), to_json(c));
  auto j = to_json(c);
  j["p_occ"] = 2.0;
  EXPECT_THROW(data_config_from_json(j), Error);
}

}  // namespace
}  // namespace hmrk
