#include "hmrk/synthetic_data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hmrk/container.hpp"
#include "hmrk/error.hpp"
#include "hmrk/parallel.hpp"
#include "hmrk/rasterizer.hpp"
#include "hmrk/rotation.hpp"

namespace hmrk {

namespace {

using std::numbers::pi;

constexpr std::uint64_t kPoolStream = 0x9001;
constexpr std::uint64_t kSampleStream = 0x5a3e;
constexpr std::uint64_t kMonsterStream = 0x3057;
constexpr std::uint64_t kProtoStream = 0x7a0705;

AngleBox box(double x0, double x1, double y0, double y1, double z0, double z1) {
  return {Eigen::Vector3d(x0, y0, z0), Eigen::Vector3d(x1, y1, z1)};
}

// Mirror a left-side box across the sagittal plane: x kept, y and z negated.
AngleBox mirror(const AngleBox& b) {
  return box(b.lo.x(), b.hi.x(), -b.hi.y(), -b.lo.y(), -b.hi.z(), -b.lo.z());
}

double truncated_normal(Rng& rng, double sigma, double limit) {
  if (sigma == 0.0) return 0.0;
  for (;;) {
    const double v = rng.normal();
    if (std::fabs(v) <= limit) return sigma * v;
  }
}

nlohmann::json box_json(const AngleBox& b) {
  return {{"lo", {b.lo.x(), b.lo.y(), b.lo.z()}}, {"hi", {b.hi.x(), b.hi.y(), b.hi.z()}}};
}

AngleBox box_from_json(const nlohmann::json& j) {
  const auto lo = j.at("lo").get<std::vector<double>>(), hi = j.at("hi").get<std::vector<double>>();
  if (lo.size() != 3 || hi.size() != 3) fail(ErrorKind::kInvalidConfig, "angle box needs 3 lo and 3 hi values");
  AngleBox b{Eigen::Vector3d(lo[0], lo[1], lo[2]), Eigen::Vector3d(hi[0], hi[1], hi[2])};
  if ((b.lo.array() > b.hi.array()).any()) fail(ErrorKind::kInvalidConfig, "angle box with lo > hi");
  return b;
}

}  // namespace

JointLimits default_joint_limits() {
  JointLimits l;
  auto set = [&l](int joint, const AngleBox& b) { l[static_cast<std::size_t>(joint - 1)] = b; };
  const AngleBox hip = box(-1.6, 0.5, -0.5, 0.5, -0.3, 0.8);
  const AngleBox knee = box(0.0, 2.3, -0.1, 0.1, -0.1, 0.1);
  const AngleBox ankle = box(-0.5, 0.5, -0.3, 0.3, -0.3, 0.3);
  const AngleBox foot = box(-0.3, 0.3, -0.1, 0.1, -0.1, 0.1);
  const AngleBox collar = box(-0.2, 0.2, -0.2, 0.2, -0.2, 0.2);
  const AngleBox shoulder = box(-0.6, 0.6, -1.2, 0.5, -1.4, 0.6);
  const AngleBox elbow = box(-0.4, 0.4, -2.2, 0.0, -0.1, 0.1);
  const AngleBox wrist = box(-0.6, 0.6, -0.3, 0.3, -0.5, 0.5);
  const AngleBox hand = box(-0.2, 0.2, -0.2, 0.2, -0.2, 0.2);
  const AngleBox spine = box(-0.2, 0.5, -0.3, 0.3, -0.25, 0.25);
  set(1, hip), set(2, mirror(hip));
  set(4, knee), set(5, mirror(knee));
  set(7, ankle), set(8, mirror(ankle));
  set(10, foot), set(11, mirror(foot));
  set(13, collar), set(14, mirror(collar));
  set(16, shoulder), set(17, mirror(shoulder));
  set(18, elbow), set(19, mirror(elbow));
  set(20, wrist), set(21, mirror(wrist));
  set(22, hand), set(23, mirror(hand));
  set(3, spine), set(6, spine), set(9, spine);
  set(12, box(-0.4, 0.5, -0.5, 0.5, -0.3, 0.3));
  set(15, box(-0.3, 0.4, -0.5, 0.5, -0.3, 0.3));
  return l;
}

static PoseVector uniform_pose(const JointLimits& limits, Rng& rng) {
  PoseVector p;
  for (std::size_t j = 0; j < kNumPoseJoints; ++j) {
    const AngleBox& b = limits[j];
    for (int c = 0; c < 3; ++c) p[static_cast<Eigen::Index>(3 * j) + c] = b.lo[c] == b.hi[c] ? b.lo[c] : rng.uniform(b.lo[c], b.hi[c]);
  }
  return p;
}

MocapPool sample_pool(const PoolConfig& config, std::size_t n, std::uint64_t seed) {
  MocapPool pool;
  pool.shapes.resize(n);
  pool.poses.resize(n);
  const std::uint64_t base = derive_seed(seed, kPoolStream);
  std::vector<PoseVector> protos;
  Rng proto_rng(derive_seed(base, kProtoStream));
  for (std::size_t m = 0; m < config.modes; ++m) protos.push_back(uniform_pose(config.limits, proto_rng));
  parallel_for(n, [&](std::size_t i) {
    Rng rng(derive_seed(base, i));
    for (std::size_t k = 0; k < kNumShape; ++k) {
      pool.shapes[i][static_cast<Eigen::Index>(k)] = truncated_normal(rng, config.beta_sigma[k], config.beta_truncation);
    }
    if (protos.empty()) {
      pool.poses[i] = uniform_pose(config.limits, rng);
      return;
    }
    const PoseVector& proto = protos[rng.below(protos.size())];
    for (std::size_t j = 0; j < kNumPoseJoints; ++j) {
      const AngleBox& b = config.limits[j];
      for (int c = 0; c < 3; ++c) {
        const auto k = static_cast<Eigen::Index>(3 * j) + c;
        if (b.lo[c] == b.hi[c]) {
          pool.poses[i][k] = b.lo[c];
          continue;
        }
        const double sigma = config.mode_spread * (b.hi[c] - b.lo[c]);
        double v = proto[k] + sigma * rng.normal();
        while (v < b.lo[c] || v > b.hi[c]) v = proto[k] + sigma * rng.normal();
        pool.poses[i][k] = v;
      }
    }
  });
  return pool;
}

std::vector<double> pool_mean_pose(const MocapPool& pool) {
  std::vector<double> mean(kPoseDim, 0.0);
  if (pool.empty()) return mean;
  for (const PoseVector& p : pool.poses)
    for (std::size_t k = 0; k < kPoseDim; ++k) mean[k] += p[static_cast<Eigen::Index>(k)];
  for (double& m : mean) m /= static_cast<double>(pool.size());
  return mean;
}

std::array<double, kNumPoseJoints> joint_angles(const PoseVector& pose) {
  std::array<double, kNumPoseJoints> a{};
  for (std::size_t j = 0; j < kNumPoseJoints; ++j) a[j] = pose.segment<3>(static_cast<Eigen::Index>(3 * j)).norm();
  return a;
}

std::array<double, kNumPoseJoints> pool_angle_quantile(const MocapPool& pool, double q) {
  if (pool.empty()) fail(ErrorKind::kInvalidArgument, "quantile of an empty pool");
  std::array<double, kNumPoseJoints> out{};
  std::vector<double> v(pool.size());
  for (std::size_t j = 0; j < kNumPoseJoints; ++j) {
    for (std::size_t i = 0; i < pool.size(); ++i) v[i] = pool.poses[i].segment<3>(static_cast<Eigen::Index>(3 * j)).norm();
    std::sort(v.begin(), v.end());
    // Linear interpolation between order statistics.
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    out[j] = v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  }
  return out;
}

MocapPool random_monsters(std::size_t n, std::uint64_t seed) {
  MocapPool pool;
  Rng rng(derive_seed(seed, kMonsterStream));
  for (std::size_t i = 0; i < n; ++i) {
    ShapeCoeffs s;
    PoseVector p;
    for (auto& v : s) v = rng.uniform(-3.0, 3.0);
    for (auto& v : p) v = rng.uniform(-pi, pi);
    pool.shapes.push_back(s);
    pool.poses.push_back(p);
  }
  return pool;
}

void save_pool(const std::filesystem::path& path, const MocapPool& pool) {
  Container c("mocap_pool", kPoolFileVersion);
  const std::size_t n = pool.size();
  std::vector<double> shapes, poses;
  shapes.reserve(n * kNumShape);
  poses.reserve(n * kPoseDim);
  for (std::size_t i = 0; i < n; ++i) {
    shapes.insert(shapes.end(), pool.shapes[i].data(), pool.shapes[i].data() + kNumShape);
    poses.insert(poses.end(), pool.poses[i].data(), pool.poses[i].data() + kPoseDim);
  }
  c.meta()["count"] = n;
  c.put_f64("shapes", {n, kNumShape}, std::move(shapes));
  c.put_f64("poses", {n, kPoseDim}, std::move(poses));
  c.save(path);
}

MocapPool load_pool(const std::filesystem::path& path) {
  const Container c = Container::load(path, "mocap_pool", kPoolFileVersion);
  const std::size_t n = c.meta().at("count").get<std::size_t>();
  if (c.shape("shapes") != ad::Shape{n, kNumShape} || c.shape("poses") != ad::Shape{n, kPoseDim}) {
    fail(ErrorKind::kCorrupt, "pool '" + path.string() + "': array shapes do not match count " + std::to_string(n));
  }
  MocapPool pool;
  const auto& s = c.f64("shapes");
  const auto& p = c.f64("poses");
  for (std::size_t i = 0; i < n; ++i) {
    pool.shapes.emplace_back(Eigen::Map<const ShapeCoeffs>(s.data() + i * kNumShape));
    pool.poses.emplace_back(Eigen::Map<const PoseVector>(p.data() + i * kPoseDim));
  }
  return pool;
}

CameraParams sample_camera(const CameraRanges& r, Rng& rng) {
  CameraParams cam;
  cam.scale = rng.uniform(r.scale_min, r.scale_max);
  cam.translation = Eigen::Vector2d(rng.uniform(-r.translation, r.translation), rng.uniform(-r.translation, r.translation));
  const double yaw = rng.uniform(-r.yaw, r.yaw);
  const double pitch = rng.uniform(-r.pitch, r.pitch);
  const double roll = rng.uniform(-r.roll, r.roll);
  const Eigen::Matrix3d rot = rodrigues(Eigen::Vector3d(pi, 0, 0)) * rodrigues(Eigen::Vector3d(pitch, 0, 0)) *
                              rodrigues(Eigen::Vector3d(0, 0, roll)) * rodrigues(Eigen::Vector3d(0, yaw, 0));
  cam.global_rot = axis_angle_from_matrix(rot);
  return cam;
}

nlohmann::json to_json(const DataConfig& c) {
  nlohmann::json limits = nlohmann::json::array();
  for (const AngleBox& b : c.pool.limits) limits.push_back(box_json(b));
  return {{"pool",
           {{"limits", limits},
            {"beta_sigma", c.pool.beta_sigma},
            {"beta_truncation", c.pool.beta_truncation},
            {"modes", c.pool.modes},
            {"mode_spread", c.pool.mode_spread}}},
          {"camera",
           {{"scale_min", c.camera.scale_min},
            {"scale_max", c.camera.scale_max},
            {"translation", c.camera.translation},
            {"yaw", c.camera.yaw},
            {"pitch", c.camera.pitch},
            {"roll", c.camera.roll}}},
          {"noise_sigma", c.noise_sigma},
          {"p_occ", c.p_occ},
          {"paired_fraction", c.paired_fraction},
          {"observation", observation_mode_name(c.observation)},
          {"image_size", c.image_size},
          {"num_train", c.num_train},
          {"num_val", c.num_val},
          {"pool_size", c.pool_size},
          {"seed", c.seed}};
}

DataConfig data_config_from_json(const nlohmann::json& j) {
  DataConfig c;
  try {
    if (j.contains("pool")) {
      const auto& p = j.at("pool");
      if (p.contains("limits")) {
        if (p.at("limits").size() != kNumPoseJoints) fail(ErrorKind::kInvalidConfig, "pool.limits needs 23 boxes");
        for (std::size_t k = 0; k < kNumPoseJoints; ++k) c.pool.limits[k] = box_from_json(p.at("limits")[k]);
      }
      if (p.contains("beta_sigma")) {
        const auto s = p.at("beta_sigma").get<std::vector<double>>();
        if (s.size() != kNumShape) fail(ErrorKind::kInvalidConfig, "pool.beta_sigma needs 10 values");
        std::copy(s.begin(), s.end(), c.pool.beta_sigma.begin());
      }
      c.pool.beta_truncation = p.value("beta_truncation", c.pool.beta_truncation);
      c.pool.modes = p.value("modes", c.pool.modes);
      c.pool.mode_spread = p.value("mode_spread", c.pool.mode_spread);
    }
    if (j.contains("camera")) {
      const auto& cam = j.at("camera");
      c.camera.scale_min = cam.value("scale_min", c.camera.scale_min);
      c.camera.scale_max = cam.value("scale_max", c.camera.scale_max);
      c.camera.translation = cam.value("translation", c.camera.translation);
      c.camera.yaw = cam.value("yaw", c.camera.yaw);
      c.camera.pitch = cam.value("pitch", c.camera.pitch);
      c.camera.roll = cam.value("roll", c.camera.roll);
    }
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.p_occ = j.value("p_occ", c.p_occ);
    c.paired_fraction = j.value("paired_fraction", c.paired_fraction);
    if (j.contains("observation")) c.observation = parse_observation_mode(j.at("observation").get<std::string>());
    c.image_size = j.value("image_size", c.image_size);
    c.num_train = j.value("num_train", c.num_train);
    c.num_val = j.value("num_val", c.num_val);
    c.pool_size = j.value("pool_size", c.pool_size);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidConfig, std::string("data config: ") + e.what());
  }
  if (c.noise_sigma < 0 || c.p_occ < 0 || c.p_occ > 1 || c.paired_fraction < 0 || c.paired_fraction > 1) {
    fail(ErrorKind::kInvalidConfig, "data config: noise_sigma >= 0 and p_occ, paired_fraction in [0, 1] required");
  }
  if (c.pool.modes > 0 && !(c.pool.mode_spread > 0)) fail(ErrorKind::kInvalidConfig, "data config: pool.mode_spread must be positive");
  if (c.camera.scale_min <= 0 || c.camera.scale_max < c.camera.scale_min) {
    fail(ErrorKind::kInvalidConfig, "data config: need 0 < camera.scale_min <= camera.scale_max");
  }
  if (c.image_size <= 0 || c.image_size % 4 != 0) {
    fail(ErrorKind::kInvalidConfig, "data config: image_size must be a positive multiple of 4");
  }
  return c;
}

Dataset generate_paired(const BodyTemplate& body, const DataConfig& config, const MocapPool& pool, std::size_t n,
                        std::uint64_t seed, std::uint32_t first_id) {
  if (pool.empty()) fail(ErrorKind::kInvalidArgument, "generate_paired needs a non-empty pool");
  Dataset data;
  data.observation = config.observation;
  data.image_size = config.image_size;
  data.samples.resize(n);
  const std::size_t p = body.num_keypoints();
  const std::uint64_t base = derive_seed(seed, kSampleStream);
  const bool render = config.observation == ObservationMode::kPartImage;
  const std::vector<int> parts = render ? vertex_part_labels(body) : std::vector<int>{};
  parallel_for(n, [&](std::size_t i) {
    SampleRecord& s = data.samples[i];
    s.id = first_id + static_cast<std::uint32_t>(i);
    Rng rng(derive_seed(base, s.id));
    const std::size_t k = rng.below(pool.size());
    const CameraParams cam = sample_camera(config.camera, rng);
    s.theta.pose() = pool.poses[k];
    s.theta.shape() = pool.shapes[k];
    s.theta.global_rot() = cam.global_rot;
    s.theta.translation() = cam.translation;
    s.theta.scale() = cam.scale;
    s.has_3d = rng.uniform() < config.paired_fraction;

    const Projection proj = compose_projection(s.theta, body);
    s.joints3d = proj.keypoints3d;
    s.keypoints2d = proj.keypoints2d;
    s.visible.assign(p, 1);
    for (std::size_t q = 0; q < p; ++q) {
      const auto col = static_cast<Eigen::Index>(q);
      const bool in_frame = proj.keypoints2d.col(col).cwiseAbs().maxCoeff() <= 1.0;
      const double u = rng.uniform();
      const double nx = rng.normal(), ny = rng.normal();
      if (!in_frame || u < config.p_occ) s.visible[q] = 0;
      if (config.noise_sigma > 0) s.keypoints2d.col(col) += config.noise_sigma * Eigen::Vector2d(nx, ny);
    }
    if (render) {
      const CameraParams flat{cam.scale, Eigen::Vector3d::Zero(), cam.translation};
      s.labels = render_parts(proj.mesh, body.faces, parts, flat, config.image_size).labels;
    }
  });
  return data;
}

std::vector<double> observation_features(const SampleRecord& s, ObservationMode mode, int image_size) {
  if (mode == ObservationMode::kKeypoints) {
    const std::size_t p = s.visible.size();
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    double n = 0.0;
    for (std::size_t q = 0; q < p; ++q) {
      if (!s.visible[q]) continue;
      c += s.keypoints2d.col(static_cast<Eigen::Index>(q));
      n += 1.0;
    }
    double spread = 1.0;
    if (n > 0.0) {
      c /= n;
      double ss = 0.0;
      for (std::size_t q = 0; q < p; ++q) {
        if (s.visible[q]) ss += (s.keypoints2d.col(static_cast<Eigen::Index>(q)) - c).squaredNorm();
      }
      spread = std::max(std::sqrt(ss / n), 1e-3);
    }
    std::vector<double> f(3 * p + 3);
    for (std::size_t q = 0; q < p; ++q) {
      const double v = s.visible[q];
      f[3 * q] = v * (s.keypoints2d(0, static_cast<Eigen::Index>(q)) - c.x()) / spread;
      f[3 * q + 1] = v * (s.keypoints2d(1, static_cast<Eigen::Index>(q)) - c.y()) / spread;
      f[3 * q + 2] = v;
    }
    f[3 * p] = c.x();
    f[3 * p + 1] = c.y();
    f[3 * p + 2] = spread;
    return f;
  }
  const int size = image_size, cells = image_size / 4;
  if (s.labels.size() != static_cast<std::size_t>(size * size)) {
    fail(ErrorKind::kShapeMismatch, "sample " + std::to_string(s.id) + " has no " + std::to_string(size) + "x" +
                                        std::to_string(size) + " part image");
  }
  const std::size_t plane = static_cast<std::size_t>(cells * cells);
  std::vector<double> f(6 * plane, 0.0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const int l = s.labels[static_cast<std::size_t>(y * size + x)];
      if (l == 0) continue;
      f[static_cast<std::size_t>(l - 1) * plane + static_cast<std::size_t>((y / 4) * cells + x / 4)] += 1.0 / 16.0;
    }
  }
  return f;
}

ad::Tensor observation_batch(const Dataset& data, std::span<const std::size_t> rows) {
  const std::size_t p = data.samples.empty() ? kNumKeypoints : data.samples.front().visible.size();
  const std::size_t d = observation_dim(data.observation, p, static_cast<std::size_t>(data.image_size));
  ad::Tensor t({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto f = observation_features(data.samples.at(rows[r]), data.observation, data.image_size);
    std::copy(f.begin(), f.end(), t.ptr() + r * d);
  }
  return t;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data, const nlohmann::json& config) {
  Container c("dataset", kDatasetFileVersion);
  const std::size_t n = data.size();
  const std::size_t p = n ? data.samples[0].visible.size() : kNumKeypoints;
  const bool images = data.observation == ObservationMode::kPartImage;
  const std::size_t px = static_cast<std::size_t>(data.image_size * data.image_size);
  std::vector<std::int32_t> ids;
  std::vector<double> theta, kp2d, j3d;
  std::vector<std::uint8_t> vis, has3d, labels;
  for (const SampleRecord& s : data.samples) {
    if (s.visible.size() != p || (images && s.labels.size() != px)) {
      fail(ErrorKind::kShapeMismatch, "sample " + std::to_string(s.id) + " does not match the dataset layout");
    }
    ids.push_back(static_cast<std::int32_t>(s.id));
    theta.insert(theta.end(), s.theta.values.data(), s.theta.values.data() + kThetaDim);
    kp2d.insert(kp2d.end(), s.keypoints2d.data(), s.keypoints2d.data() + 2 * p);
    j3d.insert(j3d.end(), s.joints3d.data(), s.joints3d.data() + 3 * p);
    vis.insert(vis.end(), s.visible.begin(), s.visible.end());
    has3d.push_back(s.has_3d ? 1 : 0);
    labels.insert(labels.end(), s.labels.begin(), s.labels.end());
  }
  c.meta()["count"] = n;
  c.meta()["num_keypoints"] = p;
  c.meta()["observation"] = observation_mode_name(data.observation);
  c.meta()["image_size"] = data.image_size;
  if (!config.is_null()) c.meta()["config"] = config;
  c.put_i32("ids", {n}, std::move(ids));
  c.put_f64("theta", {n, kThetaDim}, std::move(theta));
  c.put_f64("keypoints2d", {n, p, 2}, std::move(kp2d));
  c.put_f64("joints3d", {n, p, 3}, std::move(j3d));
  c.put_u8("visibility", {n, p}, std::move(vis));
  c.put_u8("has_3d", {n}, std::move(has3d));
  if (images) {
    c.put_u8("labels", {n, static_cast<std::size_t>(data.image_size), static_cast<std::size_t>(data.image_size)},
             std::move(labels));
  }
  c.save(path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  const Container c = Container::load(path, "dataset", kDatasetFileVersion);
  Dataset data;
  std::size_t n = 0, p = 0;
  try {
    n = c.meta().at("count").get<std::size_t>();
    p = c.meta().at("num_keypoints").get<std::size_t>();
    data.observation = parse_observation_mode(c.meta().at("observation").get<std::string>());
    data.image_size = c.meta().at("image_size").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCorrupt, "dataset '" + path.string() + "': bad index: " + e.what());
  }
  const bool images = data.observation == ObservationMode::kPartImage;
  const std::size_t sz = static_cast<std::size_t>(data.image_size);
  auto expect = [&](const std::string& name, const ad::Shape& shape) {
    if (!c.has(name)) fail(ErrorKind::kCorrupt, "dataset '" + path.string() + "': missing array '" + name + "'");
    if (c.shape(name) != shape) {
      fail(ErrorKind::kCorrupt, "dataset '" + path.string() + "': array '" + name + "' has shape " +
                                    ad::shape_str(c.shape(name)) + ", index count " + std::to_string(n) +
                                    " implies " + ad::shape_str(shape));
    }
  };
  expect("ids", {n});
  expect("theta", {n, kThetaDim});
  expect("keypoints2d", {n, p, 2});
  expect("joints3d", {n, p, 3});
  expect("visibility", {n, p});
  expect("has_3d", {n});
  if (images) expect("labels", {n, sz, sz});
  const auto& ids = c.i32("ids");
  const auto& theta = c.f64("theta");
  const auto& kp = c.f64("keypoints2d");
  const auto& j3 = c.f64("joints3d");
  const auto& vis = c.u8("visibility");
  const auto& h3 = c.u8("has_3d");
  data.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    SampleRecord& s = data.samples[i];
    s.id = static_cast<std::uint32_t>(ids[i]);
    s.theta.values = Eigen::Map<const Eigen::Matrix<double, kThetaDim, 1>>(theta.data() + i * kThetaDim);
    s.keypoints2d = Eigen::Map<const Matrix2X>(kp.data() + i * 2 * p, 2, static_cast<Eigen::Index>(p));
    s.joints3d = Eigen::Map<const Matrix3X>(j3.data() + i * 3 * p, 3, static_cast<Eigen::Index>(p));
    s.visible.assign(vis.begin() + static_cast<std::ptrdiff_t>(i * p), vis.begin() + static_cast<std::ptrdiff_t>((i + 1) * p));
    s.has_3d = h3[i] != 0;
    if (images) {
      const auto& lab = c.u8("labels");
      s.labels.assign(lab.begin() + static_cast<std::ptrdiff_t>(i * sz * sz),
                      lab.begin() + static_cast<std::ptrdiff_t>((i + 1) * sz * sz));
    }
  }
  return data;
}

}  // namespace hmrk
