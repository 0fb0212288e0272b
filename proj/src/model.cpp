#include "hmrk/model.hpp"

#include <cmath>
#include <numbers>

#include "hmrk/body_graph.hpp"
#include "hmrk/error.hpp"
#include "hmrk/layers.hpp"

namespace hmrk {

using ad::Graph;
using ad::Tensor;
using ad::Var;

const char* observation_mode_name(ObservationMode mode) {
  return mode == ObservationMode::kKeypoints ? "keypoints" : "part_image";
}

ObservationMode parse_observation_mode(const std::string& name) {
  if (name == "keypoints") return ObservationMode::kKeypoints;
  if (name == "part_image") return ObservationMode::kPartImage;
  fail(ErrorKind::kInvalidConfig, "unknown observation mode '" + name + "' (expected keypoints or part_image)");
}

std::size_t observation_dim(ObservationMode mode, std::size_t num_keypoints, std::size_t image_size) {
  if (mode == ObservationMode::kKeypoints) return 3 * num_keypoints + 3;
  return 6 * (image_size / 4) * (image_size / 4);
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"observation", observation_mode_name(c.observation)},
          {"num_keypoints", c.num_keypoints},
          {"image_size", c.image_size},
          {"encoder_hidden", c.encoder_hidden},
          {"feature_dim", c.feature_dim},
          {"regressor_width", c.regressor_width},
          {"dropout", c.dropout},
          {"iterations", c.iterations},
          {"disc_width", c.disc_width},
          {"disc_sigmoid", c.disc_sigmoid},
          {"init_gain", c.init_gain},
          {"output_gain", c.output_gain}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (j.contains("observation")) c.observation = parse_observation_mode(j.at("observation").get<std::string>());
    c.num_keypoints = j.value("num_keypoints", c.num_keypoints);
    c.image_size = j.value("image_size", c.image_size);
    c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.regressor_width = j.value("regressor_width", c.regressor_width);
    c.dropout = j.value("dropout", c.dropout);
    c.iterations = j.value("iterations", c.iterations);
    c.disc_width = j.value("disc_width", c.disc_width);
    c.disc_sigmoid = j.value("disc_sigmoid", c.disc_sigmoid);
    c.init_gain = j.value("init_gain", c.init_gain);
    c.output_gain = j.value("output_gain", c.output_gain);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidConfig, std::string("model config: ") + e.what());
  }
  if (c.iterations < 1) fail(ErrorKind::kInvalidConfig, "model config: iterations must be >= 1");
  if (c.dropout < 0.0 || c.dropout >= 1.0) fail(ErrorKind::kInvalidConfig, "model config: dropout must be in [0, 1)");
  if (c.image_size % 4 != 0) fail(ErrorKind::kInvalidConfig, "model config: image_size must be a multiple of 4");
  return c;
}

void init_parameters(ad::ParamStore& params, const ModelConfig& c, Rng& rng) {
  const double g = c.init_gain;
  ad::init_dense(params, "encoder.fc1", c.input_dim(), c.encoder_hidden, rng, g);
  ad::init_dense(params, "encoder.fc2", c.encoder_hidden, c.feature_dim, rng, g);
  ad::init_dense(params, "regressor.fc1", c.feature_dim + kThetaDim, c.regressor_width, rng, g);
  ad::init_dense(params, "regressor.fc2", c.regressor_width, c.regressor_width, rng, g);
  ad::init_dense(params, "regressor.fc3", c.regressor_width, kThetaDim, rng, c.output_gain);
  ad::init_dense(params, "disc.shape.fc1", kNumShape, 10, rng, g);
  ad::init_dense(params, "disc.shape.fc2", 10, 5, rng, g);
  ad::init_dense(params, "disc.shape.fc3", 5, 1, rng, g);
  ad::init_dense(params, "disc.pose.embed1", 9, kRotEmbedDim, rng, g);
  ad::init_dense(params, "disc.pose.embed2", kRotEmbedDim, kRotEmbedDim, rng, g);
  // 23 independent linear heads, stored as one [23, 32] weight.
  Tensor heads({kNumPoseJoints, kRotEmbedDim});
  const double bound = g * std::sqrt(6.0 / kRotEmbedDim);
  for (double& v : heads.data()) v = rng.uniform(-bound, bound);
  params["disc.pose.heads.weight"] = std::move(heads);
  params["disc.pose.heads.bias"] = Tensor({kNumPoseJoints});
  ad::init_dense(params, "disc.overall.fc1", kNumPoseJoints * kRotEmbedDim, c.disc_width, rng, g);
  ad::init_dense(params, "disc.overall.fc2", c.disc_width, c.disc_width, rng, g);
  ad::init_dense(params, "disc.overall.fc3", c.disc_width, 1, rng, g);
}

Var encode(Var observation, const ModelConfig& c) {
  if (observation.shape().size() != 2 || observation.dim(1) != c.input_dim()) {
    fail(ErrorKind::kShapeMismatch, "encoder expects observations [B, " + std::to_string(c.input_dim()) + "], got " +
                                        ad::shape_str(observation.shape()));
  }
  return ad::dense(ad::relu(ad::dense(observation, "encoder.fc1", c.encoder_hidden)), "encoder.fc2", c.feature_dim);
}

Var regressor_step(Var input, const ModelConfig& c) {
  Var h = ad::relu(ad::dense(input, "regressor.fc1", c.regressor_width));
  h = ad::dropout(h, c.dropout);
  h = ad::relu(ad::dense(h, "regressor.fc2", c.regressor_width));
  return ad::dense(h, "regressor.fc3", kThetaDim);
}

std::vector<Var> ief_regress(Var phi, Var theta0, const ModelConfig& c) {
  if (c.iterations < 1) fail(ErrorKind::kInvalidArgument, "ief_regress needs T >= 1");
  std::vector<Var> out;
  Var theta = theta0;
  for (int t = 0; t < c.iterations; ++t) {
    theta = theta + regressor_step(ad::concat({phi, theta}, 1), c);
    out.push_back(theta);
  }
  return out;
}

Var pose_to_rotmats(Var pose) {
  const std::size_t b = pose.dim(0);
  const std::size_t k = pose.dim(1) / 3;
  return ad::reshape(batch_rodrigues(ad::reshape(pose, {b * k, 3})), {b, k, 9});
}

Var discriminate(Var shape, Var pose, const ModelConfig& c) {
  Graph& g = *pose.graph;
  const std::size_t b = pose.dim(0);
  Var s = ad::relu(ad::dense(shape, "disc.shape.fc1", 10));
  s = ad::relu(ad::dense(s, "disc.shape.fc2", 5));
  s = ad::dense(s, "disc.shape.fc3", 1);

  Var e = ad::relu(ad::dense(pose_to_rotmats(pose), "disc.pose.embed1", kRotEmbedDim));
  e = ad::relu(ad::dense(e, "disc.pose.embed2", kRotEmbedDim));  // [B, 23, 32]
  const Var heads = ad::sum_axis(e * g.param("disc.pose.heads.weight", {kNumPoseJoints, kRotEmbedDim}), 2, false) +
                    g.param("disc.pose.heads.bias", {kNumPoseJoints});

  Var o = ad::relu(ad::dense(ad::reshape(e, {b, kNumPoseJoints * kRotEmbedDim}), "disc.overall.fc1", c.disc_width));
  o = ad::relu(ad::dense(o, "disc.overall.fc2", c.disc_width));
  o = ad::dense(o, "disc.overall.fc3", 1);

  const Var scores = ad::concat({s, heads, o}, 1);
  return c.disc_sigmoid ? ad::sigmoid(scores) : scores;
}

ThetaVector default_mean_theta(const std::vector<double>& pool_mean_pose) {
  ThetaVector t;
  if (!pool_mean_pose.empty()) {
    if (pool_mean_pose.size() != kPoseDim) fail(ErrorKind::kShapeMismatch, "pool mean pose must have 69 values");
    for (std::size_t i = 0; i < kPoseDim; ++i) t.pose()[static_cast<Eigen::Index>(i)] = pool_mean_pose[i];
  }
  t.global_rot() = Eigen::Vector3d(std::numbers::pi, 0.0, 0.0);
  t.scale() = 0.9;
  return t;
}

Tensor theta_batch(const ThetaVector& theta, std::size_t batch) {
  Tensor t({batch, kThetaDim});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t k = 0; k < kThetaDim; ++k) t[b * kThetaDim + k] = theta.values[static_cast<Eigen::Index>(k)];
  return t;
}

ThetaVector theta_row(const Tensor& thetas, std::size_t row) {
  ThetaVector t;
  for (std::size_t k = 0; k < kThetaDim; ++k) t.values[static_cast<Eigen::Index>(k)] = thetas[row * kThetaDim + k];
  return t;
}

std::vector<Inference> infer(const HmrModel& model, const BodyTemplate& body, const Tensor& observations) {
  const ModelConfig& c = model.config;
  if (observations.rank() != 2 || observations.dim(1) != c.input_dim()) {
    fail(ErrorKind::kShapeMismatch, "infer expects observations [B, " + std::to_string(c.input_dim()) + "], got " +
                                        ad::shape_str(observations.shape()));
  }
  const std::size_t n = observations.dim(0);
  Graph g;
  const auto thetas = ief_regress(encode(g.input("obs", {n, c.input_dim()}), c), g.input("theta0", {n, kThetaDim}), c);
  for (std::size_t t = 0; t < thetas.size(); ++t) g.mark_output("theta" + std::to_string(t + 1), thetas[t]);
  ad::EvalOptions opts;
  opts.check_finite = false;
  const auto out = g.evaluate({{"obs", observations}, {"theta0", theta_batch(model.mean_theta, n)}}, model.params, opts);
  for (std::size_t t = 1; t <= thetas.size(); ++t) {
    const Tensor& th = out.at("theta" + std::to_string(t));
    if (!th.all_finite()) {
      fail(ErrorKind::kNonFinite, "non-finite Theta at regression iteration " + std::to_string(t) + " of " +
                                      std::to_string(thetas.size()));
    }
  }
  const Tensor& last = out.at("theta" + std::to_string(thetas.size()));
  std::vector<Inference> res(n);
  for (std::size_t b = 0; b < n; ++b) {
    res[b].theta = theta_row(last, b);
    res[b].projection = compose_projection(res[b].theta, body);
  }
  return res;
}

Tensor discriminator_scores(const HmrModel& model, const std::vector<ShapeCoeffs>& shapes,
                           const std::vector<PoseVector>& poses) {
  if (shapes.size() != poses.size()) {
    fail(ErrorKind::kShapeMismatch, "discriminator_scores: " + std::to_string(shapes.size()) + " shapes vs " +
                                        std::to_string(poses.size()) + " poses");
  }
  const std::size_t n = poses.size();
  Tensor sh({n, kNumShape}), po({n, kPoseDim});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(shapes[i].data(), shapes[i].data() + kNumShape, sh.ptr() + i * kNumShape);
    std::copy(poses[i].data(), poses[i].data() + kPoseDim, po.ptr() + i * kPoseDim);
  }
  Graph g;
  g.mark_output("scores", discriminate(g.input("shape", {n, kNumShape}), g.input("pose", {n, kPoseDim}), model.config));
  return g.evaluate({{"shape", sh}, {"pose", po}}, model.params).at("scores");
}

}  // namespace hmrk
