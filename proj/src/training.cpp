#include "hmrk/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "hmrk/body_graph.hpp"
#include "hmrk/camera.hpp"
#include "hmrk/container.hpp"
#include "hmrk/error.hpp"
#include "hmrk/metrics.hpp"

namespace hmrk {

using ad::Graph;
using ad::Tensor;
using ad::TensorMap;
using ad::Var;

namespace {

constexpr std::uint64_t kBatchStream = 0xBA7C4;
constexpr std::uint64_t kInitStream = 0x1A17;
constexpr std::uint64_t kDropoutStream = 0xD40F;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool has_prefix(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

TensorMap select(const TensorMap& grads, std::initializer_list<const char*> prefixes) {
  TensorMap out;
  for (const auto& [name, g] : grads)
    for (const char* p : prefixes)
      if (has_prefix(name, p)) out.emplace(name, g);
  return out;
}

ad::AdamConfig adam_config(const TrainConfig& c, double lr, double beta1) {
  return {lr, beta1, c.adam_beta2, c.adam_epsilon};
}

}  // namespace

const char* train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kPaired: return "paired";
    case TrainMode::kUnpaired: return "unpaired";
    case TrainMode::kNoPriorNo3d: return "no_prior_no_3d";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "paired") return TrainMode::kPaired;
  if (name == "unpaired") return TrainMode::kUnpaired;
  if (name == "no_prior_no_3d") return TrainMode::kNoPriorNo3d;
  fail(ErrorKind::kInvalidConfig, "unknown training mode '" + name + "' (expected paired, unpaired or no_prior_no_3d)");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"mode", train_mode_name(c.mode)},
          {"batch_size", c.batch_size},
          {"lr_encoder", c.lr_encoder},
          {"lr_disc", c.lr_disc},
          {"adam_beta1", c.adam_beta1},
          {"disc_beta1", c.disc_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"epochs", c.epochs},
          {"steps_per_epoch", c.steps_per_epoch},
          {"validate_every", c.validate_every},
          {"weights", {{"reproj", c.weights.reproj}, {"joints3d", c.weights.joints3d}, {"adv", c.weights.adv}}},
          {"smpl_param_loss", c.smpl_param_loss},
          {"seed", c.seed},
          {"model", to_json(c.model)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("mode")) c.mode = parse_train_mode(j.at("mode").get<std::string>());
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_encoder = j.value("lr_encoder", c.lr_encoder);
    c.lr_disc = j.value("lr_disc", c.lr_disc);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.disc_beta1 = j.value("disc_beta1", c.disc_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    c.epochs = j.value("epochs", c.epochs);
    c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
    c.validate_every = j.value("validate_every", c.validate_every);
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      c.weights.reproj = w.value("reproj", c.weights.reproj);
      c.weights.joints3d = w.value("joints3d", c.weights.joints3d);
      c.weights.adv = w.value("adv", c.weights.adv);
    }
    c.smpl_param_loss = j.value("smpl_param_loss", c.smpl_param_loss);
    c.seed = j.value("seed", c.seed);
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidConfig, std::string("train config: ") + e.what());
  }
  if (c.batch_size == 0) fail(ErrorKind::kInvalidConfig, "train config: batch_size must be positive");
  if (c.mode == TrainMode::kPaired && c.batch_size % 2 != 0) {
    fail(ErrorKind::kInvalidConfig, "train config: paired mode needs an even batch_size, got " +
                                        std::to_string(c.batch_size));
  }
  if (!(c.lr_encoder > 0.0) || !(c.lr_disc > 0.0)) fail(ErrorKind::kInvalidConfig, "train config: learning rates must be positive");
  if (c.epochs < 0) fail(ErrorKind::kInvalidConfig, "train config: epochs must be >= 0");
  return c;
}

// --- state and checkpoints -----------------------------------------------

TrainState init_train_state(const TrainConfig& config, const MocapPool& pool) {
  TrainState s;
  s.config = config;
  s.model.config = config.model;
  Rng rng(derive_seed(config.seed, kInitStream));
  init_parameters(s.model.params, config.model, rng);
  s.model.mean_theta = default_mean_theta(pool.empty() ? std::vector<double>{} : pool_mean_pose(pool));
  s.encoder_opt = ad::Adam(adam_config(config, config.lr_encoder, config.adam_beta1));
  s.disc_opt = ad::Adam(adam_config(config, config.lr_disc, config.disc_beta1));
  s.rng = Rng(derive_seed(config.seed, kBatchStream)).save();
  s.best_val = std::numeric_limits<double>::infinity();
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& s) {
  Container c("checkpoint", kCheckpointVersion);
  c.meta()["train_config"] = to_json(s.config);
  c.meta()["model_config"] = to_json(s.model.config);
  c.meta()["step"] = s.step;
  c.meta()["epoch"] = s.epoch;
  c.meta()["rng"] = s.rng;
  c.put_f64("best_val", {1}, {s.best_val});
  c.put_f64("mean_theta", {kThetaDim}, {s.model.mean_theta.values.data(), s.model.mean_theta.values.data() + kThetaDim});
  for (const auto& [name, t] : s.model.params) c.put("param/" + name, t);
  s.encoder_opt.save(c, "adam_encoder");
  s.disc_opt.save(c, "adam_disc");
  std::vector<double> h;
  for (const HistoryRow& r : s.history) {
    h.insert(h.end(), {static_cast<double>(r.step), r.reproj, r.loss3d, r.adv, r.disc, r.val_mpjpe, r.val_reconst});
  }
  c.put_f64("history", {s.history.size(), 7}, std::move(h));
  c.save(path);
}

namespace {

HmrModel model_from(const Container& c, const std::filesystem::path& path) {
  HmrModel m;
  m.config = model_config_from_json(c.meta().at("model_config"));
  if (!c.has("mean_theta") || c.shape("mean_theta") != ad::Shape{kThetaDim}) {
    fail(ErrorKind::kCorrupt, "checkpoint '" + path.string() + "' lacks an 85-value mean_theta");
  }
  const auto& mt = c.f64("mean_theta");
  for (std::size_t k = 0; k < kThetaDim; ++k) m.mean_theta.values[static_cast<Eigen::Index>(k)] = mt[k];
  ad::ParamStore expected;
  Rng rng(0);
  init_parameters(expected, m.config, rng);
  for (const auto& [name, t] : expected) {
    const std::string key = "param/" + name;
    if (!c.has(key)) fail(ErrorKind::kCorrupt, "checkpoint '" + path.string() + "' is missing parameter " + name);
    if (c.shape(key) != t.shape()) {
      fail(ErrorKind::kCorrupt, "checkpoint parameter " + name + " has shape " + ad::shape_str(c.shape(key)) +
                                    ", config implies " + ad::shape_str(t.shape()));
    }
    m.params[name] = c.tensor(key);
  }
  return m;
}

}  // namespace

HmrModel load_model_checkpoint(const std::filesystem::path& path) {
  const Container c = Container::load(path, "checkpoint", kCheckpointVersion);
  try {
    return model_from(c, path);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCorrupt, "checkpoint '" + path.string() + "': " + e.what());
  }
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  const Container c = Container::load(path, "checkpoint", kCheckpointVersion);
  TrainState s;
  try {
    s.config = train_config_from_json(c.meta().at("train_config"));
    s.model = model_from(c, path);
    s.step = c.meta().at("step").get<std::uint64_t>();
    s.epoch = c.meta().at("epoch").get<int>();
    s.rng = c.meta().at("rng").get<std::string>();
    s.best_val = c.f64("best_val").at(0);
    s.encoder_opt.load(c, "adam_encoder");
    s.disc_opt.load(c, "adam_disc");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCorrupt, "checkpoint '" + path.string() + "': " + e.what());
  }
  const auto& h = c.f64("history");
  if (c.shape("history").size() != 2 || c.shape("history")[1] != 7) fail(ErrorKind::kCorrupt, "checkpoint history must be [n, 7]");
  for (std::size_t i = 0; i + 7 <= h.size(); i += 7) {
    s.history.push_back({static_cast<std::uint64_t>(h[i]), h[i + 1], h[i + 2], h[i + 3], h[i + 4], h[i + 5], h[i + 6]});
  }
  return s;
}

// --- batches -----------------------------------------------------------------

BatchSources batch_sources(const Dataset& train) {
  BatchSources s;
  for (std::size_t i = 0; i < train.size(); ++i) (train.samples[i].has_3d ? s.with_3d : s.without_3d).push_back(i);
  return s;
}

Batch make_batch(const BatchSources& sources, const TrainConfig& config, Rng& rng) {
  Batch b;
  const std::size_t n = config.batch_size;
  if (config.mode == TrainMode::kPaired) {
    if (sources.with_3d.empty() || sources.without_3d.empty()) {
      fail(ErrorKind::kInvalidArgument, "paired batches need samples with and without 3D labels (have " +
                                            std::to_string(sources.with_3d.size()) + " and " +
                                            std::to_string(sources.without_3d.size()) + ")");
    }
    for (std::size_t i = 0; i < n / 2; ++i) {
      b.rows.push_back(sources.with_3d[rng.below(sources.with_3d.size())]);
      b.use_3d.push_back(1);
    }
    for (std::size_t i = n / 2; i < n; ++i) {
      b.rows.push_back(sources.without_3d[rng.below(sources.without_3d.size())]);
      b.use_3d.push_back(0);
    }
    return b;
  }
  const std::size_t total = sources.with_3d.size() + sources.without_3d.size();
  if (total == 0) fail(ErrorKind::kInvalidArgument, "cannot draw a batch from an empty training set");
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = rng.below(total);
    b.rows.push_back(k < sources.with_3d.size() ? sources.with_3d[k] : sources.without_3d[k - sources.with_3d.size()]);
    b.use_3d.push_back(0);
  }
  return b;
}

std::vector<std::size_t> make_pool_batch(const MocapPool& pool, std::size_t batch_size, Rng& rng) {
  if (pool.empty()) fail(ErrorKind::kInvalidArgument, "cannot draw real samples from an empty pool");
  std::vector<std::size_t> rows(batch_size);
  for (auto& r : rows) r = rng.below(pool.size());
  return rows;
}

// --- trainer -----------------------------------------------------------------

struct Trainer::Impl {
  struct EGraph {
    Graph g;
    Var loss, reproj, l3d, adv;
    std::vector<Var> thetas;
  };

  TrainConfig config;
  BodyGraphConstants body;
  std::size_t b;
  std::size_t p;
  std::unique_ptr<EGraph> e;
  Graph d;
  Var d_loss, d_per_head;

  Impl(const TrainConfig& c, const BodyTemplate& tmpl)
      : config(c), body(make_body_graph_constants(tmpl, false)), b(c.batch_size), p(c.model.num_keypoints) {
    if (tmpl.keypoints.size() != p) {
      fail(ErrorKind::kInvalidConfig, "model expects " + std::to_string(p) + " keypoints, body model has " +
                                          std::to_string(tmpl.keypoints.size()));
    }
    e = build_e(c.weights);
    if (c.uses_prior()) {
      const std::size_t t = static_cast<std::size_t>(c.model.iterations);
      const Var real = discriminate(d.input("real_shape", {b, kNumShape}), d.input("real_pose", {b, kPoseDim}), c.model);
      const Var fake =
          discriminate(d.input("fake_shape", {b * t, kNumShape}), d.input("fake_pose", {b * t, kPoseDim}), c.model);
      d_per_head = discriminator_loss(real, fake);
      d_loss = ad::sum(d_per_head);
      d.mark_output("loss", d_loss);
    }
  }

  std::unique_ptr<EGraph> build_e(const LossWeights& w) const {
    auto eg = std::make_unique<EGraph>();
    Graph& g = eg->g;
    const ModelConfig& m = config.model;
    eg->thetas = ief_regress(encode(g.input("obs", {b, m.input_dim()}), m), g.input("theta0", {b, kThetaDim}), m);
    const ComposeOutputs comp = compose_projection_graph(body, eg->thetas.back());
    eg->reproj = reprojection_loss(comp.keypoints2d, g.input("gt2d", {b, p, 2}), g.input("vis", {b, p, 1}));
    eg->l3d = joints3d_loss(comp.keypoints3d, g.input("gt3d", {b, p, 3}), g.input("mask3", {b, 1, 1}));
    if (config.smpl_param_loss) {
      const ThetaParts parts = split_theta(eg->thetas.back());
      eg->l3d = eg->l3d + smpl_param_loss(parts.shape, parts.pose, g.input("gt_shape", {b, kNumShape}),
                                          g.input("gt_pose", {b, kPoseDim}), g.input("mask_s", {b, 1}));
    }
    if (config.uses_prior()) {
      std::vector<Var> scores;
      for (const Var& t : eg->thetas) {
        const ThetaParts parts = split_theta(t);
        scores.push_back(discriminate(parts.shape, parts.pose, m));
      }
      eg->adv = encoder_adv_loss(scores);
    } else {
      eg->adv = g.constant(Tensor::scalar(0.0));
    }
    LossWeights wt = w;
    if (!config.uses_prior()) wt.adv = 0.0;
    eg->loss = total_loss(eg->reproj, eg->l3d, eg->adv, wt, config.uses_3d());
    return eg;
  }

  TensorMap e_inputs(const TrainState& s, const Dataset& data, const Batch& batch) const {
    if (batch.rows.size() != b) {
      fail(ErrorKind::kShapeMismatch, "batch has " + std::to_string(batch.rows.size()) + " rows, trainer expects " +
                                          std::to_string(b));
    }
    Tensor gt2d({b, p, 2}), vis({b, p, 1}), gt3d({b, p, 3}), mask3({b, 1, 1}), gs({b, kNumShape}), gp({b, kPoseDim}),
        ms({b, 1});
    for (std::size_t i = 0; i < b; ++i) {
      const SampleRecord& r = data.samples.at(batch.rows[i]);
      if (static_cast<std::size_t>(r.keypoints2d.cols()) != p) {
        fail(ErrorKind::kShapeMismatch, "sample " + std::to_string(r.id) + " has " +
                                            std::to_string(r.keypoints2d.cols()) + " keypoints, expected " +
                                            std::to_string(p));
      }
      for (std::size_t j = 0; j < p; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        gt2d[(i * p + j) * 2] = r.keypoints2d(0, jj);
        gt2d[(i * p + j) * 2 + 1] = r.keypoints2d(1, jj);
        vis[i * p + j] = r.visible[j] ? 1.0 : 0.0;
        for (int k = 0; k < 3; ++k) gt3d[(i * p + j) * 3 + static_cast<std::size_t>(k)] = r.joints3d(k, jj);
      }
      const bool use = batch.use_3d[i] && r.has_3d && config.uses_3d();
      mask3[i] = ms[i] = use ? 1.0 : 0.0;
      for (std::size_t k = 0; k < kNumShape; ++k) gs[i * kNumShape + k] = r.theta.shape()[static_cast<Eigen::Index>(k)];
      for (std::size_t k = 0; k < kPoseDim; ++k) gp[i * kPoseDim + k] = r.theta.pose()[static_cast<Eigen::Index>(k)];
    }
    TensorMap in{{"obs", observation_batch(data, batch.rows)},
                 {"theta0", theta_batch(s.model.mean_theta, b)},
                 {"gt2d", std::move(gt2d)},
                 {"vis", std::move(vis)},
                 {"gt3d", std::move(gt3d)},
                 {"mask3", std::move(mask3)}};
    if (config.smpl_param_loss) {
      in.emplace("gt_shape", std::move(gs));
      in.emplace("gt_pose", std::move(gp));
      in.emplace("mask_s", std::move(ms));
    }
    return in;
  }

  ad::EvalOptions train_options(const TrainState& s) const {
    ad::EvalOptions o;
    o.training = true;
    o.dropout_seed = derive_seed(derive_seed(config.seed, kDropoutStream), s.step);
    o.check_finite = false;
    return o;
  }
};

Trainer::Trainer(const TrainConfig& config, const BodyTemplate& body) : impl_(std::make_unique<Impl>(config, body)) {}
Trainer::~Trainer() = default;

StepLog Trainer::step(TrainState& s, const Dataset& data, const Batch& batch, const MocapPool& pool,
                      std::span<const std::size_t> pool_rows) {
  Impl& m = *impl_;
  if (data.observation != m.config.model.observation) {
    fail(ErrorKind::kInvalidConfig, std::string("dataset observation mode '") + observation_mode_name(data.observation) +
                                        "' differs from the model's '" + observation_mode_name(m.config.model.observation) + "'");
  }
  Impl::EGraph& e = *m.e;
  e.g.evaluate(m.e_inputs(s, data, batch), s.model.params, m.train_options(s));
  StepLog log;
  log.total = e.g.value(e.loss).item();
  log.reproj = e.g.value(e.reproj).item();
  log.loss3d = e.g.value(e.l3d).item();
  log.adv = e.g.value(e.adv).item();
  if (!std::isfinite(log.total)) {
    fail(ErrorKind::kNonFinite, "non-finite training loss at step " + std::to_string(s.step) + " (reproj " +
                                    std::to_string(log.reproj) + ", 3d " + std::to_string(log.loss3d) + ", adv " +
                                    std::to_string(log.adv) + ")");
  }
  const std::size_t t = e.thetas.size();
  Tensor fake_shape({m.b * t, kNumShape}), fake_pose({m.b * t, kPoseDim});
  if (m.config.uses_prior()) {
    for (std::size_t it = 0; it < t; ++it) {
      const Tensor& th = e.g.value(e.thetas[it]);
      for (std::size_t i = 0; i < m.b; ++i) {
        const double* row = th.ptr() + i * kThetaDim;
        std::copy(row + ThetaVector::kShapeOffset, row + ThetaVector::kShapeOffset + kNumShape,
                  fake_shape.ptr() + (it * m.b + i) * kNumShape);
        std::copy(row, row + kPoseDim, fake_pose.ptr() + (it * m.b + i) * kPoseDim);
      }
    }
  }
  const ad::Gradients eg = e.g.backpropagate(e.loss);
  s.encoder_opt.step(s.model.params, select(eg.params, {kEncoderPrefix, kRegressorPrefix}));

  if (m.config.uses_prior()) {
    if (pool_rows.size() != m.b) fail(ErrorKind::kShapeMismatch, "pool batch size differs from batch_size");
    Tensor real_shape({m.b, kNumShape}), real_pose({m.b, kPoseDim});
    for (std::size_t i = 0; i < m.b; ++i) {
      const std::size_t r = pool_rows[i];
      std::copy(pool.shapes.at(r).data(), pool.shapes[r].data() + kNumShape, real_shape.ptr() + i * kNumShape);
      std::copy(pool.poses.at(r).data(), pool.poses[r].data() + kPoseDim, real_pose.ptr() + i * kPoseDim);
    }
    ad::EvalOptions o;
    o.check_finite = false;
    m.d.evaluate({{"real_shape", real_shape}, {"real_pose", real_pose}, {"fake_shape", fake_shape}, {"fake_pose", fake_pose}},
                 s.model.params, o);
    log.disc = m.d.value(m.d_loss).item();
    if (!std::isfinite(log.disc)) {
      fail(ErrorKind::kNonFinite, "non-finite discriminator loss at step " + std::to_string(s.step));
    }
    const ad::Gradients dg = m.d.backpropagate(m.d_loss);
    s.disc_opt.step(s.model.params, select(dg.params, {kDiscPrefix}));
  }
  ++s.step;
  return log;
}

TensorMap Trainer::encoder_gradients(const TrainState& s, const Dataset& data, const Batch& batch,
                                     const LossWeights& weights) {
  Impl& m = *impl_;
  auto e = m.build_e(weights);
  ad::EvalOptions o;
  o.check_finite = false;
  e->g.evaluate(m.e_inputs(s, data, batch), s.model.params, o);
  return select(e->g.backpropagate(e->loss).params, {kEncoderPrefix, kRegressorPrefix});
}

// --- validation --------------------------------------------------------------

namespace {

std::vector<Inference> infer_all(const HmrModel& model, const BodyTemplate& body, const Dataset& data) {
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return infer(model, body, observation_batch(data, rows));
}

}  // namespace

std::vector<Matrix3X> predict_joints3d(const HmrModel& model, const BodyTemplate& body, const Dataset& data) {
  std::vector<Matrix3X> out;
  for (const auto& r : infer_all(model, body, data)) out.push_back(r.projection.keypoints3d);
  return out;
}

std::vector<ThetaVector> predict_theta(const HmrModel& model, const BodyTemplate& body, const Dataset& data) {
  std::vector<ThetaVector> out;
  for (const auto& r : infer_all(model, body, data)) out.push_back(r.theta);
  return out;
}

namespace {

Validation score(const std::vector<Matrix3X>& pred3d, const std::vector<Matrix2X>& pred2d, const Dataset& data) {
  std::vector<Matrix3X> gt;
  gt.reserve(data.size());
  for (const auto& s : data.samples) gt.push_back(s.joints3d);
  const JointErrorReport r = evaluate_joints(pred3d, gt);
  double reproj = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const SampleRecord& s = data.samples[i];
    for (Eigen::Index q = 0; q < s.keypoints2d.cols(); ++q) {
      if (s.visible[static_cast<std::size_t>(q)]) reproj += (pred2d[i].col(q) - s.keypoints2d.col(q)).cwiseAbs().sum();
    }
  }
  return {r.mean_mpjpe, r.mean_reconstruction, reproj / static_cast<double>(data.size())};
}

}  // namespace

Validation validate(const HmrModel& model, const BodyTemplate& body, const Dataset& data) {
  if (data.size() == 0) fail(ErrorKind::kInvalidArgument, "validation set is empty");
  std::vector<Matrix3X> p3;
  std::vector<Matrix2X> p2;
  for (const auto& r : infer_all(model, body, data)) {
    p3.push_back(r.projection.keypoints3d);
    p2.push_back(r.projection.keypoints2d);
  }
  return score(p3, p2, data);
}

Validation mean_theta_baseline(const ThetaVector& mean_theta, const BodyTemplate& body, const Dataset& data) {
  if (data.size() == 0) fail(ErrorKind::kInvalidArgument, "validation set is empty");
  const Projection p = compose_projection(mean_theta, body);
  return score(std::vector<Matrix3X>(data.size(), p.keypoints3d), std::vector<Matrix2X>(data.size(), p.keypoints2d),
               data);
}

// --- loop --------------------------------------------------------------------

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& rows) {
  std::FILE* fp = std::fopen(path.string().c_str(), "w");
  if (!fp) fail(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  std::fprintf(fp, "step,L_reproj,L_3D,L_adv,L_D,val_MPJPE,val_reconst\n");
  for (const HistoryRow& r : rows) {
    std::fprintf(fp, "%llu,%.17g,%.17g,%.17g,%.17g", static_cast<unsigned long long>(r.step), r.reproj, r.loss3d,
                 r.adv, r.disc);
    for (double v : {r.val_mpjpe, r.val_reconst}) {
      if (std::isnan(v))
        std::fprintf(fp, ",");
      else
        std::fprintf(fp, ",%.17g", v);
    }
    std::fprintf(fp, "\n");
  }
  if (std::fclose(fp) != 0) fail(ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

TrainResult train_loop(const TrainConfig& config, const TrainInputs& in, const std::filesystem::path& out_dir,
                       std::optional<TrainState> resume) {
  if (in.train.observation != config.model.observation || in.val.observation != config.model.observation) {
    fail(ErrorKind::kInvalidConfig, std::string("datasets use observation mode '") +
                                        observation_mode_name(in.train.observation) + "', model expects '" +
                                        observation_mode_name(config.model.observation) + "'");
  }
  if (in.train.size() == 0) fail(ErrorKind::kInvalidArgument, "training set is empty");
  TrainResult res;
  TrainState& s = res.state;
  if (resume) {
    nlohmann::json a = to_json(resume->config), b = to_json(config);
    a.erase("epochs");
    b.erase("epochs");
    if (a != b) fail(ErrorKind::kInvalidConfig, "resumed checkpoint was trained with a different configuration");
    s = std::move(*resume);
    s.config.epochs = config.epochs;
  } else {
    s = init_train_state(config, in.pool);
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create output directory '" + out_dir.string() + "': " + ec.message());
  res.best_checkpoint = out_dir / "best.ckpt";
  res.last_checkpoint = out_dir / "last.ckpt";
  res.history_csv = out_dir / "history.csv";

  {
    nlohmann::json run = to_json(config);
    run["indicator_3d"] = config.uses_3d() ? 1 : 0;
    run["adversarial_prior"] = config.uses_prior();
    run["resumed_from_step"] = s.step;
    run["train_samples"] = in.train.size();
    run["val_samples"] = in.val.size();
    std::ofstream f(out_dir / "run_config.json");
    f << run.dump(2) << "\n";
    if (!f) fail(ErrorKind::kIo, "cannot write run_config.json in '" + out_dir.string() + "'");
  }

  const std::size_t per_epoch = config.steps_per_epoch ? config.steps_per_epoch
                                                       : std::max<std::size_t>(1, in.train.size() / config.batch_size);
  const std::size_t val_every = config.validate_every ? config.validate_every : per_epoch;
  const BatchSources sources = batch_sources(in.train);
  Rng rng;
  rng.load(s.rng);
  Trainer trainer(config, in.body);

  if (!std::filesystem::exists(res.best_checkpoint) || !resume) save_checkpoint(res.best_checkpoint, s);
  while (s.epoch < config.epochs) {
    const std::uint64_t end = static_cast<std::uint64_t>(s.epoch + 1) * per_epoch;
    while (s.step < end) {
      const Batch batch = make_batch(sources, config, rng);
      std::vector<std::size_t> pool_rows;
      if (config.uses_prior()) pool_rows = make_pool_batch(in.pool, config.batch_size, rng);
      StepLog log;
      try {
        log = trainer.step(s, in.train, batch, in.pool, pool_rows);
      } catch (const Error& err) {
        if (err.kind() == ErrorKind::kNonFinite) {
          s.rng = rng.save();
          save_checkpoint(out_dir / "nonfinite_state.ckpt", s);
          write_history_csv(res.history_csv, s.history);
        }
        throw;
      }
      HistoryRow row{s.step, log.reproj, log.loss3d, log.adv, log.disc, kNaN, kNaN};
      if (s.step % val_every == 0 && in.val.size() > 0) {
        const Validation v = validate(s.model, in.body, in.val);
        row.val_mpjpe = v.mpjpe;
        row.val_reconst = v.reconstruction;
        if (v.reconstruction < s.best_val) {
          s.best_val = v.reconstruction;
          s.rng = rng.save();
          s.history.push_back(row);
          save_checkpoint(res.best_checkpoint, s);
          s.history.pop_back();
        }
      }
      s.history.push_back(row);
    }
    ++s.epoch;
    s.rng = rng.save();
    save_checkpoint(res.last_checkpoint, s);
    write_history_csv(res.history_csv, s.history);
  }
  s.rng = rng.save();
  save_checkpoint(res.last_checkpoint, s);
  write_history_csv(res.history_csv, s.history);
  return res;
}

}  // namespace hmrk
