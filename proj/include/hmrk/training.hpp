#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "hmrk/adam.hpp"
#include "hmrk/body_model.hpp"
#include "hmrk/losses.hpp"
#include "hmrk/model.hpp"
#include "hmrk/synthetic_data.hpp"

namespace hmrk {

// paired: half the batch carries 3D labels. unpaired: 2D only, with the
// adversarial prior. no_prior_no_3d: 2D only, no discriminator.
enum class TrainMode { kPaired, kUnpaired, kNoPriorNo3d };

const char* train_mode_name(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::kPaired;
  std::size_t batch_size = 64;
  double lr_encoder = 1e-5;  // encoder and regressor
  double lr_disc = 1e-4;
  double adam_beta1 = 0.9;
  double disc_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int epochs = 50;
  std::size_t steps_per_epoch = 0;  // 0: train set size / batch size
  std::size_t validate_every = 0;   // steps; 0: once per epoch
  LossWeights weights;
  bool smpl_param_loss = true;      // add the (beta, theta) term to L_3D
  std::uint64_t seed = 0;
  ModelConfig model;

  // Indicator for the 3D term.
  bool uses_3d() const { return mode == TrainMode::kPaired; }
  bool uses_prior() const { return mode != TrainMode::kNoPriorNo3d; }
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct HistoryRow {
  std::uint64_t step = 0;
  double reproj = 0.0;
  double loss3d = 0.0;
  double adv = 0.0;
  double disc = 0.0;
  double val_mpjpe = 0.0;  // NaN between validations
  double val_reconst = 0.0;
};

struct TrainState {
  TrainConfig config;
  HmrModel model;
  ad::Adam encoder_opt;
  ad::Adam disc_opt;
  std::uint64_t step = 0;
  int epoch = 0;
  std::string rng;  // Rng::save() of the batch sampler
  double best_val = 0.0;  // best val_reconst so far, +inf before the first validation
  std::vector<HistoryRow> history;
};

// Fresh parameters and optimizers; the mean estimate comes from the pool.
TrainState init_train_state(const TrainConfig& config, const MocapPool& pool);

inline constexpr int kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);
// Network bundle only.
HmrModel load_model_checkpoint(const std::filesystem::path& path);

// Rows of the training set with and without 3D labels.
struct BatchSources {
  std::vector<std::size_t> with_3d;
  std::vector<std::size_t> without_3d;
};
BatchSources batch_sources(const Dataset& train);

struct Batch {
  std::vector<std::size_t> rows;
  std::vector<std::uint8_t> use_3d;  // per row
};

// Paired mode: batch_size / 2 rows drawn from each source. Other modes draw
// every row from the union and never use 3D labels. Draws are with
// replacement and consume only `rng`.
Batch make_batch(const BatchSources& sources, const TrainConfig& config, Rng& rng);
// batch_size pool indices.
std::vector<std::size_t> make_pool_batch(const MocapPool& pool, std::size_t batch_size, Rng& rng);

struct StepLog {
  double reproj = 0.0;
  double loss3d = 0.0;
  double adv = 0.0;
  double disc = 0.0;
  double total = 0.0;
};

// Holds the static E and D graphs for one batch size.
class Trainer {
 public:
  Trainer(const TrainConfig& config, const BodyTemplate& body);
  ~Trainer();
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // E step on the batch, then (with the prior) a D step on the detached
  // estimates against the pool rows. Increments state.step.
  StepLog step(TrainState& state, const Dataset& data, const Batch& batch, const MocapPool& pool,
               std::span<const std::size_t> pool_rows);

  // Encoder/regressor gradients of the E objective, for inspection.
  ad::TensorMap encoder_gradients(const TrainState& state, const Dataset& data, const Batch& batch,
                                  const LossWeights& weights);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct Validation {
  double mpjpe = 0.0;
  double reconstruction = 0.0;
  double reprojection = 0.0;  // mean per sample of the visible-keypoint L1 distance
};

// Predicted 3D keypoints (camera frame) for every sample.
std::vector<Matrix3X> predict_joints3d(const HmrModel& model, const BodyTemplate& body, const Dataset& data);
// Final estimates Theta_T for every sample.
std::vector<ThetaVector> predict_theta(const HmrModel& model, const BodyTemplate& body, const Dataset& data);
Validation validate(const HmrModel& model, const BodyTemplate& body, const Dataset& data);
// The constant-mean predictor on the same set.
Validation mean_theta_baseline(const ThetaVector& mean_theta, const BodyTemplate& body, const Dataset& data);

struct TrainInputs {
  const BodyTemplate& body;
  const Dataset& train;
  const Dataset& val;
  const MocapPool& pool;
};

struct TrainResult {
  TrainState state;  // after the last step
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::filesystem::path history_csv;
};

// Runs until state.epoch == config.epochs, validating and writing
// history.csv, best.ckpt, last.ckpt and run_config.json to out_dir. With
// `resume`, continues from that state (its config must match apart from
// epochs).
TrainResult train_loop(const TrainConfig& config, const TrainInputs& inputs, const std::filesystem::path& out_dir,
                       std::optional<TrainState> resume = std::nullopt);

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& rows);

}  // namespace hmrk
