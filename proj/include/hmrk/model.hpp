#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "hmrk/camera.hpp"
#include "hmrk/graph.hpp"
#include "hmrk/random.hpp"
#include "hmrk/theta.hpp"

namespace hmrk {

enum class ObservationMode { kKeypoints, kPartImage };

const char* observation_mode_name(ObservationMode mode);
ObservationMode parse_observation_mode(const std::string& name);

// Feature length the encoder reads: 3 values (x*v, y*v, v) per keypoint, or
// per-part occupancy of the label image pooled over 4x4 blocks.
std::size_t observation_dim(ObservationMode mode, std::size_t num_keypoints, std::size_t image_size);

struct ModelConfig {
  ObservationMode observation = ObservationMode::kKeypoints;
  std::size_t num_keypoints = 19;
  std::size_t image_size = 64;
  std::size_t encoder_hidden = 512;
  std::size_t feature_dim = 256;      // F
  std::size_t regressor_width = 1024;
  double dropout = 0.5;
  int iterations = 3;                 // T
  std::size_t disc_width = 1024;      // overall pose head
  bool disc_sigmoid = false;
  double init_gain = 1.0;
  double output_gain = 0.01;          // regressor.fc3 only

  std::size_t input_dim() const { return observation_dim(observation, num_keypoints, image_size); }
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Parameter name prefixes.
inline constexpr const char* kEncoderPrefix = "encoder.";
inline constexpr const char* kRegressorPrefix = "regressor.";
inline constexpr const char* kDiscPrefix = "disc.";
inline constexpr std::size_t kNumDiscriminators = kNumPoseJoints + 2;
inline constexpr std::size_t kRotEmbedDim = 32;

// Fresh He-uniform parameters for encoder, regressor and discriminator bank.
void init_parameters(ad::ParamStore& params, const ModelConfig& config, Rng& rng);

// observation [B, D] -> phi [B, F].
ad::Var encode(ad::Var observation, const ModelConfig& config);

// One regressor application: [B, F + 85] -> delta [B, 85].
ad::Var regressor_step(ad::Var input, const ModelConfig& config);

// Theta_1 .. Theta_T, each [B, 85], with Theta_{t+1} = Theta_t + R([phi, Theta_t]).
std::vector<ad::Var> ief_regress(ad::Var phi, ad::Var theta0, const ModelConfig& config);

// [B, 69] axis-angle -> [B, 23, 9] row-major rotation matrices.
ad::Var pose_to_rotmats(ad::Var pose);

// Scores [B, 25]: shape, 23 joints, overall pose.
ad::Var discriminate(ad::Var shape, ad::Var pose, const ModelConfig& config);

// Trained network bundle stored in checkpoints.
struct HmrModel {
  ModelConfig config;
  ad::ParamStore params;
  ThetaVector mean_theta;
};

// [B, 85] copies of theta.
ad::Tensor theta_batch(const ThetaVector& theta, std::size_t batch);
ThetaVector theta_row(const ad::Tensor& thetas, std::size_t row);

struct Inference {
  ThetaVector theta;  // Theta_T
  Projection projection;
};

// encode -> ief_regress -> compose_projection on Theta_T, dropout off.
// observations [B, D]. A non-finite estimate raises kNonFinite naming the
// iteration.
std::vector<Inference> infer(const HmrModel& model, const BodyTemplate& body, const ad::Tensor& observations);

// Discriminator scores [N, 25] for N (beta, theta) pairs, dropout off.
ad::Tensor discriminator_scores(const HmrModel& model, const std::vector<ShapeCoeffs>& shapes,
                                const std::vector<PoseVector>& poses);

// Mean estimate: pool-mean pose, zero shape, a half turn about x so the
// y-up body appears upright in the y-down image, s = 0.9, t = 0.
ThetaVector default_mean_theta(const std::vector<double>& pool_mean_pose);

}  // namespace hmrk
