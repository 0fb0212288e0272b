#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"

#include "hmrk/body_model.hpp"

namespace hmrk {

// Euclidean distance per column.
std::vector<double> joint_errors(const Matrix3X& pred, const Matrix3X& gt);
double mpjpe(const Matrix3X& pred, const Matrix3X& gt);

// Subtracts the mean of the given columns from every column.
Matrix3X root_align(const Matrix3X& points, std::span<const int> root = kRootKeypoints);

struct Similarity {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Matrix3X apply(const Matrix3X& p) const;
};

struct Alignment {
  Matrix3X aligned;
  Similarity transform;
};

// Least-squares s, R (proper rotation), t minimizing sum |s R pred + t - gt|^2.
// with_scale = false fixes s = 1.
Alignment procrustes_align(const Matrix3X& pred, const Matrix3X& gt, bool with_scale = true);
double reconstruction_error(const Matrix3X& pred, const Matrix3X& gt, bool with_scale = true);

// Percentage of errors below threshold (or at most threshold when inclusive).
double pck(std::span<const double> errors, double threshold = 150.0, bool inclusive = false);
// 5, 10, ..., 150.
std::vector<double> auc_thresholds();
// Mean PCK over auc_thresholds().
double auc(std::span<const double> errors, bool inclusive = false);

struct SegScores {
  double accuracy = 0.0;  // percent
  double mean_f1 = 0.0;   // over classes present in either image
  std::array<double, kNumPartLabels> f1{};
  std::array<bool, kNumPartLabels> present{};
};
SegScores seg_scores(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

// Protocol over a set of skeletons in meters; reported in millimetres on the
// first 14 keypoints, root-relative for MPJPE and similarity-aligned for the
// reconstruction error.
struct JointErrorReport {
  std::vector<double> mpjpe;        // per sample
  std::vector<double> reconstruction;
  std::vector<double> per_joint;    // mean root-relative error per joint
  double mean_mpjpe = 0.0;
  double mean_reconstruction = 0.0;
  double pck = 0.0;                 // over root-relative joint errors
  double auc = 0.0;
};

inline constexpr double kMetersToMm = 1000.0;

JointErrorReport evaluate_joints(const std::vector<Matrix3X>& pred, const std::vector<Matrix3X>& gt);
nlohmann::json to_json(const JointErrorReport& r);
nlohmann::json to_json(const SegScores& s);
void write_report_csv(const std::filesystem::path& path, const JointErrorReport& r);

}  // namespace hmrk
