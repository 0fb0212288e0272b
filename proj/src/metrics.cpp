#include "hmrk/metrics.hpp"

#include <cmath>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <cstdio>

#include "hmrk/error.hpp"

namespace hmrk {

namespace {

void check_pair(const Matrix3X& pred, const Matrix3X& gt, const char* what) {
  if (pred.cols() != gt.cols()) {
    fail(ErrorKind::kShapeMismatch, std::string(what) + ": " + std::to_string(pred.cols()) + " vs " +
                                        std::to_string(gt.cols()) + " points");
  }
}

Matrix3X first_joints(const Matrix3X& p) {
  if (p.cols() < static_cast<Eigen::Index>(kNumRegressedKeypoints)) {
    fail(ErrorKind::kShapeMismatch, "need at least 14 keypoints, got " + std::to_string(p.cols()));
  }
  return p.leftCols(kNumRegressedKeypoints);
}

}  // namespace

std::vector<double> joint_errors(const Matrix3X& pred, const Matrix3X& gt) {
  check_pair(pred, gt, "joint_errors");
  std::vector<double> e(static_cast<std::size_t>(gt.cols()));
  for (Eigen::Index j = 0; j < gt.cols(); ++j) {
    const double dx = pred(0, j) - gt(0, j), dy = pred(1, j) - gt(1, j), dz = pred(2, j) - gt(2, j);
    e[static_cast<std::size_t>(j)] = std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return e;
}

double mpjpe(const Matrix3X& pred, const Matrix3X& gt) {
  const auto e = joint_errors(pred, gt);
  if (e.empty()) fail(ErrorKind::kInvalidArgument, "mpjpe of zero joints");
  double s = 0.0;
  for (double v : e) s += v;
  return s / static_cast<double>(e.size());
}

Matrix3X root_align(const Matrix3X& points, std::span<const int> root) {
  Eigen::Vector3d r = Eigen::Vector3d::Zero();
  for (int j : root) r += points.col(j);
  r /= static_cast<double>(root.size());
  return points.colwise() - r;
}

Matrix3X Similarity::apply(const Matrix3X& p) const {
  return ((scale * rotation) * p).colwise() + translation;
}

Alignment procrustes_align(const Matrix3X& pred, const Matrix3X& gt, bool with_scale) {
  check_pair(pred, gt, "procrustes_align");
  if (pred.cols() == 0) fail(ErrorKind::kInvalidArgument, "procrustes_align of zero points");
  const Eigen::Vector3d mx = pred.rowwise().mean(), my = gt.rowwise().mean();
  const Matrix3X x0 = pred.colwise() - mx, y0 = gt.colwise() - my;
  const double var = x0.squaredNorm();
  if (!(var > 0.0)) fail(ErrorKind::kInvalidArgument, "procrustes_align: prediction points all coincide");
  const Eigen::Matrix3d m = y0 * x0.transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d d(1.0, 1.0, (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0);
  Similarity t;
  t.rotation = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  t.scale = with_scale ? svd.singularValues().dot(d) / var : 1.0;
  t.translation = my - t.scale * t.rotation * mx;
  return {t.apply(pred), t};
}

double reconstruction_error(const Matrix3X& pred, const Matrix3X& gt, bool with_scale) {
  return mpjpe(procrustes_align(pred, gt, with_scale).aligned, gt);
}

double pck(std::span<const double> errors, double threshold, bool inclusive) {
  if (errors.empty()) fail(ErrorKind::kInvalidArgument, "pck of zero errors");
  std::size_t hit = 0;
  for (double e : errors) hit += inclusive ? e <= threshold : e < threshold;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(errors.size());
}

std::vector<double> auc_thresholds() {
  std::vector<double> t;
  for (int k = 1; k <= 30; ++k) t.push_back(5.0 * k);
  return t;
}

double auc(std::span<const double> errors, bool inclusive) {
  const auto grid = auc_thresholds();
  double s = 0.0;
  for (double t : grid) s += pck(errors, t, inclusive);
  return s / static_cast<double>(grid.size());
}

SegScores seg_scores(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) fail(ErrorKind::kShapeMismatch, "seg_scores: label images differ in size");
  if (gt.empty()) fail(ErrorKind::kInvalidArgument, "seg_scores of empty images");
  std::array<std::size_t, kNumPartLabels> tp{}, fp{}, fn{};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int p = pred[i], g = gt[i];
    if (p >= kNumPartLabels || g >= kNumPartLabels) {
      fail(ErrorKind::kInvalidArgument, "seg_scores: label " + std::to_string(std::max(p, g)) + " at pixel " +
                                            std::to_string(i) + " outside [0, 6]");
    }
    if (p == g) {
      ++correct;
      ++tp[static_cast<std::size_t>(p)];
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(g)];
    }
  }
  SegScores s;
  s.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(gt.size());
  std::size_t classes = 0;
  for (std::size_t c = 0; c < kNumPartLabels; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    s.present[c] = denom > 0;
    if (!s.present[c]) continue;
    s.f1[c] = 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    s.mean_f1 += s.f1[c];
    ++classes;
  }
  s.mean_f1 /= static_cast<double>(classes);
  return s;
}

JointErrorReport evaluate_joints(const std::vector<Matrix3X>& pred, const std::vector<Matrix3X>& gt) {
  if (pred.size() != gt.size()) fail(ErrorKind::kShapeMismatch, "evaluate_joints: sample counts differ");
  if (pred.empty()) fail(ErrorKind::kInvalidArgument, "evaluate_joints of zero samples");
  JointErrorReport r;
  r.per_joint.assign(kNumRegressedKeypoints, 0.0);
  std::vector<double> all;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Matrix3X p = first_joints(pred[i]) * kMetersToMm, g = first_joints(gt[i]) * kMetersToMm;
    const auto e = joint_errors(root_align(p), root_align(g));
    double m = 0.0;
    for (std::size_t j = 0; j < e.size(); ++j) {
      m += e[j];
      r.per_joint[j] += e[j];
    }
    all.insert(all.end(), e.begin(), e.end());
    r.mpjpe.push_back(m / static_cast<double>(e.size()));
    r.reconstruction.push_back(reconstruction_error(p, g));
  }
  for (double& v : r.per_joint) v /= static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    r.mean_mpjpe += r.mpjpe[i];
    r.mean_reconstruction += r.reconstruction[i];
  }
  r.mean_mpjpe /= static_cast<double>(pred.size());
  r.mean_reconstruction /= static_cast<double>(pred.size());
  r.pck = pck(all);
  r.auc = auc(all);
  return r;
}

nlohmann::json to_json(const JointErrorReport& r) {
  return {{"samples", r.mpjpe.size()},   {"mpjpe_mm", r.mean_mpjpe}, {"reconstruction_mm", r.mean_reconstruction},
          {"pck150", r.pck},             {"auc", r.auc},             {"per_joint_mpjpe_mm", r.per_joint}};
}

nlohmann::json to_json(const SegScores& s) {
  nlohmann::json f1 = nlohmann::json::array();
  for (std::size_t c = 0; c < kNumPartLabels; ++c) f1.push_back(s.present[c] ? nlohmann::json(s.f1[c]) : nlohmann::json());
  return {{"accuracy", s.accuracy}, {"mean_f1", s.mean_f1}, {"f1", f1}};
}

void write_report_csv(const std::filesystem::path& path, const JointErrorReport& r) {
  std::FILE* fp = std::fopen(path.string().c_str(), "w");
  if (!fp) fail(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  std::fprintf(fp, "sample,mpjpe_mm,reconstruction_mm\n");
  for (std::size_t i = 0; i < r.mpjpe.size(); ++i) std::fprintf(fp, "%zu,%.17g,%.17g\n", i, r.mpjpe[i], r.reconstruction[i]);
  if (std::fclose(fp) != 0) fail(ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

}  // namespace hmrk
