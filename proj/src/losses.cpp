#include "hmrk/losses.hpp"

#include "hmrk/body_graph.hpp"
#include "hmrk/error.hpp"

namespace hmrk {

using ad::Graph;
using ad::Var;

namespace {

double batch_norm(Var v) { return 1.0 / static_cast<double>(v.dim(0)); }

void same_shape(Var a, Var b, const char* what) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::kShapeMismatch, std::string(what) + ": " + ad::shape_str(a.shape()) + " vs " +
                                        ad::shape_str(b.shape()));
  }
}

Var root_of(Var points, const std::vector<std::size_t>& root) {
  std::vector<Var> parts;
  for (std::size_t r : root) parts.push_back(ad::slice(points, 1, r, 1));
  Var sum = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) sum = sum + parts[i];
  return ad::scale(sum, 1.0 / static_cast<double>(parts.size()));
}

}  // namespace

Var reprojection_loss(Var pred2d, Var gt2d, Var visibility) {
  same_shape(pred2d, gt2d, "reprojection_loss");
  return ad::scale(ad::sum(visibility * ad::abs(pred2d - gt2d)), batch_norm(pred2d));
}

Var joints3d_loss(Var pred3d, Var gt3d, Var mask, const Joints3dOptions& options) {
  same_shape(pred3d, gt3d, "joints3d_loss");
  Var diff = pred3d - gt3d;
  if (options.root_relative) diff = diff - root_of(diff, options.root);
  return ad::scale(ad::sum(mask * ad::square(diff)), batch_norm(pred3d));
}

Var smpl_param_loss(Var pred_shape, Var pred_pose, Var gt_shape, Var gt_pose, Var mask, bool axis_angle) {
  same_shape(pred_shape, gt_shape, "smpl_param_loss shape");
  same_shape(pred_pose, gt_pose, "smpl_param_loss pose");
  const std::size_t b = pred_pose.dim(0);
  const std::size_t k = pred_pose.dim(1) / 3;
  Var pose_term;
  if (axis_angle) {
    pose_term = ad::sum_axis(ad::square(pred_pose - gt_pose), 1);
  } else {
    const Var rp = ad::reshape(batch_rodrigues(ad::reshape(pred_pose, {b * k, 3})), {b, k * 9});
    const Var rg = ad::reshape(batch_rodrigues(ad::reshape(gt_pose, {b * k, 3})), {b, k * 9});
    pose_term = ad::sum_axis(ad::square(rp - rg), 1);
  }
  const Var shape_term = ad::sum_axis(ad::square(pred_shape - gt_shape), 1);
  return ad::scale(ad::sum(mask * (shape_term + pose_term)), batch_norm(pred_pose));
}

Var encoder_adv_loss(const std::vector<Var>& scores) {
  if (scores.empty()) fail(ErrorKind::kInvalidArgument, "encoder_adv_loss needs at least one iteration");
  Var total;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    Graph& g = *scores[t].graph;
    const Var term = ad::scale(ad::sum(ad::square(scores[t] - g.constant(ad::Tensor::scalar(1.0)))),
                               batch_norm(scores[t]));
    total = t == 0 ? term : total + term;
  }
  return total;
}

Var discriminator_loss(Var real_scores, Var fake_scores) {
  Graph& g = *real_scores.graph;
  const Var real = ad::scale(ad::sum_axis(ad::square(real_scores - g.constant(ad::Tensor::scalar(1.0))), 0, false),
                             batch_norm(real_scores));
  const Var fake = ad::scale(ad::sum_axis(ad::square(fake_scores), 0, false), batch_norm(fake_scores));
  return real + fake;
}

Var total_loss(Var reproj, Var loss3d, Var adv, const LossWeights& weights, bool has_3d) {
  Var total = ad::scale(reproj, weights.reproj) + ad::scale(adv, weights.adv);
  if (has_3d) total = total + ad::scale(loss3d, weights.joints3d);
  return total;
}

}  // namespace hmrk
