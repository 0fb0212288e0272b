#pragma once

#include <array>
#include <vector>

#include "hmrk/graph.hpp"

namespace hmrk {

struct LossWeights {
  double reproj = 60.0;
  double joints3d = 60.0;
  double adv = 1.0;
};

struct Joints3dOptions {
  bool root_relative = true;
  std::vector<std::size_t> root = {2, 3};  // averaged to form the root
};

// All losses take batched tensors and divide sums by the batch size.

// pred, gt [B, P, 2]; visibility [B, P, 1] in {0, 1}.
ad::Var reprojection_loss(ad::Var pred2d, ad::Var gt2d, ad::Var visibility);

// pred, gt [B, P, 3]; mask [B, 1, 1] selects samples with 3D labels.
ad::Var joints3d_loss(ad::Var pred3d, ad::Var gt3d, ad::Var mask, const Joints3dOptions& options = {});

// Shape [B, 10] and pose [B, 69] against ground truth; mask [B, 1]. Pose
// terms compare rotation matrices unless axis_angle is set.
ad::Var smpl_param_loss(ad::Var pred_shape, ad::Var pred_pose, ad::Var gt_shape, ad::Var gt_pose, ad::Var mask,
                        bool axis_angle = false);

// One [B, 25] score tensor per regression iteration:
// sum_t sum_i mean_b (D_i - 1)^2.
ad::Var encoder_adv_loss(const std::vector<ad::Var>& scores);

// Per-discriminator least-squares loss [25]: mean_real (D - 1)^2 + mean_fake D^2.
ad::Var discriminator_loss(ad::Var real_scores, ad::Var fake_scores);

// lambda_reproj * L_reproj + [has_3d] lambda_3d * L_3d + lambda_adv * L_adv.
ad::Var total_loss(ad::Var reproj, ad::Var loss3d, ad::Var adv, const LossWeights& weights, bool has_3d);

}  // namespace hmrk
