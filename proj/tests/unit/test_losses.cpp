#include <gtest/gtest.h>

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <functional>
#include <numbers>

#include "hmrk/grad_check.hpp"
#include "hmrk/losses.hpp"
#include "hmrk/random.hpp"

namespace hmrk {
namespace {

using ad::Graph;
using ad::Tensor;
using ad::TensorMap;
using ad::Var;

Tensor filled(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Builds a graph with one input per tensor, applies f and evaluates the scalar.
double eval(const TensorMap& inputs, const std::function<Var(Graph&, std::map<std::string, Var>&)>& f) {
  Graph g;
  std::map<std::string, Var> vars;
  for (const auto& [name, t] : inputs) vars[name] = g.input(name, t.shape());
  g.mark_output("loss", f(g, vars));
  return g.evaluate(inputs, {}).at("loss").item();
}

double reproj(const Tensor& pred, const Tensor& gt, const Tensor& vis) {
  return eval({{"p", pred}, {"g", gt}, {"v", vis}},
              [](Graph&, auto& v) { return reprojection_loss(v["p"], v["g"], v["v"]); });
}

double joints3d(const Tensor& pred, const Tensor& gt, const Tensor& mask, Joints3dOptions opt = {}) {
  return eval({{"p", pred}, {"g", gt}, {"m", mask}},
              [&](Graph&, auto& v) { return joints3d_loss(v["p"], v["g"], v["m"], opt); });
}

// --- reprojection ---------------------------------------------------------------

TEST(Reprojection, ExactMatchIsZero) {
  Rng rng(1);
  const Tensor gt = filled({1, 19, 2}, rng);
  EXPECT_EQ(reproj(gt, gt, Tensor({1, 19, 1}, 1.0)), 0.0);
}

TEST(Reprojection, OffsetIsL1) {
  Rng rng(2);
  const Tensor gt = filled({1, 19, 2}, rng);
  Tensor pred = gt;
  pred[2 * 4] += 3.0;
  pred[2 * 4 + 1] += 4.0;
  EXPECT_NEAR(reproj(pred, gt, Tensor({1, 19, 1}, 1.0)), 7.0, 1e-12);
}

TEST(Reprojection, InvisibleOffsetIsZero) {
  Rng rng(3);
  const Tensor gt = filled({1, 19, 2}, rng);
  Tensor pred = gt;
  pred[8] += 3.0;
  pred[9] += 4.0;
  Tensor vis({1, 19, 1}, 1.0);
  vis[4] = 0.0;
  EXPECT_EQ(reproj(pred, gt, vis), 0.0);
}

TEST(Reprojection, MeanOverBatchSumOverJoints) {
  Tensor gt({2, 3, 2});
  Tensor pred = gt;
  pred[0] = 1.0;  // sample 0
  pred[6] = 3.0;  // sample 1
  EXPECT_DOUBLE_EQ(reproj(pred, gt, Tensor({2, 3, 1}, 1.0)), 2.0);
}

TEST(Reprojection, InvisibleEntriesFuzz) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor gt = filled({3, 19, 2}, rng);
    const Tensor pred = filled({3, 19, 2}, rng);
    Tensor vis({3, 19, 1});
    for (double& v : vis.data()) v = rng.uniform() < 0.3 ? 0.0 : 1.0;
    const double base = reproj(pred, gt, vis);
    Tensor pred2 = pred, gt2 = gt;
    for (std::size_t i = 0; i < vis.size(); ++i) {
      if (vis[i] != 0.0) continue;
      for (int c = 0; c < 2; ++c) {
        pred2[2 * i + c] = rng.uniform(-100, 100);
        gt2[2 * i + c] = rng.uniform(-100, 100);
      }
    }
    EXPECT_EQ(reproj(pred2, gt2, vis), base);
  }
}

// --- 3D joints ------------------------------------------------------------------

TEST(Joints3d, ExactMatchIsZero) {
  Rng rng(5);
  const Tensor gt = filled({1, 14, 3}, rng);
  EXPECT_EQ(joints3d(gt, gt, Tensor({1, 1, 1}, 1.0)), 0.0);
}

TEST(Joints3d, ConstantOffsetRemovedByRoot) {
  Rng rng(6);
  const Tensor gt = filled({2, 14, 3}, rng);
  Tensor pred = gt;
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += (i % 3 == 0 ? 0.7 : i % 3 == 1 ? -1.3 : 2.1);
  EXPECT_NEAR(joints3d(pred, gt, Tensor({2, 1, 1}, 1.0)), 0.0, 1e-24);
}

TEST(Joints3d, SingleJointOffByUnitX) {
  Rng rng(7);
  const Tensor gt = filled({1, 14, 3}, rng);
  Tensor pred = gt;
  pred[3 * 9] += 1.0;  // joint 9 is not part of the root
  EXPECT_NEAR(joints3d(pred, gt, Tensor({1, 1, 1}, 1.0)), 1.0, 1e-12);
}

TEST(Joints3d, TranslationInvariance) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor gt = filled({2, 14, 3}, rng);
    const Tensor pred = filled({2, 14, 3}, rng);
    const double base = joints3d(pred, gt, Tensor({2, 1, 1}, 1.0));
    const Eigen::Vector3d d(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    Tensor moved = gt;
    for (std::size_t i = 0; i < moved.size(); ++i) moved[i] += d[static_cast<Eigen::Index>(i % 3)];
    EXPECT_NEAR(joints3d(pred, moved, Tensor({2, 1, 1}, 1.0)), base, 1e-11 * std::max(1.0, base));
    EXPECT_NEAR(joints3d(moved, pred, Tensor({2, 1, 1}, 1.0)), base, 1e-11 * std::max(1.0, base));
  }
}

TEST(Joints3d, AbsoluteModeKeepsOffset) {
  Rng rng(9);
  const Tensor gt = filled({1, 14, 3}, rng);
  Tensor pred = gt;
  for (std::size_t i = 0; i < pred.size(); i += 3) pred[i] += 1.0;
  EXPECT_NEAR(joints3d(pred, gt, Tensor({1, 1, 1}, 1.0), {.root_relative = false}), 14.0, 1e-12);
}

TEST(Joints3d, MaskSelectsSamples) {
  Rng rng(10);
  const Tensor gt = filled({2, 14, 3}, rng);
  Tensor pred = gt;
  pred[3 * 9] += 1.0;              // sample 0
  pred[14 * 3 + 3 * 9] += 2.0;     // sample 1, masked out
  Tensor mask({2, 1, 1});
  mask[0] = 1.0;
  EXPECT_NEAR(joints3d(pred, gt, mask), 0.5, 1e-12);
}

// --- SMPL parameters ---------------------------------------------------------

double smpl(const Tensor& ps, const Tensor& pp, const Tensor& gs, const Tensor& gp, bool aa = false) {
  return eval({{"ps", ps}, {"pp", pp}, {"gs", gs}, {"gp", gp}, {"m", Tensor({ps.dim(0), 1}, 1.0)}},
              [aa](Graph&, auto& v) { return smpl_param_loss(v["ps"], v["pp"], v["gs"], v["gp"], v["m"], aa); });
}

TEST(SmplParams, IdenticalIsZero) {
  Rng rng(11);
  const Tensor s = filled({1, 10}, rng), p = filled({1, 69}, rng);
  EXPECT_EQ(smpl(s, p, s, p), 0.0);
}

TEST(SmplParams, ShapeUnitOffset) {
  Rng rng(12);
  const Tensor s = filled({1, 10}, rng), p = filled({1, 69}, rng);
  Tensor s2 = s;
  s2[0] += 1.0;
  EXPECT_NEAR(smpl(s2, p, s, p), 1.0, 1e-12);
}

TEST(SmplParams, FullTurnIsZero) {
  Rng rng(13);
  const Tensor s = filled({1, 10}, rng);
  Tensor p = filled({1, 69}, rng, -0.5, 0.5);
  Tensor p2 = p;
  const Eigen::Vector3d w(p[15], p[16], p[17]);
  const Eigen::Vector3d w2 = w + 2.0 * std::numbers::pi * w.normalized();
  for (int i = 0; i < 3; ++i) p2[15 + static_cast<std::size_t>(i)] = w2[i];
  EXPECT_LT(smpl(s, p2, s, p), 1e-24);
  EXPECT_GT(smpl(s, p2, s, p, true), 1.0);  // literal axis-angle mode sees the wrap
}

// --- adversarial -----------------------------------------------------------------

double enc_adv(const std::vector<Tensor>& scores) {
  Graph g;
  std::vector<Var> vars;
  TensorMap inputs;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    const std::string name = "s" + std::to_string(t);
    vars.push_back(g.input(name, scores[t].shape()));
    inputs[name] = scores[t];
  }
  g.mark_output("loss", encoder_adv_loss(vars));
  return g.evaluate(inputs, {}).at("loss").item();
}

TEST(EncoderAdv, FooledIsZero) {
  EXPECT_EQ(enc_adv({Tensor({4, 25}, 1.0), Tensor({4, 25}, 1.0), Tensor({4, 25}, 1.0)}), 0.0);
}

TEST(EncoderAdv, AllZeroScores) {
  EXPECT_DOUBLE_EQ(enc_adv({Tensor({4, 25}), Tensor({4, 25}), Tensor({4, 25})}), 75.0);
}

TEST(EncoderAdv, MonotoneBelowOne) {
  double prev = std::numeric_limits<double>::infinity();
  for (double d = -3.0; d <= 1.0; d += 0.125) {
    Tensor s({2, 25}, 0.3);
    s[7] = d;
    s[25 + 7] = d;
    const double l = enc_adv({s});
    EXPECT_LT(l, prev);
    prev = l;
  }
}

std::vector<double> disc_loss(const Tensor& real, const Tensor& fake) {
  Graph g;
  g.mark_output("loss", discriminator_loss(g.input("r", real.shape()), g.input("f", fake.shape())));
  const Tensor out = g.evaluate({{"r", real}, {"f", fake}}, {}).at("loss");
  return {out.data().begin(), out.data().end()};
}

TEST(DiscLoss, PerfectDiscriminator) {
  for (double v : disc_loss(Tensor({3, 25}, 1.0), Tensor({5, 25}, 0.0))) EXPECT_EQ(v, 0.0);
}

TEST(DiscLoss, MaximallyWrong) {
  for (double v : disc_loss(Tensor({3, 25}, 0.0), Tensor({5, 25}, 1.0))) EXPECT_EQ(v, 2.0);
}

TEST(DiscLoss, ConstantHalf) {
  const auto l = disc_loss(Tensor({3, 25}, 0.5), Tensor({5, 25}, 0.5));
  ASSERT_EQ(l.size(), 25u);
  for (double v : l) EXPECT_EQ(v, 0.5);
}

// --- total -------------------------------------------------------------------------

double total(double r, double l3, double adv, LossWeights w, bool has3d) {
  return eval({{"r", Tensor::scalar(r)}, {"l", Tensor::scalar(l3)}, {"a", Tensor::scalar(adv)}},
              [&](Graph&, auto& v) { return total_loss(v["r"], v["l"], v["a"], w, has3d); });
}

TEST(TotalLoss, IndicatorGates3d) {
  EXPECT_EQ(total(1.0, 1e9, 2.0, {}, false), total(1.0, 0.0, 2.0, {}, false));
  EXPECT_DOUBLE_EQ(total(1.0, 0.5, 2.0, {}, false), 62.0);
  EXPECT_DOUBLE_EQ(total(1.0, 0.5, 2.0, {}, true), 92.0);
}

TEST(TotalLoss, OnlyAdversarial) {
  EXPECT_EQ(total(3.0, 4.0, 5.0, {0.0, 0.0, 1.0}, true), 5.0);
}

TEST(TotalLoss, LinearInWeights) {
  const LossWeights w{1.5, 0.0, 0.0}, w2{3.0, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(total(2.0, 0.0, 0.0, w2, true), 2.0 * total(2.0, 0.0, 0.0, w, true));
}

// --- gradients -------------------------------------------------------------------

TEST(LossGradients, AllLossesMatchFiniteDifferences) {
  Rng rng(20);
  const std::size_t b = 3;
  Graph g;
  const Var p2 = g.input("p2", {b, 19, 2}, true), g2 = g.input("g2", {b, 19, 2});
  const Var vis = g.input("vis", {b, 19, 1});
  const Var p3 = g.input("p3", {b, 14, 3}, true), g3 = g.input("g3", {b, 14, 3});
  const Var m3 = g.input("m3", {b, 1, 1});
  const Var ps = g.input("ps", {b, 10}, true), pp = g.input("pp", {b, 69}, true);
  const Var gs = g.input("gs", {b, 10}), gp = g.input("gp", {b, 69});
  const Var mp = g.input("mp", {b, 1});
  const Var d1 = g.input("d1", {b, 25}, true), d2 = g.input("d2", {b, 25}, true);
  const Var fake = g.input("fake", {b, 25}, true);
  const Var r = reprojection_loss(p2, g2, vis);
  const Var l3 = joints3d_loss(p3, g3, m3);
  const Var lp = smpl_param_loss(ps, pp, gs, gp, mp);
  const Var la = encoder_adv_loss({d1, d2});
  const Var ld = ad::sum(discriminator_loss(d1, fake));
  g.mark_output("reproj", r);
  g.mark_output("joints3d", l3);
  g.mark_output("smpl", lp);
  g.mark_output("adv", la);
  g.mark_output("disc", ld);
  g.mark_output("total", total_loss(r, l3 + lp, la, {}, true));

  TensorMap in;
  // Keep L1 arguments away from the kink.
  in["g2"] = filled({b, 19, 2}, rng);
  in["p2"] = in["g2"];
  for (double& v : in["p2"].data()) v += (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.05, 0.5);
  in["vis"] = Tensor({b, 19, 1});
  for (double& v : in["vis"].data()) v = rng.uniform() < 0.2 ? 0.0 : 1.0;
  in["p3"] = filled({b, 14, 3}, rng);
  in["g3"] = filled({b, 14, 3}, rng);
  in["m3"] = Tensor({b, 1, 1}, 1.0);
  in["m3"][1] = 0.0;
  in["ps"] = filled({b, 10}, rng);
  in["gs"] = filled({b, 10}, rng);
  in["pp"] = filled({b, 69}, rng, -1.5, 1.5);
  in["gp"] = filled({b, 69}, rng, -1.5, 1.5);
  in["mp"] = Tensor({b, 1}, 1.0);
  in["d1"] = filled({b, 25}, rng);
  in["d2"] = filled({b, 25}, rng);
  in["fake"] = filled({b, 25}, rng);
  for (const char* out : {"reproj", "joints3d", "smpl", "adv", "disc", "total"}) {
    const auto res = ad::grad_check(g, out, in, {});
    EXPECT_LT(res.max_rel_error, 1e-4) << out << " worst " << res.worst;
    EXPECT_GT(res.checked, 0u);
  }
}

}  // namespace
}  // namespace hmrk
