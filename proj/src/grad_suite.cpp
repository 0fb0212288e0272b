#include "hmrk/grad_suite.hpp"

#include <cmath>
#include <functional>

#include "hmrk/body_graph.hpp"
#include "hmrk/camera.hpp"
#include "hmrk/grad_check.hpp"
#include "hmrk/losses.hpp"
#include "hmrk/model.hpp"

namespace hmrk {

using ad::Graph;
using ad::Shape;
using ad::Tensor;
using ad::TensorMap;
using ad::Var;

namespace {

Tensor uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

GradSuiteEntry entry(const std::string& sub, const std::string& name, const ad::GradCheckResult& r) {
  return {sub, name, r.max_rel_error, r.worst, r.checked};
}

// Contracts `y` with fixed random weights into the scalar "loss".
void weighted_sum(Graph& g, Var y, Rng& rng) { g.mark_output("loss", ad::sum(y * g.constant(uniform(y.shape(), rng)))); }

void primitives(std::vector<GradSuiteEntry>& out, Rng& rng) {
  using Build = std::function<Var(Var, Var)>;
  struct Case {
    const char* name;
    Shape a, b;
    Build build;
    double lo = -1.0, hi = 1.0;
  };
  const std::vector<Case> cases = {
      {"matmul", {2, 3, 4}, {2, 4, 2}, [](Var a, Var b) { return ad::matmul(a, b); }},
      {"matmul_shared_right", {2, 3, 4}, {4, 5}, [](Var a, Var b) { return ad::matmul(a, b); }},
      {"matmul_shared_left", {3, 4}, {2, 4, 5}, [](Var a, Var b) { return ad::matmul(a, b); }},
      {"transpose", {2, 3, 4}, {1}, [](Var a, Var b) { return ad::transpose(a) * b; }},
      {"add", {3, 4}, {4}, [](Var a, Var b) { return a + b; }},
      {"sub", {3, 1, 4}, {2, 1}, [](Var a, Var b) { return a - b; }},
      {"mul", {2, 3, 3, 3}, {2, 3, 1, 1}, [](Var a, Var b) { return a * b; }},
      {"neg", {5}, {5}, [](Var a, Var b) { return -a * b; }},
      {"scale", {5}, {1}, [](Var a, Var b) { return ad::scale(a, -2.5) * b; }},
      {"relu", {6}, {1}, [](Var a, Var b) { return ad::relu(a) * b; }},
      {"sigmoid", {6}, {1}, [](Var a, Var b) { return ad::sigmoid(a) * b; }},
      {"abs", {6}, {1}, [](Var a, Var b) { return ad::abs(a) * b; }},
      {"square", {6}, {1}, [](Var a, Var b) { return ad::square(a) * b; }},
      {"sqrt", {6}, {1}, [](Var a, Var b) { return ad::sqrt(a) * b; }, 0.2, 2.0},
      {"rodrigues_a", {6}, {1}, [](Var a, Var b) { return ad::rodrigues_a(a) * b; }, 0.0, 9.0},
      {"rodrigues_b", {6}, {1}, [](Var a, Var b) { return ad::rodrigues_b(a) * b; }, 0.0, 9.0},
      {"rodrigues_small_angle", {6}, {1}, [](Var a, Var b) { return (ad::rodrigues_a(a) + ad::rodrigues_b(a)) * b; },
       0.0, 0.02},
      {"concat", {2, 3}, {2, 2}, [](Var a, Var b) { return ad::concat({a, b, a}, 1); }},
      {"reshape", {2, 6}, {3, 4}, [](Var a, Var b) { return ad::reshape(a, {3, 4}) * b; }},
      {"slice", {3, 5, 2}, {1}, [](Var a, Var b) { return ad::slice(a, 1, 1, 3) * b; }},
      {"sum", {3, 4}, {1}, [](Var a, Var b) { return ad::sum(a) * ad::sum(b); }},
      {"sum_axis", {3, 4, 2}, {1}, [](Var a, Var b) { return ad::sum_axis(a, 1) * b; }},
      {"mean", {3, 4}, {1}, [](Var a, Var b) { return ad::mean(a) * ad::sum(b); }},
      {"dropout", {3, 4}, {1}, [](Var a, Var b) { return ad::dropout(a, 0.5) * b; }},
  };
  for (const auto& c : cases) {
    Graph g;
    const Var a = g.input("a", c.a, true), b = g.input("b", c.b, true);
    weighted_sum(g, c.build(a, b), rng);
    TensorMap in{{"a", uniform(c.a, rng, c.lo, c.hi)}, {"b", uniform(c.b, rng)}};
    // Away from the kinks of relu and abs.
    for (double& v : in.at("a").data())
      if (c.lo < 0 && std::fabs(v) < 0.05) v += 0.1;
    ad::GradCheckOptions o;
    o.step = 1e-6;
    if (std::string(c.name) == "dropout") {
      o.eval.training = true;
      o.eval.dropout_seed = 7;
    }
    out.push_back(entry("primitives", c.name, ad::grad_check(g, "loss", in, {}, o)));
  }
}

void body_model(std::vector<GradSuiteEntry>& out, const BodyTemplate& body, Rng& rng) {
  const BodyGraphConstants c = make_body_graph_constants(body, true);
  for (const char* which : {"vertices", "keypoints"}) {
    Graph g;
    const auto o = body_graph(c, g.input("pose", {2, kPoseDim}, true), g.input("shape", {2, kNumShape}, true),
                              g.input("rot", {2, 3}, true));
    weighted_sum(g, std::string(which) == "vertices" ? o.vertices : o.keypoints, rng);
    const TensorMap in{{"pose", uniform({2, kPoseDim}, rng, -1.5, 1.5)},
                       {"shape", uniform({2, kNumShape}, rng, -1.5, 1.5)},
                       {"rot", uniform({2, 3}, rng, -1.5, 1.5)}};
    out.push_back(entry("body_model", which, ad::grad_check(g, "loss", in, {})));
  }
}

void projection(std::vector<GradSuiteEntry>& out, const BodyTemplate& body, Rng& rng) {
  {
    Graph g;
    weighted_sum(g, project_graph(g.input("points", {2, 7, 3}, true), g.input("s", {2, 1}, true),
                                  g.input("rot", {2, 3}, true), g.input("t", {2, 2}, true)),
                 rng);
    const TensorMap in{{"points", uniform({2, 7, 3}, rng, -1.5, 1.5)},
                       {"s", uniform({2, 1}, rng, 0.5, 1.5)},
                       {"rot", uniform({2, 3}, rng, -1.5, 1.5)},
                       {"t", uniform({2, 2}, rng)}};
    out.push_back(entry("projection", "weak_perspective", ad::grad_check(g, "loss", in, {})));
  }
  {
    Graph g;
    const BodyGraphConstants c = make_body_graph_constants(body, false);
    weighted_sum(g, compose_projection_graph(c, g.input("theta", {2, kThetaDim}, true)).keypoints2d, rng);
    Tensor theta = uniform({2, kThetaDim}, rng, -1.0, 1.0);
    theta[ThetaVector::kScaleOffset] = 0.9;
    theta[kThetaDim + ThetaVector::kScaleOffset] = 1.1;
    out.push_back(entry("projection", "theta_to_keypoints2d", ad::grad_check(g, "loss", {{"theta", theta}}, {})));
  }
}

void losses(std::vector<GradSuiteEntry>& out, Rng& rng) {
  const std::size_t b = 3, p = 19;
  Graph g;
  const Var p2 = g.input("p2", {b, p, 2}, true), g2 = g.input("g2", {b, p, 2}), vis = g.input("vis", {b, p, 1});
  const Var p3 = g.input("p3", {b, p, 3}, true), g3 = g.input("g3", {b, p, 3}), m3 = g.input("m3", {b, 1, 1});
  const Var ps = g.input("ps", {b, kNumShape}, true), pp = g.input("pp", {b, kPoseDim}, true);
  const Var gs = g.input("gs", {b, kNumShape}), gp = g.input("gp", {b, kPoseDim}), mp = g.input("mp", {b, 1});
  const Var d1 = g.input("d1", {b, 25}, true), d2 = g.input("d2", {b, 25}, true), fake = g.input("fake", {b, 25}, true);
  const Var r = reprojection_loss(p2, g2, vis);
  const Var l3 = joints3d_loss(p3, g3, m3);
  const Var lp = smpl_param_loss(ps, pp, gs, gp, mp);
  g.mark_output("reprojection", r);
  g.mark_output("joints3d", l3);
  g.mark_output("smpl_params", lp);
  g.mark_output("encoder_adversarial", encoder_adv_loss({d1, d2}));
  g.mark_output("discriminator", ad::sum(discriminator_loss(d1, fake)));
  g.mark_output("total", total_loss(r, l3 + lp, encoder_adv_loss({d1, d2}), {}, true));

  TensorMap in;
  in["g2"] = uniform({b, p, 2}, rng);
  in["p2"] = in["g2"];
  // L1 arguments away from the kink.
  for (double& v : in["p2"].data()) v += (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.05, 0.5);
  in["vis"] = Tensor({b, p, 1});
  for (double& v : in["vis"].data()) v = rng.uniform() < 0.2 ? 0.0 : 1.0;
  in["p3"] = uniform({b, p, 3}, rng);
  in["g3"] = uniform({b, p, 3}, rng);
  in["m3"] = Tensor({b, 1, 1}, 1.0);
  in["m3"][1] = 0.0;
  in["ps"] = uniform({b, kNumShape}, rng);
  in["gs"] = uniform({b, kNumShape}, rng);
  in["pp"] = uniform({b, kPoseDim}, rng, -1.5, 1.5);
  in["gp"] = uniform({b, kPoseDim}, rng, -1.5, 1.5);
  in["mp"] = Tensor({b, 1}, 1.0);
  in["d1"] = uniform({b, 25}, rng);
  in["d2"] = uniform({b, 25}, rng);
  in["fake"] = uniform({b, 25}, rng);
  for (const char* name : {"reprojection", "joints3d", "smpl_params", "encoder_adversarial", "discriminator", "total"}) {
    out.push_back(entry("losses", name, ad::grad_check(g, name, in, {})));
  }
}

void ief_discriminator(std::vector<GradSuiteEntry>& out, const BodyTemplate& body, Rng& rng) {
  ModelConfig c;
  c.encoder_hidden = 8;
  c.feature_dim = 4;
  c.regressor_width = 8;
  c.disc_width = 8;
  c.init_gain = 0.3;
  c.output_gain = 0.3;
  ad::ParamStore params;
  init_parameters(params, c, rng);
  const BodyGraphConstants bc = make_body_graph_constants(body, false);
  const std::size_t b = 2, p = body.keypoints.size();
  c.num_keypoints = p;
  Graph g;
  const auto thetas =
      ief_regress(encode(g.input("obs", {b, c.input_dim()}, true), c), g.input("theta0", {b, kThetaDim}), c);
  const auto comp = compose_projection_graph(bc, thetas.back());
  const Var reproj = reprojection_loss(comp.keypoints2d, g.input("gt2d", {b, p, 2}), g.input("vis", {b, p, 1}));
  std::vector<Var> scores;
  for (const Var& t : thetas) {
    const ThetaParts parts = split_theta(t);
    scores.push_back(discriminate(parts.shape, parts.pose, c));
  }
  g.mark_output("loss", total_loss(reproj, reproj, encoder_adv_loss(scores), {}, false));
  const TensorMap in{{"obs", uniform({b, c.input_dim()}, rng)},
                     {"theta0", theta_batch(default_mean_theta({}), b)},
                     {"gt2d", uniform({b, p, 2}, rng)},
                     {"vis", Tensor({b, p, 1}, 1.0)}};
  out.push_back(entry("ief_discriminator", "unrolled_T3", ad::grad_check(g, "loss", in, params)));
}

}  // namespace

std::vector<GradSuiteEntry> run_grad_suite(const BodyTemplate& body, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradSuiteEntry> out;
  primitives(out, rng);
  body_model(out, body, rng);
  projection(out, body, rng);
  losses(out, rng);
  ief_discriminator(out, body, rng);
  return out;
}

nlohmann::json to_json(const std::vector<GradSuiteEntry>& entries) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries) {
    j.push_back({{"subsystem", e.subsystem},
                 {"name", e.name},
                 {"max_rel_error", e.max_rel_error},
                 {"worst", e.worst},
                 {"checked", e.checked}});
  }
  return j;
}

}  // namespace hmrk
