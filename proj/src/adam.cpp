#include "hmrk/adam.hpp"

#include <cmath>

#include "hmrk/container.hpp"
#include "hmrk/error.hpp"

namespace hmrk::ad {

void Adam::step(ParamStore& params, const TensorMap& grads) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) fail(ErrorKind::kInvalidArgument, "adam: unknown parameter '" + name + "'");
    if (it->second.shape() != g.shape()) {
      fail(ErrorKind::kShapeMismatch, "adam: gradient for '" + name + "' has shape " + shape_str(g.shape()) +
                                          ", parameter has " + shape_str(it->second.shape()));
    }
    if (!g.all_finite()) fail(ErrorKind::kNonFinite, "adam: non-finite gradient for parameter '" + name + "'");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto [mi, m_new] = m_.try_emplace(name, p.shape());
    auto [vi, v_new] = v_.try_emplace(name, p.shape());
    double* m = mi->second.ptr();
    double* v = vi->second.ptr();
    double* w = p.ptr();
    const double* gr = g.ptr();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gr[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gr[i] * gr[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void Adam::save(Container& out, const std::string& prefix) const {
  out.meta()[prefix] = {{"steps", steps_},
                        {"learning_rate", config_.learning_rate},
                        {"beta1", config_.beta1},
                        {"beta2", config_.beta2},
                        {"epsilon", config_.epsilon}};
  for (const auto& [name, t] : m_) out.put(prefix + ".m/" + name, t);
  for (const auto& [name, t] : v_) out.put(prefix + ".v/" + name, t);
}

void Adam::load(const Container& in, const std::string& prefix) {
  const auto& meta = in.meta().at(prefix);
  steps_ = meta.at("steps").get<std::uint64_t>();
  config_.learning_rate = meta.at("learning_rate").get<double>();
  config_.beta1 = meta.at("beta1").get<double>();
  config_.beta2 = meta.at("beta2").get<double>();
  config_.epsilon = meta.at("epsilon").get<double>();
  m_.clear();
  v_.clear();
  for (const auto& name : in.names_with_prefix(prefix + ".m/")) m_[name] = in.tensor(prefix + ".m/" + name);
  for (const auto& name : in.names_with_prefix(prefix + ".v/")) v_[name] = in.tensor(prefix + ".v/" + name);
}

}  // namespace hmrk::ad
