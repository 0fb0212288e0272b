#include "hmrk/layers.hpp"

#include <cmath>

namespace hmrk::ad {

Var dense(Var x, const std::string& name, std::size_t out) {
  Graph& g = *x.graph;
  const std::size_t in = x.shape().back();
  Var w = g.param(name + ".weight", {in, out});
  Var b = g.param(name + ".bias", {out});
  return matmul(x, w) + b;
}

void init_dense(ParamStore& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                double gain) {
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(in));
  Tensor w({in, out});
  for (double& v : w.data()) v = rng.uniform(-bound, bound);
  params[name + ".weight"] = std::move(w);
  params[name + ".bias"] = Tensor({out});
}

double param_fingerprint(const ParamStore& params, const std::string& prefix) {
  double acc = 0.0;
  for (auto it = params.lower_bound(prefix); it != params.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    for (double v : it->second.data()) acc += v * v;
  }
  return acc;
}

}  // namespace hmrk::ad
