#pragma once

#include <string>

#include "hmrk/graph.hpp"
#include "hmrk/random.hpp"

namespace hmrk::ad {

// Fully-connected layer over the last axis: x[..., in] -> x W + b with
// parameters "<name>.weight" [in, out] and "<name>.bias" [out].
Var dense(Var x, const std::string& name, std::size_t out);

// He-style uniform fan-in initialisation, U(-g*sqrt(6/in), g*sqrt(6/in));
// biases start at zero.
void init_dense(ParamStore& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                double gain = 1.0);

// Sum of squared values over every parameter whose name starts with prefix;
// a cheap fingerprint for "was this block touched" checks.
double param_fingerprint(const ParamStore& params, const std::string& prefix);

}  // namespace hmrk::ad
