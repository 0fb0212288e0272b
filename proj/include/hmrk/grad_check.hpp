#pragma once

#include <cstdint>
#include <string>

#include "hmrk/graph.hpp"

namespace hmrk::ad {

struct GradCheckOptions {
  double step = 1e-5;
  // A stencil that moves any relu/abs argument across zero is retried with
  // the step divided by 10, down to min_step.
  double min_step = 1e-9;
  // Fourth-order central stencil; plain two-point central difference when false.
  bool five_point = true;
  // rel = |analytic - numeric| / max(|analytic|, |numeric|, floor * max(1, |output|)).
  double floor = 1e-5;
  // 0 checks every entry; otherwise a seeded random subset per tensor.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
  EvalOptions eval{};
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<tensor>[<index>]"
  std::size_t checked = 0;
  std::size_t refined = 0;  // step reductions
  std::map<std::string, double> per_tensor;
};

// Compares analytic gradients of the scalar output `output` against central
// finite differences, over every parameter in the graph and every input
// declared with requires_grad.
GradCheckResult grad_check(Graph& graph, const std::string& output, TensorMap inputs, ParamStore params,
                           const GradCheckOptions& options = {});

}  // namespace hmrk::ad
