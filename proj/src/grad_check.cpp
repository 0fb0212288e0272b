#include "hmrk/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hmrk/error.hpp"
#include "hmrk/random.hpp"

namespace hmrk::ad {

namespace {

std::vector<std::size_t> pick_entries(std::size_t n, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit == 0 || limit >= n) return idx;
  for (std::size_t i = 0; i < limit; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckResult grad_check(Graph& graph, const std::string& output, TensorMap inputs, ParamStore params,
                           const GradCheckOptions& options) {
  auto scalar_at = [&]() {
    std::map<std::string, const Tensor*> bound;
    for (const auto& [name, t] : inputs) bound[name] = &t;
    graph.run(bound, params, options.eval);
    return graph.value(graph.output(output)).item();
  };

  const double value = scalar_at();
  const std::vector<bool> pattern = graph.kink_pattern();
  const double floor = options.floor * std::max(1.0, std::fabs(value));
  const Gradients analytic = graph.backpropagate(graph.output(output));

  GradCheckResult result;
  Rng rng(options.seed);
  auto check_tensor = [&](const std::string& label, Tensor& target, const Tensor& grad) {
    double worst = 0.0;
    for (std::size_t i : pick_entries(target.size(), options.max_entries_per_tensor, rng)) {
      const double saved = target[i];
      auto at = [&](double offset) {
        target[i] = saved + offset;
        return scalar_at();
      };
      double h = options.step;
      double numeric = 0.0;
      for (;;) {
        bool smooth = true;
        auto sample = [&](double offset) {
          const double v = at(offset);
          smooth = smooth && graph.kink_pattern() == pattern;
          return v;
        };
        numeric = (sample(h) - sample(-h)) / (2.0 * h);
        if (options.five_point) numeric = (4.0 * numeric - (sample(2 * h) - sample(-2 * h)) / (4.0 * h)) / 3.0;
        if (smooth || h * 0.1 < options.min_step) break;
        h *= 0.1;
        ++result.refined;
      }
      target[i] = saved;
      const double a = grad[i];
      const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), floor});
      ++result.checked;
      worst = std::max(worst, rel);
      if (rel > result.max_rel_error || result.worst.empty()) {
        result.max_rel_error = std::max(result.max_rel_error, rel);
        if (rel >= result.max_rel_error) result.worst = label + "[" + std::to_string(i) + "]";
      }
    }
    result.per_tensor[label] = worst;
  };

  for (const auto& [name, grad] : analytic.params) check_tensor(name, params.at(name), grad);
  for (const auto& [name, grad] : analytic.inputs) check_tensor(name, inputs.at(name), grad);
  // Leave the graph holding values for the unperturbed point.
  scalar_at();
  return result;
}

}  // namespace hmrk::ad
