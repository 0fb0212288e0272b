#pragma once

#include <cstdint>
#include <string>

#include "hmrk/graph.hpp"

namespace hmrk {
class Container;
}

namespace hmrk::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moments are created lazily, one pair per
// parameter that has received a gradient.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Updates every parameter named in `grads`. All gradients are validated
  // before any parameter is touched.
  void step(ParamStore& params, const TensorMap& grads);

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return steps_; }
  const TensorMap& first_moments() const noexcept { return m_; }
  const TensorMap& second_moments() const noexcept { return v_; }

  void save(Container& out, const std::string& prefix) const;
  void load(const Container& in, const std::string& prefix);

 private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  TensorMap m_;
  TensorMap v_;
};

}  // namespace hmrk::ad
