#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "hmrk/body_model.hpp"

namespace hmrk {

struct GradSuiteEntry {
  std::string subsystem;  // primitives, body_model, projection, losses, ief_discriminator
  std::string name;
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

// Analytic gradients against central finite differences for every autodiff
// primitive, the body model, the projection, each loss and the unrolled
// regressor + discriminator graph on a tiny network.
std::vector<GradSuiteEntry> run_grad_suite(const BodyTemplate& body, std::uint64_t seed = 0);

nlohmann::json to_json(const std::vector<GradSuiteEntry>& entries);

}  // namespace hmrk
