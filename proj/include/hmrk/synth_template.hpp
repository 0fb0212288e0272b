#pragma once

#include <array>
#include <cstdint>

#include "hmrk/body_model.hpp"

namespace hmrk {

// Procedural low-poly humanoid over the 24-joint tree. The body is built from
// tubes of 8-vertex rings swept along five chains (torso+head, two legs, two
// arms), each closed by a pole vertex at both ends.
//
// Shape directions, per unit coefficient:
//   0 uniform scale about the origin (displacement magnitude[0] * v)
//   1 leg length      2 arm length      3 torso length    4 torso girth
//   5 belly           6 shoulder width  7 hip width       8 head size
//   9 limb girth
struct SynthTemplateConfig {
  std::size_t num_vertices = 600;  // at least kMinSynthVertices
  std::uint64_t seed = 0;
  double leg_length = 1.0;
  double arm_length = 1.0;
  double torso_length = 1.0;
  double girth = 1.0;
  double jitter = 0.002;  // std-dev of per-vertex noise, metres
  std::array<double, kNumShape> blendshape_magnitudes = {0.1, 0.06, 0.06, 0.05, 0.15, 0.3, 0.03, 0.02, 0.1, 0.15};
};

inline constexpr std::size_t kMinSynthVertices = 210;
inline constexpr int kRingSize = 8;

// Y is up, the body faces +z and its left side is +x. Units are metres with
// the pelvis at the origin.
BodyTemplate synth_template(const SynthTemplateConfig& config = {});

}  // namespace hmrk
