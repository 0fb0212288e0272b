#include "hmrk/synth_template.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <map>
#include <numbers>

#include "hmrk/error.hpp"
#include "hmrk/random.hpp"

namespace hmrk {

namespace {

const std::vector<int> kParents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

enum class Region { kTorso, kHead, kLeg, kArm };

struct ChainPoint {
  Eigen::Vector3d pos;
  int joint;  // -1 for virtual stations and end points
  double ra, rb;
};

struct Chain {
  std::vector<ChainPoint> points;
  Eigen::Vector3d normal;  // initial ring normal
  Region region;
  double side = 0.0;       // +1 left, -1 right
};

struct Segment {
  int chain, index;  // points[index] -> points[index + 1]
  int bone;
  double length;
  int rings = 1;
};

// Per-vertex bookkeeping used to build blendshapes.
struct VertexInfo {
  Eigen::Vector3d axis;    // point on the chain axis
  Eigen::Vector3d offset;  // radial offset from the axis
  int chain;
  Region region;
  double side;
  std::map<int, double> weights;
};

std::vector<Chain> build_chains(const SynthTemplateConfig& c) {
  const double tl = c.torso_length, ll = c.leg_length, al = c.arm_length, g = c.girth;
  auto v = [](double x, double y, double z) { return Eigen::Vector3d(x, y, z); };
  std::vector<Chain> chains;

  Chain torso{{}, v(1, 0, 0), Region::kTorso};
  torso.points = {{v(0, 0, 0), 0, 0.13 * g, 0.10 * g},
                  {v(0, 0.10 * tl, 0), 3, 0.12 * g, 0.09 * g},
                  {v(0, 0.24 * tl, 0), 6, 0.13 * g, 0.10 * g},
                  {v(0, 0.30 * tl, 0), 9, 0.14 * g, 0.10 * g},
                  {v(0, 0.50 * tl, 0), 12, 0.05, 0.05},
                  {v(0, 0.50 * tl + 0.10, 0), 15, 0.075, 0.085},
                  {v(0, 0.50 * tl + 0.21, 0), -1, 0.09, 0.10},
                  {v(0, 0.50 * tl + 0.32, 0), -1, 0.0, 0.0}};
  chains.push_back(torso);

  for (double side : {1.0, -1.0}) {
    const int o = side > 0 ? 0 : 1;
    const double x = 0.09 * side;
    Chain leg{{}, v(1, 0, 0), Region::kLeg, side};
    leg.points = {{v(x, -0.08, 0), 1 + o, 0.075 * g, 0.075 * g},
                  {v(x, -0.08 - 0.40 * ll, 0), 4 + o, 0.055 * g, 0.055 * g},
                  {v(x, -0.08 - 0.80 * ll, 0), 7 + o, 0.04 * g, 0.04 * g},
                  {v(x, -0.13 - 0.80 * ll, 0.12), 10 + o, 0.035 * g, 0.025 * g},
                  {v(x, -0.14 - 0.80 * ll, 0.20), -1, 0.0, 0.0}};
    chains.push_back(leg);
  }
  for (double side : {1.0, -1.0}) {
    const int o = side > 0 ? 0 : 1;
    const double y = 0.30 * tl + 0.14;
    auto ax = [&](double x) { return side * (0.18 + (x - 0.18) * al); };
    Chain arm{{}, v(0, 1, 0), Region::kArm, side};
    arm.points = {{v(0.06 * side, 0.30 * tl + 0.12, 0), 13 + o, 0.05 * g, 0.05 * g},
                  {v(0.18 * side, y, 0), 16 + o, 0.05 * g, 0.05 * g},
                  {v(ax(0.44), y, 0), 18 + o, 0.04 * g, 0.04 * g},
                  {v(ax(0.69), y, 0), 20 + o, 0.03 * g, 0.03 * g},
                  {v(ax(0.77), y, 0), 22 + o, 0.03 * g, 0.015 * g},
                  {v(ax(0.85), y, 0), -1, 0.0, 0.0}};
    chains.push_back(arm);
  }
  return chains;
}

// Weight of each joint for a ring at fraction u along segment s.
std::map<int, double> ring_weights(const Chain& chain, const Segment& s, double u) {
  std::map<int, double> w{{s.bone, 1.0}};
  const ChainPoint& a = chain.points[static_cast<std::size_t>(s.index)];
  const ChainPoint& b = chain.points[static_cast<std::size_t>(s.index + 1)];
  constexpr double kRamp = 0.3;
  if (a.joint == s.bone && kParents[static_cast<std::size_t>(s.bone)] >= 0 && u < kRamp) {
    const double t = 0.5 + 0.5 * u / kRamp;
    w[s.bone] = t;
    w[kParents[static_cast<std::size_t>(s.bone)]] = 1.0 - t;
  }
  if (b.joint >= 0 && u > 1.0 - kRamp) {
    const double t = 0.5 * (u - (1.0 - kRamp)) / kRamp;
    w[b.joint] = t;
    w[s.bone] = 1.0 - t;
  }
  return w;
}

}  // namespace

BodyTemplate synth_template(const SynthTemplateConfig& config) {
  if (config.num_vertices < kMinSynthVertices) {
    fail(ErrorKind::kInvalidConfig, "synthetic template needs at least " + std::to_string(kMinSynthVertices) +
                                        " vertices, got " + std::to_string(config.num_vertices));
  }
  const std::vector<Chain> chains = build_chains(config);

  std::vector<Segment> segments;
  for (std::size_t ci = 0; ci < chains.size(); ++ci) {
    int bone = -1;
    for (std::size_t i = 0; i + 1 < chains[ci].points.size(); ++i) {
      const ChainPoint& a = chains[ci].points[i];
      if (a.joint >= 0) bone = a.joint;
      const double len = (chains[ci].points[i + 1].pos - a.pos).norm();
      segments.push_back({static_cast<int>(ci), static_cast<int>(i), bone, len});
    }
  }
  const std::size_t base_rings = segments.size();
  const std::size_t poles = 2 * chains.size();
  std::size_t extra = (config.num_vertices - poles) / kRingSize - base_rings;
  const std::size_t leftover = config.num_vertices - poles - kRingSize * (base_rings + extra);
  while (extra-- > 0) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < segments.size(); ++i) {
      if (segments[i].length / (segments[i].rings + 1) > segments[best].length / (segments[best].rings + 1)) best = i;
    }
    ++segments[best].rings;
  }

  std::vector<VertexInfo> info;
  std::vector<Eigen::Vector3i> faces;
  std::map<int, std::vector<int>> joint_rings;  // joint -> ring vertex ids
  std::vector<int> head_vertices;
  int top_pole = -1;

  for (std::size_t ci = 0; ci < chains.size(); ++ci) {
    const Chain& chain = chains[ci];
    struct Station {
      Eigen::Vector3d pos;
      double ra, rb;
      int joint;
      std::map<int, double> w;
      bool head;
    };
    std::vector<Station> stations;
    for (const Segment& s : segments) {
      if (s.chain != static_cast<int>(ci)) continue;
      const ChainPoint& a = chain.points[static_cast<std::size_t>(s.index)];
      const ChainPoint& b = chain.points[static_cast<std::size_t>(s.index + 1)];
      for (int k = 0; k < s.rings; ++k) {
        const double u = static_cast<double>(k) / s.rings;
        stations.push_back({a.pos + u * (b.pos - a.pos), a.ra + u * (b.ra - a.ra), a.rb + u * (b.rb - a.rb),
                            k == 0 ? a.joint : -1, ring_weights(chain, s, u), s.bone == 15});
      }
    }
    const ChainPoint& end = chain.points.back();
    const Region region_of_head = Region::kHead;

    // Parallel-transported ring frames.
    std::vector<Eigen::Vector3d> tangents(stations.size());
    for (std::size_t i = 0; i < stations.size(); ++i) {
      const Eigen::Vector3d prev = i == 0 ? stations[i].pos : stations[i - 1].pos;
      const Eigen::Vector3d next = i + 1 < stations.size() ? stations[i + 1].pos : end.pos;
      tangents[i] = (next - prev).normalized();
    }
    Eigen::Vector3d normal = chain.normal;

    const int first = static_cast<int>(info.size());
    const Eigen::Vector3d start_pole = stations[0].pos - tangents[0] * 0.5 * std::min(stations[0].ra, stations[0].rb);
    info.push_back({stations[0].pos, start_pole - stations[0].pos, static_cast<int>(ci), chain.region, chain.side,
                    stations[0].w});
    for (std::size_t i = 0; i < stations.size(); ++i) {
      const Station& st = stations[i];
      normal = (normal - normal.dot(tangents[i]) * tangents[i]).normalized();
      const Eigen::Vector3d binormal = tangents[i].cross(normal);
      const int ring0 = static_cast<int>(info.size());
      for (int k = 0; k < kRingSize; ++k) {
        const double ang = 2.0 * std::numbers::pi * k / kRingSize;
        const Eigen::Vector3d off = st.ra * std::cos(ang) * normal + st.rb * std::sin(ang) * binormal;
        info.push_back({st.pos, off, static_cast<int>(ci), st.head ? region_of_head : chain.region, chain.side, st.w});
        if (st.joint >= 0) joint_rings[st.joint].push_back(ring0 + k);
        if (st.head) head_vertices.push_back(ring0 + k);
      }
      for (int k = 0; k < kRingSize; ++k) {
        const int k1 = (k + 1) % kRingSize;
        if (i == 0) {
          faces.emplace_back(first, ring0 + k1, ring0 + k);
        } else {
          const int prev0 = ring0 - kRingSize;
          faces.emplace_back(prev0 + k, prev0 + k1, ring0 + k1);
          faces.emplace_back(prev0 + k, ring0 + k1, ring0 + k);
        }
      }
    }
    const int last0 = static_cast<int>(info.size()) - kRingSize;
    const int pole = static_cast<int>(info.size());
    info.push_back({end.pos, Eigen::Vector3d::Zero(), static_cast<int>(ci),
                    stations.back().head ? region_of_head : chain.region, chain.side, stations.back().w});
    for (int k = 0; k < kRingSize; ++k) faces.emplace_back(last0 + k, last0 + (k + 1) % kRingSize, pole);
    if (ci == 0) top_pole = pole;
  }

  // Spare vertices sit inside the head, on its axis.
  const Eigen::Vector3d head_pos = chains[0].points[5].pos;
  const Eigen::Vector3d top_pos = chains[0].points.back().pos;
  for (std::size_t k = 0; k < leftover; ++k) {
    const double u = 0.25 + 0.5 * static_cast<double>(k + 1) / static_cast<double>(leftover + 1);
    info.push_back({head_pos + u * (top_pos - head_pos), Eigen::Vector3d::Zero(), 0, Region::kHead, 0.0, {{15, 1.0}}});
  }

  const auto n = static_cast<Eigen::Index>(info.size());
  BodyTemplate body;
  body.parents = kParents;
  body.rest_vertices.resize(3, n);
  Rng rng(derive_seed(config.seed, 0x7e3a));
  for (Eigen::Index v = 0; v < n; ++v) {
    const VertexInfo& vi = info[static_cast<std::size_t>(v)];
    Eigen::Vector3d jitter(rng.normal(), rng.normal(), rng.normal());
    body.rest_vertices.col(v) = vi.axis + vi.offset + config.jitter * jitter;
  }
  body.faces.resize(3, static_cast<Eigen::Index>(faces.size()));
  for (std::size_t f = 0; f < faces.size(); ++f) body.faces.col(static_cast<Eigen::Index>(f)) = faces[f];

  body.skin_weights = RowMatrix::Zero(n, static_cast<Eigen::Index>(kNumJoints));
  for (Eigen::Index v = 0; v < n; ++v) {
    for (const auto& [j, w] : info[static_cast<std::size_t>(v)].weights) body.skin_weights(v, j) = w;
  }

  body.joint_regressor = RowMatrix::Zero(static_cast<Eigen::Index>(kNumJoints), n);
  for (const auto& [j, ring] : joint_rings) {
    for (int v : ring) body.joint_regressor(j, v) = 1.0 / static_cast<double>(ring.size());
  }

  // Shape directions.
  const auto& m = config.blendshape_magnitudes;
  const double neck_y = chains[0].points[4].pos.y();
  const double collar_y = chains[3].points[0].pos.y();
  const Eigen::Vector3d ex = Eigen::Vector3d::UnitX(), ey = Eigen::Vector3d::UnitY(), ez = Eigen::Vector3d::UnitZ();
  body.shape_blendshapes = RowMatrix::Zero(3 * n, static_cast<Eigen::Index>(kNumShape));
  for (Eigen::Index v = 0; v < n; ++v) {
    const VertexInfo& vi = info[static_cast<std::size_t>(v)];
    std::array<Eigen::Vector3d, kNumShape> d;
    d.fill(Eigen::Vector3d::Zero());
    d[0] = m[0] * body.rest_vertices.col(v);
    const Eigen::Vector3d root = chains[static_cast<std::size_t>(vi.chain)].points[0].pos;
    switch (vi.region) {
      case Region::kLeg:
        d[1] = m[1] * (vi.axis - root);
        d[7] = m[7] * vi.side * ex;
        d[9] = m[9] * vi.offset;
        break;
      case Region::kArm:
        d[2] = m[2] * (vi.axis - root);
        d[3] = m[3] * collar_y * ey;
        d[6] = m[6] * vi.side * ex;
        d[9] = m[9] * vi.offset;
        break;
      case Region::kTorso: {
        d[3] = m[3] * std::min(vi.axis.y(), neck_y) * ey;
        if (vi.axis.y() < neck_y) d[4] = m[4] * vi.offset;
        const double h = std::max(0.0, 1.0 - std::fabs(vi.axis.y() - 0.12) / 0.15);
        d[5] = m[5] * h * std::max(0.0, vi.offset.z()) * ez;
        break;
      }
      case Region::kHead:
        d[3] = m[3] * neck_y * ey;
        d[8] = m[8] * (vi.axis + vi.offset - head_pos);
        break;
    }
    for (std::size_t b = 0; b < kNumShape; ++b) {
      for (int c = 0; c < 3; ++c) body.shape_blendshapes(3 * v + c, static_cast<Eigen::Index>(b)) = d[b][c];
    }
  }

  // Keypoints: 14 ring-centre joints, then five face vertices on the head.
  const std::array<int, 12> lsp_joints = {8, 5, 2, 1, 4, 7, 21, 19, 17, 16, 18, 20};
  auto ring_entry = [&](const char* name, int joint) {
    KeypointEntry kp{name, KeypointEntry::Kind::kRegression, {}, -1};
    const auto& ring = joint_rings.at(joint);
    for (int vtx : ring) kp.weights.emplace_back(vtx, 1.0 / static_cast<double>(ring.size()));
    return kp;
  };
  for (std::size_t i = 0; i < lsp_joints.size(); ++i) body.keypoints.push_back(ring_entry(kKeypointNames[i], lsp_joints[i]));
  body.keypoints.push_back(ring_entry(kKeypointNames[12], 12));
  body.keypoints.push_back({kKeypointNames[13], KeypointEntry::Kind::kRegression, {{top_pole, 1.0}}, -1});
  auto pick = [&](auto score) {
    int best = head_vertices.front();
    for (int vtx : head_vertices) {
      if (score(body.rest_vertices.col(vtx)) > score(body.rest_vertices.col(best))) best = vtx;
    }
    return best;
  };
  const std::array<int, 5> face = {
      pick([](const Eigen::Vector3d& p) { return p.z(); }),
      pick([](const Eigen::Vector3d& p) { return p.z() + 0.5 * p.x(); }),
      pick([](const Eigen::Vector3d& p) { return p.z() - 0.5 * p.x(); }),
      pick([](const Eigen::Vector3d& p) { return p.x(); }),
      pick([](const Eigen::Vector3d& p) { return -p.x(); }),
  };
  for (std::size_t i = 0; i < face.size(); ++i) {
    body.keypoints.push_back({kKeypointNames[14 + i], KeypointEntry::Kind::kVertex, {}, face[i]});
  }

  body.validate();
  return body;
}

}  // namespace hmrk
