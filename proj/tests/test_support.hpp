#pragma once

#include <random>
#include <vector>

#include "mvsf/geometry.hpp"
#include "mvsf/residuals.hpp"
#include "mvsf/synthworld.hpp"

namespace mvsf::testing {

inline Posed randomPose(std::mt19937_64& rng, double angle = 1.0, double trans = 0.5) {
  std::normal_distribution<double> g(0.0, 1.0);
  const Vec3 axis(g(rng), g(rng), g(rng));
  const Vec3 t(g(rng), g(rng), g(rng));
  std::uniform_real_distribution<double> u(-angle, angle);
  return Posed::fromRotationVector(axis.normalized() * u(rng), trans * t);
}

inline Vec3 randomVec(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  return {g(rng), g(rng), g(rng)};
}

inline MeasureSet canonicalMeasures(std::uint64_t seed = 42, std::size_t n = 100) {
  ScenarioConfig c = ScenarioConfig::canonical();
  c.seed = seed;
  c.num_points = n;
  return deriveMeasures(generate(c), c);
}

// Keeps the first n matched points.
inline MeasureSet truncated(MeasureSet m, std::size_t n) {
  auto cut = [n](auto& v) {
    if (v.size() > n) v.resize(n);
  };
  cut(m.flow);
  cut(m.points_a_t0);
  cut(m.points_b_t0);
  cut(m.points_a_t1);
  cut(m.points_b_t1);
  cut(m.point_ids);
  return m;
}

inline ProblemConfig everyBlock(const MeasureSet& m) { return ProblemConfig::allAvailable(m); }

// Ground truth moved off by random tangent steps on every free parameter.
inline ParameterSet perturbed(const MeasureSet& m, std::uint64_t seed, double rot = 0.05,
                              double trans = 0.01, double flow = 0.003) {
  std::mt19937_64 rng(seed);
  ParameterSet p = parametersFromMeasures(m);
  for (auto& pose : p.poses)
    pose = retract(pose, TangentDelta<double>{randomVec(rng, rot), randomVec(rng, trans)});
  for (auto& f : p.flow) f.delta += randomVec(rng, flow);
  return p;
}

}  // namespace mvsf::testing
