#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <optional>

#include "mvsf/geometry.hpp"
#include "mvsf/metrics.hpp"
#include "mvsf/residuals.hpp"

namespace mvsf {

using Rng = std::mt19937_64;

// How point-coordinate noise reaches the t1 observations.
enum class AssociationNoise {
  // Each camera's t0 observation is perturbed and its t1 observation is
  // rebuilt by adding the camera's relative scene flow, so the error follows
  // the point through time.
  CarryRelativeFlow,
  // All four observations get independent draws.
  Independent
};

std::string_view toString(AssociationNoise mode);
std::optional<AssociationNoise> associationNoiseFromString(std::string_view s);

struct NoiseSpec {
  double sigma_point = 0.0;  // m, per axis
  double sigma_flow = 0.0;   // m, per axis
  double sigma_trans = 0.0;  // m, per axis
  double sigma_rot = 0.0;    // rad, per tangent axis
  std::uint64_t seed = 0;
  AssociationNoise association = AssociationNoise::CarryRelativeFlow;

  void validate() const;
  bool operator==(const NoiseSpec&) const = default;
};

// Mean norm of an isotropic 3D Gaussian with unit per-axis deviation.
inline const double kChiThreeMean = std::sqrt(8.0 / M_PI);

// Per-axis sigma whose expected displacement norm equals add.
inline double sigmaForAdd(double add) { return add / kChiThreeMean; }

// Rotation sigma whose mean displacement of a point at the given lever arm
// equals the mean displacement of a translation with sigma_trans.
// Perpendicular component of an isotropic tangent: mean norm sigma*sqrt(pi/2).
inline double rotationSigmaAtRadius(double sigma_trans, double radius) {
  return sigma_trans * kChiThreeMean / (std::sqrt(M_PI / 2.0) * radius);
}

// Independent stream for (seed, category, id); lets noise follow a point's
// identity rather than its array position.
Rng noiseStream(std::uint64_t seed, std::uint64_t category, std::uint64_t id);

Vec3 perturbVector(const Vec3& v, double sigma, Rng& rng);

// Euclidean translation noise; rotation perturbed by a Gaussian tangent
// through retract.
Posed perturbPose(const Posed& pose, double sigma_trans, double sigma_rot, Rng& rng);

struct NoisyMeasures {
  MeasureSet measures;
  AddRecord realized;  // only the in_* fields are set
};

// Poses and flows are perturbed only when flagged available; the realized
// input errors cover what was perturbed.
NoisyMeasures perturbMeasures(const MeasureSet& ground_truth, const NoiseSpec& spec);

}  // namespace mvsf
