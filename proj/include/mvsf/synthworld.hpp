#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mvsf/geometry.hpp"
#include "mvsf/residuals.hpp"

namespace mvsf {

// World-from-camera poses at the two instants. Cameras look along +z.
struct CameraTrajectory {
  Posed t0;
  Posed t1;
};

struct ScenarioConfig {
  std::uint64_t seed = 42;
  std::size_t num_points = 100;
  // Surface patch: extent in x/y, centered at patch_center, with a smooth
  // height bump of patch_relief along z.
  double extent_x = 0.08;
  double extent_y = 0.06;
  Vec3 patch_center{0.0, 0.025, 0.12};
  double patch_relief = 0.008;
  // Per-point displacement norms are drawn inside [amplitude_min, amplitude_max].
  double amplitude_min = 0.001;
  double amplitude_max = 0.005;
  int deformation_modes = 3;
  CameraTrajectory camera_a;
  CameraTrajectory camera_b;
  double half_fov = 35.0 * M_PI / 180.0;
  double near_plane = 0.01;
  double overlap_fraction = 0.9;
  int max_retries = 20;
  double match_radius = 0.00005;

  // Two moving cameras over a 0.08 x 0.06 m patch, 100 points, seed 42.
  static ScenarioConfig canonical();
  // Same as canonical() with camera A held still.
  static ScenarioConfig canonicalStaticA();

  // Half-diagonal of the surface patch.
  double characteristicRadius() const;

  void validate() const;
};

// Sum of sinusoidal modes; smooth by construction with a known Lipschitz bound.
class DeformationField {
 public:
  struct Mode {
    Vec3 amplitude;
    Vec3 wavevector;
    double phase = 0.0;
  };

  DeformationField() = default;
  DeformationField(Vec3 base_direction, std::vector<Mode> direction_modes, Vec3 magnitude_wavevector,
                   double magnitude_phase, double amplitude_min, double amplitude_max);

  static DeformationField random(std::uint64_t seed, int modes, double amplitude_min,
                                 double amplitude_max);

  Vec3 operator()(const Vec3& p) const;
  // |d(p) - d(q)| <= lipschitzBound() * |p - q| for all p, q.
  double lipschitzBound() const;

 private:
  Vec3 base_direction_ = Vec3::UnitX();
  std::vector<Mode> modes_;
  Vec3 magnitude_wavevector_ = Vec3::Zero();
  double magnitude_phase_ = 0.0;
  double amplitude_min_ = 0.0;
  double amplitude_max_ = 0.0;
};

struct GroundTruthWorld {
  std::vector<Vec3> points_t0;  // world frame
  std::vector<Vec3> points_t1;
  CameraTrajectory camera_a;
  CameraTrajectory camera_b;
  double lipschitz_bound = 0.0;
};

// Deterministic in config.seed. Throws std::runtime_error when the overlap
// target cannot be met within config.max_retries resamplings.
GroundTruthWorld generate(const ScenarioConfig& config);

bool visible(const Posed& world_from_camera, const Vec3& world_point, double half_fov,
             double near_plane);

// Pairs (index in a, index in b) closer than radius; each index used at most
// once, nearest pairs first.
std::vector<std::pair<std::size_t, std::size_t>> matchOverlap(std::span<const Vec3> a,
                                                              std::span<const Vec3> b,
                                                              double radius);

// Absolute flow in B_t0 from a relative flow (b_t1 - b_t0 coordinates across
// the moving camera's frames) and the camera's ego-motion.
FlowVector relativeToAbsoluteFlow(const Vec3& relative_flow, const Point3& point_b_t0,
                                  const Posed& ego_b);

// Exact measures for the points visible to both cameras at both instants and
// matched across the cameras. Every measure is flagged available. Throws
// std::runtime_error on an empty overlap.
MeasureSet deriveMeasures(const GroundTruthWorld& world, const ScenarioConfig& config);

// Moves point `second` onto the line through point `first`'s trajectory so the
// two trajectories are colinear: spacing metres further along the line, same
// displacement direction.
GroundTruthWorld withColinearTrajectories(GroundTruthWorld world, std::size_t first,
                                          std::size_t second, double spacing);

}  // namespace mvsf
