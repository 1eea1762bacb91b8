#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mvsf/geometry.hpp"

namespace mvsf {

// Input measures of one frame pair. Per-point arrays share one index i.
enum class Measure : std::uint8_t {
  BetweenT0,  // A_t0 <- B_t0
  BetweenT1,  // A_t1 <- B_t1
  EgoA,       // A_t0 <- A_t1
  EgoB,       // B_t0 <- B_t1
  Flow,       // absolute scene flow, in B_t0
  PointsAT0,
  PointsBT0,
  PointsAT1,
  PointsBT1,
  Count
};
inline constexpr std::size_t kMeasureCount = static_cast<std::size_t>(Measure::Count);

std::string_view toString(Measure m);

// Pose-valued output parameters, each estimating the like-named measure.
enum class Param : std::uint8_t { BetweenT0, BetweenT1, EgoA, EgoB };
inline constexpr int kPoseParamCount = 4;

std::string_view toString(Param p);

struct MeasureSet {
  Posed between_t0;
  Posed between_t1;
  Posed ego_a;
  Posed ego_b;
  std::vector<FlowVector> flow;
  std::vector<Point3> points_a_t0;
  std::vector<Point3> points_b_t0;
  std::vector<Point3> points_a_t1;
  std::vector<Point3> points_b_t1;
  std::bitset<kMeasureCount> available;
  // Identity of each point (its index in the generating world). Empty means
  // the array index is the identity.
  std::vector<std::size_t> point_ids;

  bool has(Measure m) const { return available.test(static_cast<std::size_t>(m)); }
  void setAvailable(Measure m, bool on = true) { available.set(static_cast<std::size_t>(m), on); }
  std::size_t size() const { return points_b_t0.size(); }
  std::size_t pointId(std::size_t i) const { return point_ids.empty() ? i : point_ids[i]; }
  const Posed& pose(Param p) const;
  Posed& pose(Param p);

  // Throws std::invalid_argument when available per-point arrays disagree in
  // length or n == 0.
  void validate() const;
};

// Output parameters. Fixed parameters are held constant by the solver.
struct ParameterSet {
  std::array<Posed, kPoseParamCount> poses;
  std::vector<FlowVector> flow;
  std::array<bool, kPoseParamCount> pose_fixed{};
  std::vector<bool> flow_fixed;

  Posed& pose(Param p) { return poses[static_cast<int>(p)]; }
  const Posed& pose(Param p) const { return poses[static_cast<int>(p)]; }
  bool fixed(Param p) const { return pose_fixed[static_cast<int>(p)]; }
  void setFixed(Param p, bool on = true) { pose_fixed[static_cast<int>(p)] = on; }
  std::size_t size() const { return flow.size(); }

  // All poses identity, all flows zero, everything free.
  static ParameterSet zeros(std::size_t n);
};

// Residual block families, in stacked-vector order.
enum class Block : std::uint8_t {
  DataAssocT0,
  DataAssocT1,
  SceneFlowA,
  SceneFlowB,
  KinematicChain,
  PriorBetweenT0,
  PriorBetweenT1,
  PriorEgoA,
  PriorEgoB,
  PriorFlow,
  Count
};
inline constexpr std::size_t kBlockCount = static_cast<std::size_t>(Block::Count);

// Snake-case keys used in config files and reports, e.g. "prior_ego_a".
std::string_view blockKey(Block b);
std::optional<Block> blockFromKey(std::string_view key);

struct ProblemConfig {
  std::array<bool, kBlockCount> active{};
  std::array<double, kBlockCount> rho;
  // Points whose absolute flow is known; only these get a flow prior.
  std::vector<std::size_t> known_flow_indices;

  ProblemConfig() { rho.fill(1.0); }

  bool isActive(Block b) const { return active[static_cast<std::size_t>(b)]; }
  void setActive(Block b, bool on = true) { active[static_cast<std::size_t>(b)] = on; }
  double weight(Block b) const { return rho[static_cast<std::size_t>(b)]; }
  void setWeight(Block b, double w) { rho[static_cast<std::size_t>(b)] = w; }

  // Every block whose measures are available, flow prior on all points.
  static ProblemConfig allAvailable(const MeasureSet& measures);

  // Throws std::invalid_argument for negative weights, out-of-range indices,
  // or an active block whose measures are absent.
  void validate(const MeasureSet& measures) const;
};

// Which measures each block consumes.
std::vector<Measure> requiredMeasures(Block b);

// ---------------------------------------------------------------------------
// Residual kernels. Templated on the scalar so the same code path serves
// double evaluation and forward-mode automatic differentiation.

template <typename T>
Vector6<T> poseResidual(const Pose<T>& measured, const Pose<T>& predicted) {
  return local(predicted, measured).toVector();
}

template <typename T>
Vector3<T> dataAssociationResidual(const Pose<T>& between, const Vector3<T>& point_a,
                                   const Vector3<T>& point_b) {
  return point_a - between * point_b;
}

template <typename T>
Vector3<T> sceneFlowResidualA(const Pose<T>& between_t0, const Pose<T>& ego_a,
                              const Vector3<T>& flow, const Vector3<T>& point_b_t0,
                              const Vector3<T>& point_a_t1) {
  return point_a_t1 - inverse(ego_a) * (between_t0 * (point_b_t0 + flow));
}

template <typename T>
Vector3<T> sceneFlowResidualB(const Pose<T>& ego_b, const Vector3<T>& flow,
                              const Vector3<T>& point_b_t0, const Vector3<T>& point_b_t1) {
  return point_b_t1 - inverse(ego_b) * (point_b_t0 + flow);
}

template <typename T>
Vector6<T> kinematicChainResidual(const Pose<T>& between_t0, const Pose<T>& ego_a,
                                  const Pose<T>& ego_b, const Pose<T>& measured_between_t1) {
  return poseResidual(measured_between_t1, compose(inverse(ego_a), compose(between_t0, ego_b)));
}

template <typename T>
Vector3<T> flowPriorResidual(const Vector3<T>& measured, const Vector3<T>& estimate) {
  return measured - estimate;
}

// Frame-checked entry points on the tagged value types.
Vec3 residualDataAssocT0(const Posed& between_t0, const Point3& a_t0, const Point3& b_t0);
Vec3 residualDataAssocT1(const Posed& between_t1, const Point3& a_t1, const Point3& b_t1);
Vec3 residualSceneFlowA(const Posed& between_t0, const Posed& ego_a, const FlowVector& flow,
                        const Point3& b_t0, const Point3& a_t1);
Vec3 residualSceneFlowB(const Posed& ego_b, const FlowVector& flow, const Point3& b_t0,
                        const Point3& b_t1);
Vec6 residualKinematicChain(const Posed& between_t0, const Posed& ego_a, const Posed& ego_b,
                            const Posed& measured_between_t1);
Vec6 residualPosePrior(const Posed& estimate, const Posed& measured);
Vec3 residualFlowPrior(const FlowVector& estimate, const FlowVector& measured);

// Per-block contributions 0.5 * rho * sum ||f||^2, indexed by Block.
std::array<double, kBlockCount> blockCosts(const ParameterSet& params, const MeasureSet& measures,
                                           const ProblemConfig& config);

// 0.5 * sum over active blocks of rho * ||f||^2. Throws std::invalid_argument
// when the parameter and measure point counts differ.
double totalCost(const ParameterSet& params, const MeasureSet& measures,
                 const ProblemConfig& config);

// Parameters equal to the measures (exact ground truth for noise-free data).
ParameterSet parametersFromMeasures(const MeasureSet& measures);

}  // namespace mvsf
