#include "mvsf/residuals.hpp"

#include <stdexcept>

namespace mvsf {

namespace {

constexpr std::array<std::string_view, kBlockCount> kBlockKeys = {
    "data_assoc_t0",   "data_assoc_t1",    "scene_flow_a",     "scene_flow_b",
    "kinematic_chain", "prior_between_t0", "prior_between_t1", "prior_ego_a",
    "prior_ego_b",     "prior_flow"};

void requireSize(std::size_t got, std::size_t want, std::string_view what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(want) +
                                " entries, got " + std::to_string(got));
  }
}

}  // namespace

std::string_view toString(Measure m) {
  switch (m) {
    case Measure::BetweenT0: return "between_t0";
    case Measure::BetweenT1: return "between_t1";
    case Measure::EgoA: return "ego_a";
    case Measure::EgoB: return "ego_b";
    case Measure::Flow: return "flow";
    case Measure::PointsAT0: return "points_a_t0";
    case Measure::PointsBT0: return "points_b_t0";
    case Measure::PointsAT1: return "points_a_t1";
    case Measure::PointsBT1: return "points_b_t1";
    case Measure::Count: break;
  }
  return "unknown";
}

std::string_view toString(Param p) {
  switch (p) {
    case Param::BetweenT0: return "between_t0";
    case Param::BetweenT1: return "between_t1";
    case Param::EgoA: return "ego_a";
    case Param::EgoB: return "ego_b";
  }
  return "unknown";
}

const Posed& MeasureSet::pose(Param p) const {
  switch (p) {
    case Param::BetweenT0: return between_t0;
    case Param::BetweenT1: return between_t1;
    case Param::EgoA: return ego_a;
    case Param::EgoB: return ego_b;
  }
  throw std::invalid_argument("unknown pose parameter");
}

Posed& MeasureSet::pose(Param p) {
  return const_cast<Posed&>(static_cast<const MeasureSet&>(*this).pose(p));
}

std::string_view blockKey(Block b) { return kBlockKeys.at(static_cast<std::size_t>(b)); }

std::optional<Block> blockFromKey(std::string_view key) {
  for (std::size_t i = 0; i < kBlockCount; ++i) {
    if (kBlockKeys[i] == key) return static_cast<Block>(i);
  }
  return std::nullopt;
}

void MeasureSet::validate() const {
  const std::size_t n = size();
  if (n == 0) throw std::invalid_argument("measure set has no points");
  if (has(Measure::PointsAT0)) requireSize(points_a_t0.size(), n, "points_a_t0");
  if (has(Measure::PointsAT1)) requireSize(points_a_t1.size(), n, "points_a_t1");
  if (has(Measure::PointsBT1)) requireSize(points_b_t1.size(), n, "points_b_t1");
  if (has(Measure::Flow)) requireSize(flow.size(), n, "flow");
}

ParameterSet ParameterSet::zeros(std::size_t n) {
  ParameterSet p;
  p.poses[0] = Posed::identity().withFrames({Frame::A_t0, Frame::B_t0});
  p.poses[1] = Posed::identity().withFrames({Frame::A_t1, Frame::B_t1});
  p.poses[2] = Posed::identity().withFrames({Frame::A_t0, Frame::A_t1});
  p.poses[3] = Posed::identity().withFrames({Frame::B_t0, Frame::B_t1});
  p.flow.assign(n, FlowVector{Vec3::Zero(), Frame::B_t0});
  p.flow_fixed.assign(n, false);
  return p;
}

std::vector<Measure> requiredMeasures(Block b) {
  switch (b) {
    case Block::DataAssocT0: return {Measure::PointsAT0, Measure::PointsBT0};
    case Block::DataAssocT1: return {Measure::PointsAT1, Measure::PointsBT1};
    case Block::SceneFlowA: return {Measure::PointsBT0, Measure::PointsAT1};
    case Block::SceneFlowB: return {Measure::PointsBT0, Measure::PointsBT1};
    case Block::KinematicChain: return {Measure::BetweenT1};
    case Block::PriorBetweenT0: return {Measure::BetweenT0};
    case Block::PriorBetweenT1: return {Measure::BetweenT1};
    case Block::PriorEgoA: return {Measure::EgoA};
    case Block::PriorEgoB: return {Measure::EgoB};
    case Block::PriorFlow: return {Measure::Flow};
    case Block::Count: break;
  }
  return {};
}

ProblemConfig ProblemConfig::allAvailable(const MeasureSet& measures) {
  ProblemConfig config;
  for (std::size_t i = 0; i < kBlockCount; ++i) {
    bool ok = true;
    for (Measure m : requiredMeasures(static_cast<Block>(i))) ok = ok && measures.has(m);
    config.active[i] = ok;
  }
  if (config.isActive(Block::PriorFlow)) {
    config.known_flow_indices.resize(measures.size());
    for (std::size_t i = 0; i < measures.size(); ++i) config.known_flow_indices[i] = i;
  }
  return config;
}

void ProblemConfig::validate(const MeasureSet& measures) const {
  for (std::size_t i = 0; i < kBlockCount; ++i) {
    if (!(rho[i] >= 0.0)) {
      throw std::invalid_argument("negative weight for block " + std::string(kBlockKeys[i]));
    }
    if (!active[i]) continue;
    for (Measure m : requiredMeasures(static_cast<Block>(i))) {
      if (!measures.has(m)) {
        throw std::invalid_argument("block " + std::string(kBlockKeys[i]) + " needs measure " +
                                    std::string(toString(m)) + ", which is absent");
      }
    }
  }
  for (std::size_t idx : known_flow_indices) {
    if (idx >= measures.size()) {
      throw std::invalid_argument("known flow index " + std::to_string(idx) + " out of range");
    }
  }
}

Vec3 residualDataAssocT0(const Posed& between_t0, const Point3& a_t0, const Point3& b_t0) {
  MVSF_FRAME_CHECK(between_t0.frames().target, a_t0.frame);
  MVSF_FRAME_CHECK(between_t0.frames().source, b_t0.frame);
  return dataAssociationResidual(between_t0, a_t0.coords, b_t0.coords);
}

Vec3 residualDataAssocT1(const Posed& between_t1, const Point3& a_t1, const Point3& b_t1) {
  MVSF_FRAME_CHECK(between_t1.frames().target, a_t1.frame);
  MVSF_FRAME_CHECK(between_t1.frames().source, b_t1.frame);
  return dataAssociationResidual(between_t1, a_t1.coords, b_t1.coords);
}

Vec3 residualSceneFlowA(const Posed& between_t0, const Posed& ego_a, const FlowVector& flow,
                        const Point3& b_t0, const Point3& a_t1) {
  MVSF_FRAME_CHECK(flow.frame, b_t0.frame);
  MVSF_FRAME_CHECK(between_t0.frames().source, b_t0.frame);
  MVSF_FRAME_CHECK(ego_a.frames().source, a_t1.frame);
  return sceneFlowResidualA(between_t0, ego_a, flow.delta, b_t0.coords, a_t1.coords);
}

Vec3 residualSceneFlowB(const Posed& ego_b, const FlowVector& flow, const Point3& b_t0,
                        const Point3& b_t1) {
  MVSF_FRAME_CHECK(flow.frame, b_t0.frame);
  MVSF_FRAME_CHECK(ego_b.frames().target, b_t0.frame);
  MVSF_FRAME_CHECK(ego_b.frames().source, b_t1.frame);
  return sceneFlowResidualB(ego_b, flow.delta, b_t0.coords, b_t1.coords);
}

Vec6 residualKinematicChain(const Posed& between_t0, const Posed& ego_a, const Posed& ego_b,
                            const Posed& measured_between_t1) {
  return kinematicChainResidual(between_t0, ego_a, ego_b, measured_between_t1);
}

Vec6 residualPosePrior(const Posed& estimate, const Posed& measured) {
  return poseResidual(measured, estimate);
}

Vec3 residualFlowPrior(const FlowVector& estimate, const FlowVector& measured) {
  MVSF_FRAME_CHECK(estimate.frame, measured.frame);
  return flowPriorResidual(measured.delta, estimate.delta);
}

std::array<double, kBlockCount> blockCosts(const ParameterSet& params, const MeasureSet& measures,
                                           const ProblemConfig& config) {
  const std::size_t n = measures.size();
  if (params.size() != n) {
    throw std::invalid_argument("parameter set has " + std::to_string(params.size()) +
                                " flows but measures have " + std::to_string(n) + " points");
  }
  const Posed& between_t0 = params.pose(Param::BetweenT0);
  const Posed& between_t1 = params.pose(Param::BetweenT1);
  const Posed& ego_a = params.pose(Param::EgoA);
  const Posed& ego_b = params.pose(Param::EgoB);

  std::array<double, kBlockCount> sq{};
  auto at = [&](Block b) -> double& { return sq[static_cast<std::size_t>(b)]; };

  if (config.isActive(Block::DataAssocT0)) {
    for (std::size_t i = 0; i < n; ++i)
      at(Block::DataAssocT0) +=
          residualDataAssocT0(between_t0, measures.points_a_t0[i], measures.points_b_t0[i]).squaredNorm();
  }
  if (config.isActive(Block::DataAssocT1)) {
    for (std::size_t i = 0; i < n; ++i)
      at(Block::DataAssocT1) +=
          residualDataAssocT1(between_t1, measures.points_a_t1[i], measures.points_b_t1[i]).squaredNorm();
  }
  if (config.isActive(Block::SceneFlowA)) {
    for (std::size_t i = 0; i < n; ++i)
      at(Block::SceneFlowA) += residualSceneFlowA(between_t0, ego_a, params.flow[i], measures.points_b_t0[i],
                                                  measures.points_a_t1[i])
                                   .squaredNorm();
  }
  if (config.isActive(Block::SceneFlowB)) {
    for (std::size_t i = 0; i < n; ++i)
      at(Block::SceneFlowB) +=
          residualSceneFlowB(ego_b, params.flow[i], measures.points_b_t0[i], measures.points_b_t1[i])
              .squaredNorm();
  }
  if (config.isActive(Block::KinematicChain))
    at(Block::KinematicChain) = residualKinematicChain(between_t0, ego_a, ego_b, measures.between_t1).squaredNorm();
  if (config.isActive(Block::PriorBetweenT0))
    at(Block::PriorBetweenT0) = residualPosePrior(between_t0, measures.between_t0).squaredNorm();
  if (config.isActive(Block::PriorBetweenT1))
    at(Block::PriorBetweenT1) = residualPosePrior(between_t1, measures.between_t1).squaredNorm();
  if (config.isActive(Block::PriorEgoA))
    at(Block::PriorEgoA) = residualPosePrior(ego_a, measures.ego_a).squaredNorm();
  if (config.isActive(Block::PriorEgoB))
    at(Block::PriorEgoB) = residualPosePrior(ego_b, measures.ego_b).squaredNorm();
  if (config.isActive(Block::PriorFlow)) {
    for (std::size_t i : config.known_flow_indices)
      at(Block::PriorFlow) += residualFlowPrior(params.flow[i], measures.flow[i]).squaredNorm();
  }

  for (std::size_t b = 0; b < kBlockCount; ++b) sq[b] *= 0.5 * config.rho[b];
  return sq;
}

double totalCost(const ParameterSet& params, const MeasureSet& measures,
                 const ProblemConfig& config) {
  double cost = 0.0;
  for (double c : blockCosts(params, measures, config)) cost += c;
  return cost;
}

ParameterSet parametersFromMeasures(const MeasureSet& measures) {
  ParameterSet p = ParameterSet::zeros(measures.size());
  p.pose(Param::BetweenT0) = measures.between_t0;
  p.pose(Param::BetweenT1) = measures.between_t1;
  p.pose(Param::EgoA) = measures.ego_a;
  p.pose(Param::EgoB) = measures.ego_b;
  if (measures.flow.size() == measures.size()) p.flow = measures.flow;
  return p;
}

}  // namespace mvsf
