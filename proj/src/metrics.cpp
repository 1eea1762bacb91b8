#include "mvsf/metrics.hpp"

#include <stdexcept>

namespace mvsf {

double addPoints(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.size() != b.size()) throw std::invalid_argument("ADD: lists differ in length");
  if (a.empty()) throw std::invalid_argument("ADD: empty lists");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]).norm();
  return sum / static_cast<double>(a.size());
}

double addTransform(const Posed& gt, const Posed& est, std::span<const Vec3> probes) {
  if (probes.empty()) throw std::invalid_argument("ADD: empty probe set");
  double sum = 0.0;
  for (const Vec3& p : probes) sum += (gt * p - est * p).norm();
  return sum / static_cast<double>(probes.size());
}

double addFlow(std::span<const FlowVector> gt, std::span<const FlowVector> est) {
  return addPoints(coordinates(gt), coordinates(est));
}

std::vector<Vec3> coordinates(std::span<const Point3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.coords);
  return out;
}

std::vector<Vec3> coordinates(std::span<const FlowVector> flows) {
  std::vector<Vec3> out;
  out.reserve(flows.size());
  for (const auto& f : flows) out.push_back(f.delta);
  return out;
}

std::vector<Vec3> defaultProbes(const MeasureSet& ground_truth, Param p) {
  std::vector<Vec3> out;
  switch (p) {
    case Param::BetweenT0:
      return coordinates(ground_truth.points_b_t0);
    case Param::BetweenT1:
    case Param::EgoB: {
      const Posed to_b_t1 = inverse(ground_truth.ego_b);
      for (const auto& q : ground_truth.points_b_t0) out.push_back(to_b_t1 * q.coords);
      return out;
    }
    case Param::EgoA: {
      const Posed to_a_t1 = inverse(ground_truth.ego_a);
      for (const auto& q : ground_truth.points_a_t0) out.push_back(to_a_t1 * q.coords);
      return out;
    }
  }
  return out;
}

AddRecord outputErrors(const ParameterSet& estimate, const MeasureSet& ground_truth,
                       std::span<const std::size_t> known_flow_indices) {
  AddRecord rec;
  for (int p = 0; p < kPoseParamCount; ++p) {
    const Param param = static_cast<Param>(p);
    rec.out_tf[static_cast<std::size_t>(p)] =
        addTransform(ground_truth.pose(param), estimate.pose(param), defaultProbes(ground_truth, param));
  }
  rec.out_sf = addFlow(ground_truth.flow, estimate.flow);

  std::vector<bool> known(ground_truth.size(), false);
  for (std::size_t i : known_flow_indices) known.at(i) = true;
  std::vector<Vec3> gt_unknown;
  std::vector<Vec3> est_unknown;
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    if (known[i]) continue;
    gt_unknown.push_back(ground_truth.flow[i].delta);
    est_unknown.push_back(estimate.flow[i].delta);
  }
  rec.out_sf_unknown = gt_unknown.empty() ? 0.0 : addPoints(gt_unknown, est_unknown);
  return rec;
}

}  // namespace mvsf
