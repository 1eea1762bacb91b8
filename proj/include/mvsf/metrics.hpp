#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "mvsf/geometry.hpp"
#include "mvsf/residuals.hpp"

namespace mvsf {

// Average by-index distance. Throws std::invalid_argument on empty or
// mismatched inputs.
double addPoints(std::span<const Vec3> a, std::span<const Vec3> b);

// Average distance between probes mapped by the ground-truth and the estimated
// transform.
double addTransform(const Posed& gt, const Posed& est, std::span<const Vec3> probes);

double addFlow(std::span<const FlowVector> gt, std::span<const FlowVector> est);

std::vector<Vec3> coordinates(std::span<const Point3> points);
std::vector<Vec3> coordinates(std::span<const FlowVector> flows);

struct AddRecord {
  // Output errors, meters. Indexed by Param.
  std::array<double, kPoseParamCount> out_tf{};
  double out_sf = 0.0;          // over all points
  double out_sf_unknown = 0.0;  // over points without a flow prior
  // Realized input noise, meters.
  double in_da = 0.0;
  double in_tf = 0.0;
  double in_sf = 0.0;
  std::string probes = "ground-truth t0 points in each transform's source frame";

  bool operator==(const AddRecord&) const = default;
};

// Default probe set per pose parameter: the ground-truth t0 points expressed
// in that transform's source frame.
std::vector<Vec3> defaultProbes(const MeasureSet& ground_truth, Param p);

// Output errors of an estimate against noise-free ground-truth measures.
// Flow error on unknown points is zero when every point is known.
AddRecord outputErrors(const ParameterSet& estimate, const MeasureSet& ground_truth,
                       std::span<const std::size_t> known_flow_indices = {});

}  // namespace mvsf
