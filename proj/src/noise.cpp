#include "mvsf/noise.hpp"

#include <stdexcept>
#include <utility>

namespace mvsf {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum Category : std::uint64_t {
  kPose = 1,
  kPointA0 = 10,
  kPointB0 = 11,
  kPointA1 = 12,
  kPointB1 = 13,
  kFlow = 20,
};

double meanAdd(const std::vector<Point3>& gt, const std::vector<Point3>& noisy) {
  return addPoints(coordinates(gt), coordinates(noisy));
}

}  // namespace

std::string_view toString(AssociationNoise mode) {
  return mode == AssociationNoise::CarryRelativeFlow ? "carry_relative_flow" : "independent";
}

std::optional<AssociationNoise> associationNoiseFromString(std::string_view s) {
  if (s == "carry_relative_flow") return AssociationNoise::CarryRelativeFlow;
  if (s == "independent") return AssociationNoise::Independent;
  return std::nullopt;
}

void NoiseSpec::validate() const {
  if (!(sigma_point >= 0.0) || !(sigma_flow >= 0.0) || !(sigma_trans >= 0.0) ||
      !(sigma_rot >= 0.0)) {
    throw std::invalid_argument("noise sigmas must be nonnegative");
  }
}

Rng noiseStream(std::uint64_t seed, std::uint64_t category, std::uint64_t id) {
  return Rng(splitmix64(splitmix64(seed ^ splitmix64(category)) + id));
}

Vec3 perturbVector(const Vec3& v, double sigma, Rng& rng) {
  if (sigma == 0.0) return v;
  std::normal_distribution<double> normal(0.0, sigma);
  const double x = normal(rng);
  const double y = normal(rng);
  const double z = normal(rng);
  return v + Vec3(x, y, z);
}

Posed perturbPose(const Posed& pose, double sigma_trans, double sigma_rot, Rng& rng) {
  if (sigma_trans == 0.0 && sigma_rot == 0.0) return pose;
  TangentDelta<double> d;
  d.trans = perturbVector(Vec3::Zero(), sigma_trans, rng);
  d.rot = perturbVector(Vec3::Zero(), sigma_rot, rng);
  return retract(pose, d);
}

NoisyMeasures perturbMeasures(const MeasureSet& ground_truth, const NoiseSpec& spec) {
  spec.validate();
  ground_truth.validate();
  NoisyMeasures out{ground_truth, {}};
  MeasureSet& m = out.measures;

  double in_tf = 0.0;
  int pose_count = 0;
  for (int p = 0; p < kPoseParamCount; ++p) {
    const Param param = static_cast<Param>(p);
    if (!m.has(static_cast<Measure>(p))) continue;
    Rng rng = noiseStream(spec.seed, kPose, static_cast<std::uint64_t>(p));
    m.pose(param) = perturbPose(ground_truth.pose(param), spec.sigma_trans, spec.sigma_rot, rng);
    in_tf += addTransform(ground_truth.pose(param), m.pose(param),
                          defaultProbes(ground_truth, param));
    ++pose_count;
  }
  out.realized.in_tf = pose_count > 0 ? in_tf / pose_count : 0.0;

  const bool carry = spec.association == AssociationNoise::CarryRelativeFlow;
  const bool has_flow = m.has(Measure::Flow) && !m.flow.empty();
  for (std::size_t i = 0; i < m.size(); ++i) {
    const std::uint64_t id = ground_truth.pointId(i);
    Rng rng_a0 = noiseStream(spec.seed, kPointA0, id);
    Rng rng_b0 = noiseStream(spec.seed, kPointB0, id);
    const Vec3 err_a = perturbVector(Vec3::Zero(), spec.sigma_point, rng_a0);
    const Vec3 err_b = perturbVector(Vec3::Zero(), spec.sigma_point, rng_b0);
    Vec3 err_a1 = err_a;
    Vec3 err_b1 = err_b;
    if (!carry) {
      Rng rng_a1 = noiseStream(spec.seed, kPointA1, id);
      Rng rng_b1 = noiseStream(spec.seed, kPointB1, id);
      err_a1 = perturbVector(Vec3::Zero(), spec.sigma_point, rng_a1);
      err_b1 = perturbVector(Vec3::Zero(), spec.sigma_point, rng_b1);
    }
    if (!m.points_a_t0.empty()) m.points_a_t0[i].coords += err_a;
    if (!m.points_b_t0.empty()) m.points_b_t0[i].coords += err_b;
    if (!m.points_a_t1.empty()) m.points_a_t1[i].coords += err_a1;
    if (!m.points_b_t1.empty()) m.points_b_t1[i].coords += err_b1;
    if (has_flow) {
      Rng rng_f = noiseStream(spec.seed, kFlow, id);
      m.flow[i].delta = perturbVector(m.flow[i].delta, spec.sigma_flow, rng_f);
    }
  }

  double in_da = 0.0;
  int point_sets = 0;
  for (auto [gt, noisy] : {std::pair{&ground_truth.points_a_t0, &m.points_a_t0},
                           std::pair{&ground_truth.points_b_t0, &m.points_b_t0},
                           std::pair{&ground_truth.points_a_t1, &m.points_a_t1},
                           std::pair{&ground_truth.points_b_t1, &m.points_b_t1}}) {
    if (gt->empty()) continue;
    in_da += meanAdd(*gt, *noisy);
    ++point_sets;
  }
  out.realized.in_da = point_sets > 0 ? in_da / point_sets : 0.0;
  out.realized.in_sf = has_flow ? addFlow(ground_truth.flow, m.flow) : 0.0;
  return out;
}

}  // namespace mvsf
