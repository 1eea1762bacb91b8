#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "mvsf/noise.hpp"
#include "test_support.hpp"

namespace mvsf {
namespace {

using testing::canonicalMeasures;

TEST(Noise, MeanDisplacementIsChiThreeMean) {
  Rng rng(1);
  const int samples = 200000;
  double sum = 0.0;
  for (int k = 0; k < samples; ++k) sum += perturbVector(Vec3::Zero(), 0.002, rng).norm();
  const double mean = sum / samples;
  EXPECT_NEAR(mean / (0.002 * std::sqrt(8.0 / M_PI)), 1.0, 0.02);
  EXPECT_NEAR(sigmaForAdd(0.001) * kChiThreeMean, 0.001, 1e-18);
}

TEST(Noise, PoseRotationNoiseHasExpectedGeodesicAngle) {
  Rng rng(2);
  const Posed base = Posed::fromRotationVector(Vec3(0.3, 0.1, -0.2), Vec3(1, 2, 3));
  const int samples = 100000;
  const double sigma = 0.01;
  double angle = 0.0;
  double shift = 0.0;
  for (int k = 0; k < samples; ++k) {
    const Posed p = perturbPose(base, 0.0, sigma, rng);
    angle += rotationAngle(base, p);
    shift += (p.translation() - base.translation()).norm();
  }
  EXPECT_NEAR(angle / samples / (sigma * kChiThreeMean), 1.0, 0.02);
  EXPECT_EQ(shift, 0.0);
}

TEST(Noise, RotationRuleEqualizesDisplacementAtRadius) {
  Rng rng(3);
  const double radius = 0.05;
  const double sigma_trans = 0.0005;
  const double sigma_rot = rotationSigmaAtRadius(sigma_trans, radius);
  const int samples = 100000;
  // A point at the lever arm in a random direction.
  std::normal_distribution<double> g(0.0, 1.0);
  double rot_disp = 0.0;
  double trans_disp = 0.0;
  for (int k = 0; k < samples; ++k) {
    const Vec3 probe = radius * Vec3(g(rng), g(rng), g(rng)).normalized();
    const Posed r = perturbPose(Posed::identity(), 0.0, sigma_rot, rng);
    rot_disp += (r * probe - probe).norm();
    const Posed t = perturbPose(Posed::identity(), sigma_trans, 0.0, rng);
    trans_disp += (t * probe - probe).norm();
  }
  EXPECT_NEAR(rot_disp / trans_disp, 1.0, 0.02);
}

TEST(Noise, SpecValidationAndNames) {
  NoiseSpec bad;
  bad.sigma_flow = -1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  for (AssociationNoise mode : {AssociationNoise::CarryRelativeFlow, AssociationNoise::Independent})
    EXPECT_EQ(associationNoiseFromString(toString(mode)), mode);
  EXPECT_FALSE(associationNoiseFromString("bogus").has_value());
}

TEST(Noise, ZeroSigmaIsIdentity) {
  const MeasureSet m = canonicalMeasures();
  NoiseSpec spec;
  spec.seed = 99;
  const NoisyMeasures out = perturbMeasures(m, spec);
  EXPECT_EQ(out.measures.between_t0.matrix(), m.between_t0.matrix());
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(out.measures.points_a_t1[i].coords, m.points_a_t1[i].coords);
    EXPECT_EQ(out.measures.flow[i].delta, m.flow[i].delta);
  }
  EXPECT_EQ(out.realized.in_da, 0.0);
  EXPECT_EQ(out.realized.in_tf, 0.0);
  EXPECT_EQ(out.realized.in_sf, 0.0);
}

TEST(Noise, CategoriesAreIsolated) {
  const MeasureSet m = canonicalMeasures();
  NoiseSpec points;
  points.sigma_point = 0.001;
  const NoisyMeasures a = perturbMeasures(m, points);
  for (int p = 0; p < kPoseParamCount; ++p) {
    EXPECT_EQ(a.measures.pose(static_cast<Param>(p)).matrix(), m.pose(static_cast<Param>(p)).matrix());
  }
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(a.measures.flow[i].delta, m.flow[i].delta);
  EXPECT_GT(a.realized.in_da, 0.0);

  NoiseSpec flows;
  flows.sigma_flow = 0.001;
  const NoisyMeasures b = perturbMeasures(m, flows);
  for (std::size_t i = 0; i < m.size(); ++i)
    EXPECT_EQ(b.measures.points_b_t0[i].coords, m.points_b_t0[i].coords);
  EXPECT_GT(b.realized.in_sf, 0.0);
  EXPECT_EQ(b.realized.in_da, 0.0);

  // Unavailable poses are left alone.
  MeasureSet partial = m;
  partial.setAvailable(Measure::EgoB, false);
  NoiseSpec poses;
  poses.sigma_trans = 0.001;
  const NoisyMeasures c = perturbMeasures(partial, poses);
  EXPECT_EQ(c.measures.ego_b.matrix(), m.ego_b.matrix());
  EXPECT_NE(c.measures.ego_a.matrix(), m.ego_a.matrix());
}

TEST(Noise, CarryModeSharesErrorAcrossInstants) {
  const MeasureSet m = canonicalMeasures();
  NoiseSpec spec;
  spec.sigma_point = 0.001;
  const NoisyMeasures carry = perturbMeasures(m, spec);
  spec.association = AssociationNoise::Independent;
  const NoisyMeasures indep = perturbMeasures(m, spec);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Vec3 e0 = carry.measures.points_a_t0[i].coords - m.points_a_t0[i].coords;
    const Vec3 e1 = carry.measures.points_a_t1[i].coords - m.points_a_t1[i].coords;
    EXPECT_LT((e0 - e1).norm(), 1e-15);
    const Vec3 f0 = indep.measures.points_a_t0[i].coords - m.points_a_t0[i].coords;
    const Vec3 f1 = indep.measures.points_a_t1[i].coords - m.points_a_t1[i].coords;
    EXPECT_GT((f0 - f1).norm(), 0.0);
  }
}

TEST(Noise, RealizedInputErrorMatchesDefinition) {
  const MeasureSet m = canonicalMeasures();
  NoiseSpec spec;
  spec.sigma_point = 0.001;
  spec.sigma_flow = 0.0005;
  spec.sigma_trans = 0.001;
  spec.association = AssociationNoise::Independent;
  const NoisyMeasures out = perturbMeasures(m, spec);
  auto mean = [](const std::vector<Point3>& a, const std::vector<Point3>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i].coords - b[i].coords).norm();
    return s / static_cast<double>(a.size());
  };
  const MeasureSet& n = out.measures;
  const double expected_da = (mean(m.points_a_t0, n.points_a_t0) + mean(m.points_b_t0, n.points_b_t0) +
                              mean(m.points_a_t1, n.points_a_t1) + mean(m.points_b_t1, n.points_b_t1)) /
                             4.0;
  EXPECT_NEAR(out.realized.in_da, expected_da, 1e-15);
  double tf = 0.0;
  for (int p = 0; p < kPoseParamCount; ++p) {
    const Param param = static_cast<Param>(p);
    tf += (m.pose(param).translation() - n.pose(param).translation()).norm();
  }
  EXPECT_NEAR(out.realized.in_tf, tf / 4.0, 1e-15);
}

TEST(Noise, ScalesLinearlyWithSigma) {
  const MeasureSet m = canonicalMeasures();
  NoiseSpec spec;
  spec.seed = 7;
  spec.sigma_point = 0.001;
  spec.sigma_flow = 0.0002;
  spec.sigma_trans = 0.0003;
  const NoisyMeasures one = perturbMeasures(m, spec);
  spec.sigma_point *= 3.0;
  spec.sigma_flow *= 3.0;
  spec.sigma_trans *= 3.0;
  const NoisyMeasures three = perturbMeasures(m, spec);
  EXPECT_NEAR(three.realized.in_da, 3.0 * one.realized.in_da, 1e-15);
  EXPECT_NEAR(three.realized.in_sf, 3.0 * one.realized.in_sf, 1e-15);
  EXPECT_NEAR(three.realized.in_tf, 3.0 * one.realized.in_tf, 1e-15);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Vec3 e1 = one.measures.points_b_t1[i].coords - m.points_b_t1[i].coords;
    const Vec3 e3 = three.measures.points_b_t1[i].coords - m.points_b_t1[i].coords;
    EXPECT_LT((e3 - 3.0 * e1).norm(), 1e-15);
  }
}

TEST(Noise, CommutesWithPointReordering) {
  const MeasureSet m = canonicalMeasures();
  std::vector<std::size_t> order(m.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(4));
  MeasureSet shuffled = m;
  for (std::size_t i = 0; i < m.size(); ++i) {
    shuffled.points_a_t0[i] = m.points_a_t0[order[i]];
    shuffled.points_b_t0[i] = m.points_b_t0[order[i]];
    shuffled.points_a_t1[i] = m.points_a_t1[order[i]];
    shuffled.points_b_t1[i] = m.points_b_t1[order[i]];
    shuffled.flow[i] = m.flow[order[i]];
    shuffled.point_ids[i] = m.point_ids[order[i]];
  }
  NoiseSpec spec;
  spec.sigma_point = 0.001;
  spec.sigma_flow = 0.001;
  const NoisyMeasures a = perturbMeasures(m, spec);
  const NoisyMeasures b = perturbMeasures(shuffled, spec);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(b.measures.points_a_t0[i].coords, a.measures.points_a_t0[order[i]].coords);
    EXPECT_EQ(b.measures.points_b_t1[i].coords, a.measures.points_b_t1[order[i]].coords);
    EXPECT_EQ(b.measures.flow[i].delta, a.measures.flow[order[i]].delta);
  }
}

TEST(Noise, SeedChangesDraws) {
  const MeasureSet m = canonicalMeasures();
  NoiseSpec spec;
  spec.sigma_point = 0.001;
  const NoisyMeasures a = perturbMeasures(m, spec);
  spec.seed = 1;
  const NoisyMeasures b = perturbMeasures(m, spec);
  EXPECT_NE(a.measures.points_a_t0[0].coords, b.measures.points_a_t0[0].coords);
  const NoisyMeasures c = perturbMeasures(m, spec);
  EXPECT_EQ(b.measures.points_a_t0[0].coords, c.measures.points_a_t0[0].coords);
}

}  // namespace
}  // namespace mvsf
