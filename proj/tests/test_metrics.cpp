#include <gtest/gtest.h>

#include <random>

#include "mvsf/metrics.hpp"
#include "test_support.hpp"

namespace mvsf {
namespace {

using testing::canonicalMeasures;
using testing::perturbed;

TEST(Metrics, ThreeFourFive) {
  const std::vector<Vec3> a{Vec3::Zero(), Vec3(1, 1, 1)};
  const std::vector<Vec3> b{Vec3(3, 4, 0), Vec3(1, 1, 1)};
  EXPECT_DOUBLE_EQ(addPoints(a, b), 2.5);
  EXPECT_DOUBLE_EQ(addPoints(std::vector<Vec3>{Vec3::Zero()}, std::vector<Vec3>{Vec3(0, 3, 4)}), 5.0);
}

TEST(Metrics, PureTranslationErrorIsItsLength) {
  std::mt19937_64 rng(1);
  std::vector<Vec3> probes;
  for (int i = 0; i < 20; ++i) probes.push_back(testing::randomVec(rng));
  const Posed gt = testing::randomPose(rng);
  const Posed est = compose(Posed::fromTranslation(Vec3(0.001, 0, 0)), gt);
  EXPECT_NEAR(addTransform(gt, est, probes), 0.001, 1e-15);
}

TEST(Metrics, RotationErrorIsChordLength) {
  // One degree about z; probes on a 50 mm circle around the axis.
  std::vector<Vec3> probes;
  for (int k = 0; k < 12; ++k) {
    const double a = 2.0 * M_PI * k / 12.0;
    probes.emplace_back(0.05 * std::cos(a), 0.05 * std::sin(a), 0.3 * k);
  }
  const Posed est = Posed::fromRotationVector(Vec3(0, 0, M_PI / 180.0));
  EXPECT_NEAR(addTransform(Posed::identity(), est, probes),
              2.0 * 0.05 * std::sin(0.5 * M_PI / 180.0), 1e-15);
}

TEST(Metrics, RejectsEmptyAndMismatched) {
  const std::vector<Vec3> empty;
  const std::vector<Vec3> one{Vec3::Zero()};
  EXPECT_THROW(addPoints(empty, empty), std::invalid_argument);
  EXPECT_THROW(addPoints(one, empty), std::invalid_argument);
  EXPECT_THROW(addTransform(Posed::identity(), Posed::identity(), empty), std::invalid_argument);
}

TEST(Metrics, OutputErrorsMatchDirectComputation) {
  const MeasureSet gt = canonicalMeasures(6);
  const ParameterSet est = perturbed(gt, 3);
  const std::vector<std::size_t> known{1, 4, 9};
  const AddRecord rec = outputErrors(est, gt, known);

  // between_t0 maps camera B t0 points; ego_b maps camera B t1 points.
  double between_err = 0.0;
  double ego_b_err = 0.0;
  double ego_a_err = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const Vec3 b0 = gt.points_b_t0[i].coords;
    const Vec3 b1 = inverse(gt.ego_b) * b0;
    const Vec3 a1 = inverse(gt.ego_a) * gt.points_a_t0[i].coords;
    between_err += (gt.between_t0 * b0 - est.pose(Param::BetweenT0) * b0).norm();
    ego_b_err += (gt.ego_b * b1 - est.pose(Param::EgoB) * b1).norm();
    ego_a_err += (gt.ego_a * a1 - est.pose(Param::EgoA) * a1).norm();
  }
  const double n = static_cast<double>(gt.size());
  EXPECT_NEAR(rec.out_tf[static_cast<int>(Param::BetweenT0)], between_err / n, 1e-15);
  EXPECT_NEAR(rec.out_tf[static_cast<int>(Param::EgoB)], ego_b_err / n, 1e-15);
  EXPECT_NEAR(rec.out_tf[static_cast<int>(Param::EgoA)], ego_a_err / n, 1e-15);

  double all = 0.0;
  double unknown = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double d = (gt.flow[i].delta - est.flow[i].delta).norm();
    all += d;
    if (i != 1 && i != 4 && i != 9) unknown += d;
  }
  EXPECT_NEAR(rec.out_sf, all / n, 1e-15);
  EXPECT_NEAR(rec.out_sf_unknown, unknown / (n - 3), 1e-15);
  EXPECT_FALSE(rec.probes.empty());
}

TEST(Metrics, ExactEstimateHasZeroError) {
  const MeasureSet gt = canonicalMeasures();
  std::vector<std::size_t> all(gt.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const AddRecord rec = outputErrors(parametersFromMeasures(gt), gt, all);
  for (double e : rec.out_tf) EXPECT_EQ(e, 0.0);
  EXPECT_EQ(rec.out_sf, 0.0);
  EXPECT_EQ(rec.out_sf_unknown, 0.0);
}

TEST(Metrics, ProbesLiveInSourceFrames) {
  const MeasureSet gt = canonicalMeasures();
  const auto b0 = defaultProbes(gt, Param::BetweenT0);
  const auto b1 = defaultProbes(gt, Param::BetweenT1);
  const auto a1 = defaultProbes(gt, Param::EgoA);
  // Ground-truth points at t0 seen from the t1 frames via inverse ego-motion.
  for (std::size_t i = 0; i < gt.size(); ++i) {
    EXPECT_LT((gt.ego_b * b1[i] - b0[i]).norm(), 1e-15);
    EXPECT_LT((gt.ego_a * a1[i] - gt.points_a_t0[i].coords).norm(), 1e-15);
  }
}

}  // namespace
}  // namespace mvsf
