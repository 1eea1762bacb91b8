#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "mvsf/metrics.hpp"
#include "mvsf/residuals.hpp"
#include "mvsf/solver.hpp"
#include "test_support.hpp"

namespace mvsf {
namespace {

using testing::canonicalMeasures;
using testing::perturbed;
using testing::randomPose;
using testing::randomVec;

Eigen::Matrix4d hom(const Posed& p) { return p.matrix(); }

// Rotation-vector / translation difference computed from matrices.
Vec6 poseDifference(const Eigen::Matrix4d& predicted, const Eigen::Matrix4d& measured) {
  const Mat3 r = predicted.topLeftCorner<3, 3>().transpose() * measured.topLeftCorner<3, 3>();
  const Eigen::AngleAxisd aa(r);
  Vec6 v;
  v << aa.angle() * aa.axis(), measured.topRightCorner<3, 1>() - predicted.topRightCorner<3, 1>();
  return v;
}

Vec3 mapPoint(const Eigen::Matrix4d& t, const Vec3& p) {
  return (t * p.homogeneous()).head<3>();
}

// Objective assembled from homogeneous matrices, block by block.
double naiveCost(const ParameterSet& x, const MeasureSet& m, const ProblemConfig& c) {
  const Eigen::Matrix4d between_t0 = hom(x.pose(Param::BetweenT0));
  const Eigen::Matrix4d between_t1 = hom(x.pose(Param::BetweenT1));
  const Eigen::Matrix4d ego_a = hom(x.pose(Param::EgoA));
  const Eigen::Matrix4d ego_b = hom(x.pose(Param::EgoB));
  double total = 0.0;
  auto add = [&](Block b, double sq) {
    if (c.isActive(b)) total += 0.5 * c.weight(b) * sq;
  };
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Vec3 a0 = m.points_a_t0[i].coords;
    const Vec3 b0 = m.points_b_t0[i].coords;
    const Vec3 a1 = m.points_a_t1[i].coords;
    const Vec3 b1 = m.points_b_t1[i].coords;
    const Vec3 f = x.flow[i].delta;
    add(Block::DataAssocT0, (a0 - mapPoint(between_t0, b0)).squaredNorm());
    add(Block::DataAssocT1, (a1 - mapPoint(between_t1, b1)).squaredNorm());
    add(Block::SceneFlowA, (a1 - mapPoint(ego_a.inverse() * between_t0, b0 + f)).squaredNorm());
    add(Block::SceneFlowB, (b1 - mapPoint(ego_b.inverse(), b0 + f)).squaredNorm());
  }
  add(Block::KinematicChain,
      poseDifference(ego_a.inverse() * between_t0 * ego_b, hom(m.between_t1)).squaredNorm());
  add(Block::PriorBetweenT0, poseDifference(between_t0, hom(m.between_t0)).squaredNorm());
  add(Block::PriorBetweenT1, poseDifference(between_t1, hom(m.between_t1)).squaredNorm());
  add(Block::PriorEgoA, poseDifference(ego_a, hom(m.ego_a)).squaredNorm());
  add(Block::PriorEgoB, poseDifference(ego_b, hom(m.ego_b)).squaredNorm());
  for (std::size_t i : c.known_flow_indices)
    add(Block::PriorFlow, (m.flow[i].delta - x.flow[i].delta).squaredNorm());
  return total;
}

TEST(Residuals, HandComputedValues) {
  const Posed shift = Posed::fromTranslation(Vec3(1, 0, 0));
  EXPECT_EQ(dataAssociationResidual(shift, Vec3(1, 0, 0), Vec3(0, 0, 0)), Vec3::Zero());
  EXPECT_EQ(dataAssociationResidual(shift, Vec3(2, 0, 0), Vec3(0, 0, 0)), Vec3(1, 0, 0));

  // Quarter turn about z maps (1,0,0) to (0,1,0).
  const Posed quarter = Posed::fromRotationVector(Vec3(0, 0, M_PI / 2));
  EXPECT_LT(dataAssociationResidual(quarter, Vec3(0, 1, 0), Vec3(1, 0, 0)).norm(), 1e-15);

  // Camera B stands still; the flow alone carries the point.
  EXPECT_LT(sceneFlowResidualB(Posed::identity(), Vec3(0, 0, 0.01), Vec3(0, 0, 1), Vec3(0, 0, 1.01))
                .norm(),
            1e-15);
  EXPECT_EQ(flowPriorResidual(Vec3(1, 2, 3), Vec3(1, 2, 2)), Vec3(0, 0, 1));
}

TEST(Residuals, PosePriorIsNegativeOfPerturbation) {
  const Posed measured = Posed::fromRotationVector(Vec3(0.2, 0.1, -0.3), Vec3(1, 2, 3));
  Vec6 d;
  d << 0.01, -0.02, 0.03, 0.004, 0.005, -0.006;
  const Posed estimate = retract(measured, TangentDelta<double>::fromVector(d));
  EXPECT_LT((residualPosePrior(estimate, measured) + d).norm(), 1e-14);
}

TEST(Residuals, GroundTruthZeroesEveryBlock) {
  const MeasureSet m = canonicalMeasures();
  const ProblemConfig c = ProblemConfig::allAvailable(m);
  for (double cost : blockCosts(parametersFromMeasures(m), m, c)) EXPECT_LT(cost, 1e-25);
}

TEST(Residuals, CostMatchesMatrixOracle) {
  const MeasureSet m = canonicalMeasures(7);
  ProblemConfig c = ProblemConfig::allAvailable(m);
  c.known_flow_indices = {0, 3, 5};
  c.setWeight(Block::SceneFlowA, 2.5);
  c.setWeight(Block::PriorEgoB, 0.3);
  const ParameterSet x = perturbed(m, 11);
  const double expected = naiveCost(x, m, c);
  EXPECT_NEAR(totalCost(x, m, c), expected, 1e-12 * expected);
}

TEST(Residuals, CostInvariantUnderPointReordering) {
  const MeasureSet m = canonicalMeasures(3);
  ProblemConfig c = ProblemConfig::allAvailable(m);
  const ParameterSet x = perturbed(m, 5);

  std::vector<std::size_t> order(m.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(9));
  MeasureSet mp = m;
  ParameterSet xp = x;
  for (std::size_t i = 0; i < m.size(); ++i) {
    mp.points_a_t0[i] = m.points_a_t0[order[i]];
    mp.points_b_t0[i] = m.points_b_t0[order[i]];
    mp.points_a_t1[i] = m.points_a_t1[order[i]];
    mp.points_b_t1[i] = m.points_b_t1[order[i]];
    mp.flow[i] = m.flow[order[i]];
    xp.flow[i] = x.flow[order[i]];
  }
  const double a = totalCost(x, m, c);
  EXPECT_NEAR(totalCost(xp, mp, c), a, 1e-12 * a);
}

TEST(Residuals, WeightScalesOnlyItsBlock) {
  const MeasureSet m = canonicalMeasures();
  ProblemConfig c = ProblemConfig::allAvailable(m);
  const ParameterSet x = perturbed(m, 2);
  const auto base = blockCosts(x, m, c);
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    ProblemConfig doubled = c;
    doubled.rho[b] *= 2.0;
    const auto scaled = blockCosts(x, m, doubled);
    for (std::size_t k = 0; k < kBlockCount; ++k) {
      EXPECT_NEAR(scaled[k], k == b ? 2.0 * base[k] : base[k], 1e-15 * (1.0 + base[k]));
    }
  }
}

TEST(Residuals, InactiveBlocksContributeNothing) {
  const MeasureSet m = canonicalMeasures();
  ProblemConfig c;
  const ParameterSet x = perturbed(m, 2);
  EXPECT_EQ(totalCost(x, m, c), 0.0);
  c.setActive(Block::DataAssocT0);
  const auto costs = blockCosts(x, m, c);
  for (std::size_t b = 1; b < kBlockCount; ++b) EXPECT_EQ(costs[b], 0.0);
  EXPECT_GT(costs[0], 0.0);
}

TEST(Residuals, ValidationErrors) {
  MeasureSet m = canonicalMeasures();
  ProblemConfig c = ProblemConfig::allAvailable(m);
  EXPECT_NO_THROW(c.validate(m));

  ProblemConfig negative = c;
  negative.setWeight(Block::DataAssocT1, -1.0);
  EXPECT_THROW(negative.validate(m), std::invalid_argument);

  ProblemConfig bad_index = c;
  bad_index.known_flow_indices.push_back(m.size());
  EXPECT_THROW(bad_index.validate(m), std::invalid_argument);

  MeasureSet no_ego = m;
  no_ego.setAvailable(Measure::EgoA, false);
  EXPECT_THROW(c.validate(no_ego), std::invalid_argument);

  EXPECT_THROW(totalCost(ParameterSet::zeros(m.size() + 1), m, c), std::invalid_argument);

  MeasureSet ragged = m;
  ragged.points_a_t1.pop_back();
  EXPECT_THROW(ragged.validate(), std::invalid_argument);
}

TEST(Residuals, BlockKeysRoundTrip) {
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    const Block block = static_cast<Block>(b);
    EXPECT_EQ(blockFromKey(blockKey(block)), block);
  }
  EXPECT_FALSE(blockFromKey("prior_flow_b").has_value());
}

// Horn's closed form: the rotation is the dominant eigenvector of the 4x4
// quaternion matrix built from the centered cross-covariance.
Posed hornAlignment(const std::vector<Vec3>& target, const std::vector<Vec3>& source) {
  Vec3 ct = Vec3::Zero();
  Vec3 cs = Vec3::Zero();
  for (std::size_t i = 0; i < target.size(); ++i) {
    ct += target[i];
    cs += source[i];
  }
  ct /= static_cast<double>(target.size());
  cs /= static_cast<double>(source.size());
  Mat3 s = Mat3::Zero();
  for (std::size_t i = 0; i < target.size(); ++i)
    s += (source[i] - cs) * (target[i] - ct).transpose();
  const double xx = s(0, 0), xy = s(0, 1), xz = s(0, 2);
  const double yx = s(1, 0), yy = s(1, 1), yz = s(1, 2);
  const double zx = s(2, 0), zy = s(2, 1), zz = s(2, 2);
  Eigen::Matrix4d n;
  n << xx + yy + zz, yz - zy, zx - xz, xy - yx,
       yz - zy, xx - yy - zz, xy + yx, zx + xz,
       zx - xz, xy + yx, -xx + yy - zz, yz + zy,
       xy - yx, zx + xz, yz + zy, -xx - yy + zz;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(n);
  const Eigen::Vector4d q = eig.eigenvectors().col(3);
  const Eigen::Quaterniond rot(q[0], q[1], q[2], q[3]);
  return Posed(rot, ct - rot.normalized() * cs);
}

TEST(Residuals, DataAssociationOnlySolveMatchesHorn) {
  MeasureSet m = canonicalMeasures(4);
  std::mt19937_64 rng(8);
  for (auto& p : m.points_a_t0) p.coords += randomVec(rng, 0.002);

  ProblemConfig c;
  c.setActive(Block::DataAssocT0);
  ParameterSet init = ParameterSet::zeros(m.size());
  for (Param p : {Param::BetweenT1, Param::EgoA, Param::EgoB}) init.setFixed(p);
  init.flow_fixed.assign(m.size(), true);

  SolveOptions opts;
  opts.gradient_tolerance = 1e-14;
  opts.cost_tolerance = 1e-15;
  const SolveReport report = solve(m, c, init, opts);
  const Posed oracle =
      hornAlignment(coordinates(std::span<const Point3>(m.points_a_t0)),
                    coordinates(std::span<const Point3>(m.points_b_t0)));
  const Posed& est = report.params.pose(Param::BetweenT0);
  EXPECT_LT(rotationAngle(est, oracle), 1e-9);
  EXPECT_LT((est.translation() - oracle.translation()).norm(), 1e-9);
}

TEST(Residuals, FrameCheckedWrappersAgreeWithKernels) {
  std::mt19937_64 rng(12);
  const Posed between_t0 = randomPose(rng);
  const Posed ego_a = randomPose(rng);
  const Vec3 f = randomVec(rng, 0.01);
  const Vec3 b0 = randomVec(rng);
  const Vec3 a1 = randomVec(rng);
  EXPECT_EQ(residualSceneFlowA(between_t0, ego_a, {f, Frame::B_t0}, {b0, Frame::B_t0}, {a1, Frame::A_t1}),
            sceneFlowResidualA(between_t0, ego_a, f, b0, a1));
}

}  // namespace
}  // namespace mvsf
