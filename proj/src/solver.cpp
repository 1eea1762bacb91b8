#include "mvsf/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/AutoDiff>

#include "mvsf/alignment.hpp"

namespace mvsf {

namespace {

constexpr int slotDim(int slot) { return slot == kFlowSlot ? 3 : 6; }

template <typename T, int N>
TangentDelta<T> tangentAt(const Eigen::Matrix<T, N, 1>& d, int offset) {
  return {d.template segment<3>(offset), d.template segment<3>(offset + 3)};
}

template <typename T>
Pose<T> lift(const Posed& p) {
  return Pose<T>(p.rotation().template cast<T>(), p.translation().template cast<T>());
}

// Each functor evaluates one residual block at params retracted by a stacked
// tangent delta (slot order as listed in slots), so the same code serves
// automatic differentiation and finite differences. analytic() returns the
// hand-derived Jacobian of the same stacking.

struct DataAssocFunctor {
  static constexpr int kRows = 3;
  static constexpr int kDim = 6;
  const Posed& between;
  const Vec3& point_a;
  const Vec3& point_b;
  int slot;

  std::array<int, 1> slots() const { return {slot}; }

  template <typename T>
  Eigen::Matrix<T, kRows, 1> operator()(const Eigen::Matrix<T, kDim, 1>& d) const {
    const Pose<T> x = retract(lift<T>(between), tangentAt(d, 0));
    return dataAssociationResidual<T>(x, point_a.cast<T>(), point_b.cast<T>());
  }

  Eigen::Matrix<double, kRows, kDim> analytic() const {
    Eigen::Matrix<double, kRows, kDim> j;
    j.leftCols<3>() = between.rotationMatrix() * skew<double>(point_b);
    j.rightCols<3>() = -Mat3::Identity();
    return j;
  }
};

struct SceneFlowAFunctor {
  static constexpr int kRows = 3;
  static constexpr int kDim = 15;
  const Posed& between_t0;
  const Posed& ego_a;
  const Vec3& flow;
  const Vec3& point_b_t0;
  const Vec3& point_a_t1;

  std::array<int, 3> slots() const {
    return {static_cast<int>(Param::BetweenT0), static_cast<int>(Param::EgoA), kFlowSlot};
  }

  template <typename T>
  Eigen::Matrix<T, kRows, 1> operator()(const Eigen::Matrix<T, kDim, 1>& d) const {
    const Pose<T> perturbed_between = retract(lift<T>(between_t0), tangentAt(d, 0));
    const Pose<T> perturbed_ego_a = retract(lift<T>(ego_a), tangentAt(d, 6));
    const Vector3<T> f = flow.cast<T>() + d.template segment<3>(12);
    return sceneFlowResidualA<T>(perturbed_between, perturbed_ego_a, f, point_b_t0.cast<T>(), point_a_t1.cast<T>());
  }

  Eigen::Matrix<double, kRows, kDim> analytic() const {
    const Mat3 r_between = between_t0.rotationMatrix();
    const Mat3 r_ego_a_t = ego_a.rotationMatrix().transpose();
    const Vec3 p = point_b_t0 + flow;
    const Vec3 u = r_ego_a_t * (r_between * p + between_t0.translation() - ego_a.translation());
    Eigen::Matrix<double, kRows, kDim> j;
    j.block<3, 3>(0, 0) = r_ego_a_t * r_between * skew<double>(p);
    j.block<3, 3>(0, 3) = -r_ego_a_t;
    j.block<3, 3>(0, 6) = -skew<double>(u);
    j.block<3, 3>(0, 9) = r_ego_a_t;
    j.block<3, 3>(0, 12) = -r_ego_a_t * r_between;
    return j;
  }
};

struct SceneFlowBFunctor {
  static constexpr int kRows = 3;
  static constexpr int kDim = 9;
  const Posed& ego_b;
  const Vec3& flow;
  const Vec3& point_b_t0;
  const Vec3& point_b_t1;

  std::array<int, 2> slots() const { return {static_cast<int>(Param::EgoB), kFlowSlot}; }

  template <typename T>
  Eigen::Matrix<T, kRows, 1> operator()(const Eigen::Matrix<T, kDim, 1>& d) const {
    const Pose<T> perturbed_ego_b = retract(lift<T>(ego_b), tangentAt(d, 0));
    const Vector3<T> f = flow.cast<T>() + d.template segment<3>(6);
    return sceneFlowResidualB<T>(perturbed_ego_b, f, point_b_t0.cast<T>(), point_b_t1.cast<T>());
  }

  Eigen::Matrix<double, kRows, kDim> analytic() const {
    const Mat3 r_ego_b_t = ego_b.rotationMatrix().transpose();
    const Vec3 v = r_ego_b_t * (point_b_t0 + flow - ego_b.translation());
    Eigen::Matrix<double, kRows, kDim> j;
    j.block<3, 3>(0, 0) = -skew<double>(v);
    j.block<3, 3>(0, 3) = r_ego_b_t;
    j.block<3, 3>(0, 6) = -r_ego_b_t;
    return j;
  }
};

struct KinematicChainFunctor {
  static constexpr int kRows = 6;
  static constexpr int kDim = 18;
  const Posed& between_t0;
  const Posed& ego_a;
  const Posed& ego_b;
  const Posed& measured;

  std::array<int, 3> slots() const {
    return {static_cast<int>(Param::BetweenT0), static_cast<int>(Param::EgoA),
            static_cast<int>(Param::EgoB)};
  }

  template <typename T>
  Eigen::Matrix<T, kRows, 1> operator()(const Eigen::Matrix<T, kDim, 1>& d) const {
    const Pose<T> perturbed_between = retract(lift<T>(between_t0), tangentAt(d, 0));
    const Pose<T> perturbed_ego_a = retract(lift<T>(ego_a), tangentAt(d, 6));
    const Pose<T> perturbed_ego_b = retract(lift<T>(ego_b), tangentAt(d, 12));
    return kinematicChainResidual<T>(perturbed_between, perturbed_ego_a, perturbed_ego_b, lift<T>(measured));
  }

  Eigen::Matrix<double, kRows, kDim> analytic() const {
    const Posed predicted = compose(inverse(ego_a), compose(between_t0, ego_b));
    const Vec6 r = poseResidual(measured, predicted);
    const Mat3 jl_inv = leftJacobianInverseSO3(r.head<3>());
    const Mat3 r_between = between_t0.rotationMatrix();
    const Mat3 r_ego_a_t = ego_a.rotationMatrix().transpose();
    const Mat3 r_ego_b = ego_b.rotationMatrix();
    const Mat3 rp = predicted.rotationMatrix();

    Eigen::Matrix<double, kRows, kDim> j = Eigen::Matrix<double, kRows, kDim>::Zero();
    // between_t0
    j.block<3, 3>(0, 0) = -jl_inv * r_ego_b.transpose();
    j.block<3, 3>(3, 0) = r_ego_a_t * r_between * skew<double>(ego_b.translation());
    j.block<3, 3>(3, 3) = -r_ego_a_t;
    // ego_a
    j.block<3, 3>(0, 6) = jl_inv * rp.transpose();
    j.block<3, 3>(3, 6) = -skew<double>(predicted.translation());
    j.block<3, 3>(3, 9) = r_ego_a_t;
    // ego_b
    j.block<3, 3>(0, 12) = -jl_inv;
    j.block<3, 3>(3, 15) = -r_ego_a_t * r_between;
    return j;
  }
};

struct PosePriorFunctor {
  static constexpr int kRows = 6;
  static constexpr int kDim = 6;
  const Posed& estimate;
  const Posed& measured;
  int slot;

  std::array<int, 1> slots() const { return {slot}; }

  template <typename T>
  Eigen::Matrix<T, kRows, 1> operator()(const Eigen::Matrix<T, kDim, 1>& d) const {
    const Pose<T> x = retract(lift<T>(estimate), tangentAt(d, 0));
    return poseResidual<T>(lift<T>(measured), x);
  }

  Eigen::Matrix<double, kRows, kDim> analytic() const {
    const Vec6 r = poseResidual(measured, estimate);
    Eigen::Matrix<double, kRows, kDim> j = Eigen::Matrix<double, kRows, kDim>::Zero();
    j.block<3, 3>(0, 0) = -leftJacobianInverseSO3(r.head<3>());
    j.block<3, 3>(3, 3) = -Mat3::Identity();
    return j;
  }
};

struct FlowPriorFunctor {
  static constexpr int kRows = 3;
  static constexpr int kDim = 3;
  const Vec3& estimate;
  const Vec3& measured;

  std::array<int, 1> slots() const { return {kFlowSlot}; }

  template <typename T>
  Eigen::Matrix<T, kRows, 1> operator()(const Eigen::Matrix<T, kDim, 1>& d) const {
    return flowPriorResidual<T>(measured.cast<T>(), estimate.cast<T>() + d);
  }

  Eigen::Matrix<double, kRows, kDim> analytic() const { return -Mat3::Identity(); }
};

template <class F>
Eigen::Matrix<double, F::kRows, F::kDim> autoDiffJacobian(const F& f) {
  using Derivatives = Eigen::Matrix<double, F::kDim, 1>;
  using Ad = Eigen::AutoDiffScalar<Derivatives>;
  Eigen::Matrix<Ad, F::kDim, 1> d;
  for (int k = 0; k < F::kDim; ++k) d[k] = Ad(0.0, F::kDim, k);
  const Eigen::Matrix<Ad, F::kRows, 1> out = f(d);
  Eigen::Matrix<double, F::kRows, F::kDim> j;
  for (int r = 0; r < F::kRows; ++r) j.row(r) = out[r].derivatives().transpose();
  return j;
}

template <class F>
Eigen::Matrix<double, F::kRows, F::kDim> numericJacobian(const F& f, double h) {
  Eigen::Matrix<double, F::kRows, F::kDim> j;
  for (int k = 0; k < F::kDim; ++k) {
    Eigen::Matrix<double, F::kDim, 1> d = Eigen::Matrix<double, F::kDim, 1>::Zero();
    d[k] = h;
    const Eigen::Matrix<double, F::kRows, 1> plus = f(d);
    d[k] = -h;
    const Eigen::Matrix<double, F::kRows, 1> minus = f(d);
    j.col(k) = (plus - minus) / (2.0 * h);
  }
  return j;
}

class Linearizer {
 public:
  Linearizer(const ParameterSet& params, DerivativeMode mode, bool with_jacobians,
             double check_abs, double check_rel)
      : params_(params),
        mode_(mode),
        with_jacobians_(with_jacobians),
        check_abs_(check_abs),
        check_rel_(check_rel) {}

  template <class F>
  void add(Block kind, long point, double weight, const F& f) {
    const Eigen::Matrix<double, F::kRows, 1> r = f(Eigen::Matrix<double, F::kDim, 1>(Eigen::Matrix<double, F::kDim, 1>::Zero()));
    if (!r.allFinite()) fail(kind, point, "residual");
    const int row = static_cast<int>(values_.size());
    values_.insert(values_.end(), r.data(), r.data() + F::kRows);
    if (!with_jacobians_) return;

    Eigen::Matrix<double, F::kRows, F::kDim> j;
    switch (mode_) {
      case DerivativeMode::AutoDiff:
        j = autoDiffJacobian(f);
        break;
      case DerivativeMode::Analytic:
        j = f.analytic();
        break;
      case DerivativeMode::FiniteDifferenceCheck: {
        j = f.analytic();
        const Eigen::Matrix<double, F::kRows, F::kDim> numeric = numericJacobian(f, 1e-6);
        for (int c = 0; c < F::kDim; ++c) {
          for (int rr = 0; rr < F::kRows; ++rr) {
            const double tol = std::max(check_abs_, check_rel_ * std::abs(numeric(rr, c)));
            check_ratio_ = std::max(check_ratio_, std::abs(j(rr, c) - numeric(rr, c)) / tol);
          }
        }
        break;
      }
    }
    if (!j.allFinite()) fail(kind, point, "derivative");

    LinearizedBlock block;
    block.kind = kind;
    block.point = point;
    block.row = row;
    block.rows = F::kRows;
    block.weight = weight;
    int offset = 0;
    for (int slot : f.slots()) {
      const int dim = slotDim(slot);
      if (!isFixed(slot, point)) {
        block.jacobians.push_back({slot, j.middleCols(offset, dim)});
      }
      offset += dim;
    }
    blocks_.push_back(std::move(block));
  }

  std::vector<double>& values() { return values_; }
  std::vector<LinearizedBlock>& blocks() { return blocks_; }
  double checkRatio() const { return check_ratio_; }

 private:
  bool isFixed(int slot, long point) const {
    if (slot == kFlowSlot) return params_.flow_fixed[static_cast<std::size_t>(point)];
    return params_.pose_fixed[static_cast<std::size_t>(slot)];
  }

  [[noreturn]] static void fail(Block kind, long point, const char* what) {
    std::string msg = std::string("non-finite ") + what + " in block " + std::string(blockKey(kind));
    if (point >= 0) msg += " at point " + std::to_string(point);
    throw NonFiniteError(kind, point, msg);
  }

  const ParameterSet& params_;
  DerivativeMode mode_;
  bool with_jacobians_;
  double check_abs_;
  double check_rel_;
  double check_ratio_ = 0.0;
  std::vector<double> values_;
  std::vector<LinearizedBlock> blocks_;
};

void checkProblem(const ParameterSet& params, const MeasureSet& measures,
                  const ProblemConfig& config) {
  measures.validate();
  config.validate(measures);
  if (params.size() != measures.size() || params.flow_fixed.size() != params.size()) {
    throw std::invalid_argument("parameter set has " + std::to_string(params.size()) +
                                " flows but measures have " + std::to_string(measures.size()) +
                                " points");
  }
}

// Visits every active residual block in the fixed stacking order.
void visitBlocks(const ParameterSet& params, const MeasureSet& measures,
                 const ProblemConfig& config, Linearizer& lin) {
  const std::size_t n = measures.size();
  const Posed& between_t0 = params.pose(Param::BetweenT0);
  const Posed& between_t1 = params.pose(Param::BetweenT1);
  const Posed& ego_a = params.pose(Param::EgoA);
  const Posed& ego_b = params.pose(Param::EgoB);
  auto w = [&](Block b) { return config.weight(b); };
  auto on = [&](Block b) { return config.isActive(b); };
  const long count = static_cast<long>(n);

  if (on(Block::DataAssocT0)) {
    for (long i = 0; i < count; ++i)
      lin.add(Block::DataAssocT0, i, w(Block::DataAssocT0),
              DataAssocFunctor{between_t0, measures.points_a_t0[i].coords, measures.points_b_t0[i].coords,
                               static_cast<int>(Param::BetweenT0)});
  }
  if (on(Block::DataAssocT1)) {
    for (long i = 0; i < count; ++i)
      lin.add(Block::DataAssocT1, i, w(Block::DataAssocT1),
              DataAssocFunctor{between_t1, measures.points_a_t1[i].coords, measures.points_b_t1[i].coords,
                               static_cast<int>(Param::BetweenT1)});
  }
  if (on(Block::SceneFlowA)) {
    for (long i = 0; i < count; ++i)
      lin.add(Block::SceneFlowA, i, w(Block::SceneFlowA),
              SceneFlowAFunctor{between_t0, ego_a, params.flow[i].delta, measures.points_b_t0[i].coords,
                                measures.points_a_t1[i].coords});
  }
  if (on(Block::SceneFlowB)) {
    for (long i = 0; i < count; ++i)
      lin.add(Block::SceneFlowB, i, w(Block::SceneFlowB),
              SceneFlowBFunctor{ego_b, params.flow[i].delta, measures.points_b_t0[i].coords,
                                measures.points_b_t1[i].coords});
  }
  if (on(Block::KinematicChain))
    lin.add(Block::KinematicChain, -1, w(Block::KinematicChain),
            KinematicChainFunctor{between_t0, ego_a, ego_b, measures.between_t1});
  if (on(Block::PriorBetweenT0))
    lin.add(Block::PriorBetweenT0, -1, w(Block::PriorBetweenT0),
            PosePriorFunctor{between_t0, measures.between_t0, static_cast<int>(Param::BetweenT0)});
  if (on(Block::PriorBetweenT1))
    lin.add(Block::PriorBetweenT1, -1, w(Block::PriorBetweenT1),
            PosePriorFunctor{between_t1, measures.between_t1, static_cast<int>(Param::BetweenT1)});
  if (on(Block::PriorEgoA))
    lin.add(Block::PriorEgoA, -1, w(Block::PriorEgoA),
            PosePriorFunctor{ego_a, measures.ego_a, static_cast<int>(Param::EgoA)});
  if (on(Block::PriorEgoB))
    lin.add(Block::PriorEgoB, -1, w(Block::PriorEgoB),
            PosePriorFunctor{ego_b, measures.ego_b, static_cast<int>(Param::EgoB)});
  if (on(Block::PriorFlow)) {
    for (std::size_t i : config.known_flow_indices)
      lin.add(Block::PriorFlow, static_cast<long>(i), w(Block::PriorFlow),
              FlowPriorFunctor{params.flow[i].delta, measures.flow[i].delta});
  }
}

}  // namespace

std::string_view toString(DerivativeMode mode) {
  switch (mode) {
    case DerivativeMode::Analytic: return "analytic";
    case DerivativeMode::AutoDiff: return "autodiff";
    case DerivativeMode::FiniteDifferenceCheck: return "finite_difference_check";
  }
  return "unknown";
}

std::optional<DerivativeMode> derivativeModeFromString(std::string_view s) {
  for (auto m : {DerivativeMode::Analytic, DerivativeMode::AutoDiff,
                 DerivativeMode::FiniteDifferenceCheck}) {
    if (toString(m) == s) return m;
  }
  return std::nullopt;
}

std::string_view toString(Termination t) {
  switch (t) {
    case Termination::CostTolerance: return "cost_tolerance";
    case Termination::GradientTolerance: return "gradient_tolerance";
    case Termination::MaxIterations: return "max_iterations";
    case Termination::NumericalFailure: return "numerical_failure";
    case Termination::DerivativeCheckFailed: return "derivative_check_failed";
  }
  return "unknown";
}

std::string_view toString(InitMode mode) {
  switch (mode) {
    case InitMode::Identity: return "identity";
    case InitMode::AlignedBetween: return "aligned_between";
    case InitMode::Custom: return "custom";
  }
  return "unknown";
}

void SolveOptions::validate() const {
  if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
  if (!(cost_tolerance > 0.0) || !(gradient_tolerance > 0.0)) {
    throw std::invalid_argument("tolerances must be positive");
  }
  if (!(initial_damping > 0.0) || !(damping_increase > 1.0) || !(damping_decrease > 1.0)) {
    throw std::invalid_argument("damping must be positive with factors > 1");
  }
}

ParameterLayout ParameterLayout::build(const ParameterSet& params) {
  ParameterLayout layout;
  int col = 0;
  for (int p = 0; p < kPoseParamCount; ++p) {
    if (params.pose_fixed[static_cast<std::size_t>(p)]) continue;
    layout.pose_column[static_cast<std::size_t>(p)] = col;
    col += 6;
  }
  layout.pose_dim = col;
  layout.flow_column.assign(params.size(), -1);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.flow_fixed[i]) continue;
    layout.flow_column[i] = col;
    layout.free_flows.push_back(static_cast<int>(i));
    col += 3;
  }
  layout.total_dim = col;
  return layout;
}

Linearization linearize(const ParameterSet& params, const MeasureSet& measures,
                        const ProblemConfig& config, DerivativeMode mode, double check_abs,
                        double check_rel) {
  checkProblem(params, measures, config);
  Linearizer lin(params, mode, true, check_abs, check_rel);
  visitBlocks(params, measures, config, lin);
  Linearization out;
  out.layout = ParameterLayout::build(params);
  out.residual = Eigen::Map<const Eigen::VectorXd>(lin.values().data(),
                                                   static_cast<Eigen::Index>(lin.values().size()));
  out.blocks = std::move(lin.blocks());
  out.derivative_check_ratio = lin.checkRatio();
  return out;
}

Eigen::VectorXd stackedResidual(const ParameterSet& params, const MeasureSet& measures,
                                const ProblemConfig& config) {
  checkProblem(params, measures, config);
  Linearizer lin(params, DerivativeMode::Analytic, false, 0.0, 0.0);
  visitBlocks(params, measures, config, lin);
  return Eigen::Map<const Eigen::VectorXd>(lin.values().data(),
                                           static_cast<Eigen::Index>(lin.values().size()));
}

Eigen::SparseMatrix<double> Linearization::jacobian() const {
  std::vector<Eigen::Triplet<double>> triplets;
  for (const auto& block : blocks) {
    for (const auto& pj : block.jacobians) {
      const int col = block.column(layout, pj.slot);
      for (int c = 0; c < pj.jacobian.cols(); ++c)
        for (int r = 0; r < pj.jacobian.rows(); ++r)
          triplets.emplace_back(block.row + r, col + c, pj.jacobian(r, c));
    }
  }
  Eigen::SparseMatrix<double> j(residual.size(), layout.total_dim);
  j.setFromTriplets(triplets.begin(), triplets.end());
  return j;
}

Eigen::MatrixXd Linearization::denseJacobian() const { return Eigen::MatrixXd(jacobian()); }

double Linearization::cost() const {
  double c = 0.0;
  for (const auto& block : blocks)
    c += 0.5 * block.weight * residual.segment(block.row, block.rows).squaredNorm();
  return c;
}

ParameterSet applyStep(const ParameterSet& params, const ParameterLayout& layout,
                       const Eigen::VectorXd& step) {
  ParameterSet out = params;
  for (int p = 0; p < kPoseParamCount; ++p) {
    const int col = layout.pose_column[static_cast<std::size_t>(p)];
    if (col < 0) continue;
    out.poses[static_cast<std::size_t>(p)] =
        retract(params.poses[static_cast<std::size_t>(p)],
                TangentDelta<double>::fromVector(step.segment<6>(col)));
  }
  for (int i : layout.free_flows) {
    out.flow[static_cast<std::size_t>(i)].delta +=
        step.segment<3>(layout.flow_column[static_cast<std::size_t>(i)]);
  }
  return out;
}

Eigen::MatrixXd finiteDifferenceJacobian(const ParameterSet& params, const MeasureSet& measures,
                                         const ProblemConfig& config, double h) {
  const ParameterLayout layout = ParameterLayout::build(params);
  const Eigen::Index rows = stackedResidual(params, measures, config).size();
  Eigen::MatrixXd j(rows, layout.total_dim);
  Eigen::VectorXd step = Eigen::VectorXd::Zero(layout.total_dim);
  for (int k = 0; k < layout.total_dim; ++k) {
    step[k] = h;
    const Eigen::VectorXd plus = stackedResidual(applyStep(params, layout, step), measures, config);
    step[k] = -h;
    const Eigen::VectorXd minus = stackedResidual(applyStep(params, layout, step), measures, config);
    step[k] = 0.0;
    j.col(k) = (plus - minus) / (2.0 * h);
  }
  return j;
}

NormalEquations NormalEquations::build(const Linearization& lin) {
  const ParameterLayout& layout = lin.layout;
  NormalEquations ne;
  ne.pose_dim = layout.pose_dim;
  ne.pose_hessian = Eigen::MatrixXd::Zero(ne.pose_dim, ne.pose_dim);
  ne.pose_gradient = Eigen::VectorXd::Zero(ne.pose_dim);
  const std::size_t nf = layout.free_flows.size();
  ne.flow_hessian.assign(nf, Mat3::Zero());
  ne.pose_flow.assign(nf, Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(ne.pose_dim, 3));
  ne.flow_gradient.assign(nf, Vec3::Zero());

  auto flowIndex = [&](int col) { return static_cast<std::size_t>((col - ne.pose_dim) / 3); };

  for (const auto& block : lin.blocks) {
    const auto r = lin.residual.segment(block.row, block.rows);
    for (std::size_t a = 0; a < block.jacobians.size(); ++a) {
      const auto& ja = block.jacobians[a];
      const int col_a = block.column(layout, ja.slot);
      const Eigen::VectorXd ga = block.weight * ja.jacobian.transpose() * r;
      if (ja.slot == kFlowSlot) {
        const std::size_t fi = flowIndex(col_a);
        ne.flow_gradient[fi] += ga;
        ne.flow_hessian[fi] += block.weight * ja.jacobian.transpose() * ja.jacobian;
      } else {
        ne.pose_gradient.segment<6>(col_a) += ga;
      }
      for (std::size_t b = 0; b < block.jacobians.size(); ++b) {
        const auto& jb = block.jacobians[b];
        if (ja.slot == kFlowSlot) continue;
        const int col_b = block.column(layout, jb.slot);
        const Eigen::MatrixXd hab = block.weight * ja.jacobian.transpose() * jb.jacobian;
        if (jb.slot == kFlowSlot) {
          ne.pose_flow[flowIndex(col_b)].middleRows<6>(col_a) += hab;
        } else {
          ne.pose_hessian.block<6, 6>(col_a, col_b) += hab;
        }
      }
    }
  }
  return ne;
}

void NormalEquations::addDamping(double lambda) {
  pose_hessian.diagonal().array() += lambda;
  for (auto& h : flow_hessian) h.diagonal().array() += lambda;
}

Eigen::MatrixXd NormalEquations::denseHessian() const {
  const int n = dim();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  h.topLeftCorner(pose_dim, pose_dim) = pose_hessian;
  for (std::size_t i = 0; i < flow_hessian.size(); ++i) {
    const int c = pose_dim + 3 * static_cast<int>(i);
    h.block<3, 3>(c, c) = flow_hessian[i];
    h.block(0, c, pose_dim, 3) = pose_flow[i];
    h.block(c, 0, 3, pose_dim) = pose_flow[i].transpose();
  }
  return h;
}

Eigen::VectorXd NormalEquations::denseGradient() const {
  Eigen::VectorXd g(dim());
  g.head(pose_dim) = pose_gradient;
  for (std::size_t i = 0; i < flow_gradient.size(); ++i)
    g.segment<3>(pose_dim + 3 * static_cast<int>(i)) = flow_gradient[i];
  return g;
}

double NormalEquations::gradientMaxNorm() const {
  double m = pose_dim > 0 ? pose_gradient.cwiseAbs().maxCoeff() : 0.0;
  for (const auto& g : flow_gradient) m = std::max(m, g.cwiseAbs().maxCoeff());
  return m;
}

ReducedSystem eliminateFlowBlocks(const NormalEquations& ne) {
  ReducedSystem red;
  red.schur = ne.pose_hessian;
  red.rhs = -ne.pose_gradient;
  red.flow_hessian_inverse.resize(ne.flow_hessian.size());
  for (std::size_t i = 0; i < ne.flow_hessian.size(); ++i) {
    const Mat3& h = ne.flow_hessian[i];
    Eigen::LLT<Mat3> llt(h);
    const double scale = std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
    if (llt.info() != Eigen::Success || h.diagonal().minCoeff() <= 1e-14 * scale) {
      // Singular block: solve it with a small damping term instead.
      llt.compute(h + 1e-10 * scale * Mat3::Identity());
      ++red.regularized_blocks;
    }
    red.flow_hessian_inverse[i] = llt.solve(Mat3::Identity());
    if (ne.pose_dim == 0) continue;
    const Eigen::Matrix<double, Eigen::Dynamic, 3> hpl_hinv =
        ne.pose_flow[i] * red.flow_hessian_inverse[i];
    red.schur.noalias() -= hpl_hinv * ne.pose_flow[i].transpose();
    red.rhs.noalias() += hpl_hinv * ne.flow_gradient[i];
  }
  return red;
}

Eigen::VectorXd backSubstitute(const NormalEquations& ne, const ReducedSystem& reduced,
                               const Eigen::VectorXd& pose_step) {
  Eigen::VectorXd step(ne.dim());
  step.head(ne.pose_dim) = pose_step;
  for (std::size_t i = 0; i < ne.flow_hessian.size(); ++i) {
    Vec3 rhs = -ne.flow_gradient[i];
    if (ne.pose_dim > 0) rhs.noalias() -= ne.pose_flow[i].transpose() * pose_step;
    step.segment<3>(ne.pose_dim + 3 * static_cast<int>(i)) = reduced.flow_hessian_inverse[i] * rhs;
  }
  return step;
}

std::optional<Eigen::VectorXd> solveByElimination(const NormalEquations& ne) {
  const ReducedSystem reduced = eliminateFlowBlocks(ne);
  Eigen::VectorXd pose_step = Eigen::VectorXd::Zero(ne.pose_dim);
  if (ne.pose_dim > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(reduced.schur);
    if (llt.info() != Eigen::Success) return std::nullopt;
    pose_step = llt.solve(reduced.rhs);
  }
  Eigen::VectorXd step = backSubstitute(ne, reduced, pose_step);
  if (!step.allFinite()) return std::nullopt;
  return step;
}

std::optional<Eigen::VectorXd> solveDense(const NormalEquations& ne) {
  Eigen::LLT<Eigen::MatrixXd> llt(ne.denseHessian());
  if (llt.info() != Eigen::Success) return std::nullopt;
  Eigen::VectorXd step = llt.solve(-ne.denseGradient());
  if (!step.allFinite()) return std::nullopt;
  return step;
}

RankDiagnostics rankDiagnostics(const ParameterSet& params, const MeasureSet& measures,
                                const ProblemConfig& config, double relative_threshold) {
  const NormalEquations ne = NormalEquations::build(linearize(params, measures, config));
  RankDiagnostics diag;
  diag.relative_threshold = relative_threshold;
  if (ne.dim() == 0) return diag;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ne.denseHessian(), Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& values = eig.eigenvalues();
  diag.min_eigenvalue = values.minCoeff();
  diag.max_eigenvalue = values.maxCoeff();
  const double cutoff = relative_threshold * diag.max_eigenvalue;
  diag.near_null_count = static_cast<int>((values.array() < cutoff).count());
  return diag;
}

SolveReport solve(const MeasureSet& measures, const ProblemConfig& config,
                  const ParameterSet& init, const SolveOptions& options) {
  options.validate();
  checkProblem(init, measures, config);
  const auto start = std::chrono::steady_clock::now();

  SolveReport report;
  report.init_mode = InitMode::Custom;
  ParameterSet params = init;
  double cost = totalCost(params, measures, config);
  report.initial_cost = cost;
  report.cost_trace.push_back(cost);
  double lambda = options.initial_damping;
  bool done = false;

  try {
    while (!done) {
      if (report.iterations >= options.max_iterations) {
        report.termination = Termination::MaxIterations;
        break;
      }
      const Linearization lin =
          linearize(params, measures, config, options.derivative_mode,
                    options.derivative_check_abs, options.derivative_check_rel);
      report.derivative_check_ratio = std::max(report.derivative_check_ratio,
                                               lin.derivative_check_ratio);
      if (options.derivative_mode == DerivativeMode::FiniteDifferenceCheck &&
          lin.derivative_check_ratio > 1.0) {
        report.termination = Termination::DerivativeCheckFailed;
        report.message = "analytic and numeric derivatives disagree";
        break;
      }
      const NormalEquations ne = NormalEquations::build(lin);
      if (ne.dim() == 0 || ne.gradientMaxNorm() < options.gradient_tolerance) {
        report.termination = Termination::GradientTolerance;
        break;
      }

      while (true) {
        NormalEquations damped = ne;
        damped.addDamping(lambda);
        const std::optional<Eigen::VectorXd> step =
            options.linear_solver == LinearSolverKind::FlowElimination ? solveByElimination(damped)
                                                                       : solveDense(damped);
        if (step) {
          ParameterSet candidate = applyStep(params, lin.layout, *step);
          const double new_cost = totalCost(candidate, measures, config);
          if (std::isfinite(new_cost) && new_cost <= cost) {
            const double decrease = cost > 0.0 ? (cost - new_cost) / cost : 0.0;
            params = std::move(candidate);
            cost = new_cost;
            ++report.iterations;
            report.cost_trace.push_back(cost);
            report.iterate_steps.push_back(step->norm());
            if (options.record_iterates) report.iterates.push_back(params);
            lambda = std::max(lambda / options.damping_decrease, options.min_damping);
            if (decrease < options.cost_tolerance) {
              report.termination = Termination::CostTolerance;
              done = true;
            }
            break;
          }
          if (std::isfinite(new_cost) && cost > 0.0 &&
              std::abs(new_cost - cost) / cost < options.cost_tolerance) {
            // The model can no longer change the cost measurably.
            report.termination = Termination::CostTolerance;
            done = true;
            break;
          }
        }
        lambda *= options.damping_increase;
        if (lambda > options.max_damping) {
          report.termination = Termination::NumericalFailure;
          report.message = "no acceptable step at maximum damping";
          done = true;
          break;
        }
      }
    }
  } catch (const NonFiniteError& e) {
    report.termination = Termination::NumericalFailure;
    report.message = e.what();
  }

  report.params = std::move(params);
  report.final_cost = cost;
  report.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (options.compute_rank_diagnostics) {
    report.rank = rankDiagnostics(report.params, measures, config);
  }
  return report;
}

ParameterSet initialParameters(const MeasureSet& measures, InitMode mode) {
  ParameterSet p = ParameterSet::zeros(measures.size());
  if (mode != InitMode::AlignedBetween) return p;
  auto coords = [](const std::vector<Point3>& pts) {
    std::vector<Vec3> out;
    out.reserve(pts.size());
    for (const auto& q : pts) out.push_back(q.coords);
    return out;
  };
  if (measures.has(Measure::PointsAT0) && measures.has(Measure::PointsBT0)) {
    p.pose(Param::BetweenT0) = alignRigid(coords(measures.points_a_t0), coords(measures.points_b_t0))
                                   .withFrames({Frame::A_t0, Frame::B_t0});
  }
  if (measures.has(Measure::PointsAT1) && measures.has(Measure::PointsBT1)) {
    p.pose(Param::BetweenT1) = alignRigid(coords(measures.points_a_t1), coords(measures.points_b_t1))
                                   .withFrames({Frame::A_t1, Frame::B_t1});
  }
  return p;
}

SolveReport solve(const MeasureSet& measures, const ProblemConfig& config, InitMode init_mode,
                  const SolveOptions& options) {
  SolveReport report = solve(measures, config, initialParameters(measures, init_mode), options);
  report.init_mode = init_mode;
  return report;
}

}  // namespace mvsf
