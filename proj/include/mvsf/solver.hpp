#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "mvsf/residuals.hpp"

namespace mvsf {

enum class DerivativeMode { Analytic, AutoDiff, FiniteDifferenceCheck };
enum class LinearSolverKind { FlowElimination, Dense };

std::string_view toString(DerivativeMode mode);
std::optional<DerivativeMode> derivativeModeFromString(std::string_view s);

struct SolveOptions {
  int max_iterations = 100;
  // Stop when an accepted step lowers the cost by less than this fraction.
  double cost_tolerance = 1e-12;
  // Stop when the max-norm of the gradient drops below this.
  double gradient_tolerance = 1e-10;
  double initial_damping = 1e-4;
  double damping_increase = 10.0;
  double damping_decrease = 10.0;
  double max_damping = 1e16;
  double min_damping = 1e-15;
  DerivativeMode derivative_mode = DerivativeMode::Analytic;
  LinearSolverKind linear_solver = LinearSolverKind::FlowElimination;
  // Tolerance for the per-linearization derivative check.
  double derivative_check_abs = 1e-5;
  double derivative_check_rel = 1e-4;
  bool compute_rank_diagnostics = false;
  bool record_iterates = false;

  void validate() const;
};

// Thrown by linearize when a residual or derivative is not finite.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(Block block, long point, const std::string& what)
      : std::runtime_error(what), block_(block), point_(point) {}
  Block block() const { return block_; }
  long point() const { return point_; }

 private:
  Block block_;
  long point_;
};

// Column layout over the free tangent coordinates:
// [between_t0(6), between_t1(6), ego_a(6), ego_b(6), flow_0(3), ..., flow_{n-1}(3)]
// with fixed parameters removed.
struct ParameterLayout {
  std::array<int, kPoseParamCount> pose_column{-1, -1, -1, -1};
  std::vector<int> flow_column;  // -1 for fixed flows
  std::vector<int> free_flows;   // point indices of free flows, column order
  int pose_dim = 0;
  int total_dim = 0;

  static ParameterLayout build(const ParameterSet& params);
};

// Parameter slot ids inside a residual block: 0..3 for poses, 4 for the
// block's flow.
inline constexpr int kFlowSlot = kPoseParamCount;

using BlockJacobian =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 6, 6>;

struct ParamJacobian {
  int slot = 0;
  BlockJacobian jacobian;
};

struct LinearizedBlock {
  Block kind = Block::DataAssocT0;
  long point = -1;  // -1 for pose-only blocks
  int row = 0;
  int rows = 0;
  double weight = 1.0;
  std::vector<ParamJacobian> jacobians;  // free parameters only

  int column(const ParameterLayout& layout, int slot) const {
    return slot == kFlowSlot ? layout.flow_column[static_cast<std::size_t>(point)]
                             : layout.pose_column[static_cast<std::size_t>(slot)];
  }
};

struct Linearization {
  ParameterLayout layout;
  Eigen::VectorXd residual;  // unweighted
  std::vector<LinearizedBlock> blocks;
  // Finite-difference-check mode only: worst |analytic - numeric| divided by
  // max(abs_tol, rel_tol * |numeric|). Values <= 1 pass.
  double derivative_check_ratio = 0.0;

  Eigen::SparseMatrix<double> jacobian() const;  // unweighted
  Eigen::MatrixXd denseJacobian() const;
  double cost() const;
};

Linearization linearize(const ParameterSet& params, const MeasureSet& measures,
                        const ProblemConfig& config,
                        DerivativeMode mode = DerivativeMode::Analytic,
                        double check_abs = 1e-5, double check_rel = 1e-4);

// Residuals of all active blocks, stacked in the fixed block order.
Eigen::VectorXd stackedResidual(const ParameterSet& params, const MeasureSet& measures,
                                const ProblemConfig& config);

// Central finite-difference Jacobian over the same layout, step h.
Eigen::MatrixXd finiteDifferenceJacobian(const ParameterSet& params, const MeasureSet& measures,
                                         const ProblemConfig& config, double h = 1e-6);

/// Weighted Gauss-Newton system H dx = -g in block form. Pose columns form
/// one dense block; each free flow couples only to itself and to the poses.
struct NormalEquations {
  int pose_dim = 0;
  Eigen::MatrixXd pose_hessian;
  Eigen::VectorXd pose_gradient;
  std::vector<Mat3> flow_hessian;
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, 3>> pose_flow;  // pose_dim x 3
  std::vector<Vec3> flow_gradient;

  static NormalEquations build(const Linearization& lin);

  int dim() const { return pose_dim + 3 * static_cast<int>(flow_hessian.size()); }
  void addDamping(double lambda);
  Eigen::MatrixXd denseHessian() const;
  Eigen::VectorXd denseGradient() const;
  double gradientMaxNorm() const;
};

struct ReducedSystem {
  Eigen::MatrixXd schur;  // pose_dim x pose_dim
  Eigen::VectorXd rhs;
  std::vector<Mat3> flow_hessian_inverse;
  int regularized_blocks = 0;
};

// Eliminates every flow block from the damped normal equations.
ReducedSystem eliminateFlowBlocks(const NormalEquations& ne);

// Back-substitutes a pose step into the full step.
Eigen::VectorXd backSubstitute(const NormalEquations& ne, const ReducedSystem& reduced,
                               const Eigen::VectorXd& pose_step);

// Solves H dx = -g; returns std::nullopt when the factorization fails.
std::optional<Eigen::VectorXd> solveByElimination(const NormalEquations& ne);
std::optional<Eigen::VectorXd> solveDense(const NormalEquations& ne);

ParameterSet applyStep(const ParameterSet& params, const ParameterLayout& layout,
                       const Eigen::VectorXd& step);

struct RankDiagnostics {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  int near_null_count = 0;  // eigenvalues below relative_threshold * max
  double relative_threshold = 1e-12;

  bool deficient() const { return near_null_count > 0; }
};

// Eigen-decomposition of the undamped normal matrix at params.
RankDiagnostics rankDiagnostics(const ParameterSet& params, const MeasureSet& measures,
                                const ProblemConfig& config, double relative_threshold = 1e-12);

enum class InitMode { Identity, AlignedBetween, Custom };
std::string_view toString(InitMode mode);

enum class Termination {
  CostTolerance,
  GradientTolerance,
  MaxIterations,
  NumericalFailure,
  DerivativeCheckFailed
};
std::string_view toString(Termination t);

struct SolveReport {
  ParameterSet params;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  Termination termination = Termination::MaxIterations;
  double wall_time_ms = 0.0;
  std::vector<double> cost_trace;  // initial cost, then each accepted cost
  std::vector<double> iterate_steps;  // norm of each accepted step
  std::vector<ParameterSet> iterates;  // accepted iterates, when recorded
  std::optional<RankDiagnostics> rank;
  double derivative_check_ratio = 0.0;
  InitMode init_mode = InitMode::Identity;
  std::string message;
};

// Levenberg-Marquardt over the manifold parameters, starting from init.
SolveReport solve(const MeasureSet& measures, const ProblemConfig& config,
                  const ParameterSet& init, const SolveOptions& options = {});

// Identity poses and zero flows; AlignedBetween warm-starts the between-camera
// poses from the closed-form alignment of the available point pairs.
ParameterSet initialParameters(const MeasureSet& measures, InitMode mode);

SolveReport solve(const MeasureSet& measures, const ProblemConfig& config, InitMode init_mode,
                  const SolveOptions& options = {});

}  // namespace mvsf
