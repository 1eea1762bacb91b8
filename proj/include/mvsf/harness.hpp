#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mvsf/metrics.hpp"
#include "mvsf/noise.hpp"
#include "mvsf/residuals.hpp"
#include "mvsf/serialization.hpp"
#include "mvsf/solver.hpp"
#include "mvsf/synthworld.hpp"

namespace mvsf {

// How a known camera-A ego-motion enters the problem.
enum class EgoPrior { Fixed, Soft };
std::string_view toString(EgoPrior p);

// Camera-A trajectory variants. StaticA pins camera A's t1 pose to its t0 pose.
enum class Trajectory { MovingA, StaticA };
std::string_view toString(Trajectory t);

// Choice of points carrying a known flow. Colinear rebuilds the world so the
// first two chosen points move along one common line.
enum class FlowLayout { Random, Colinear };
std::string_view toString(FlowLayout l);

struct ExperimentSpec {
  std::string name = "experiment";
  int experiment = 1;  // 0..3
  ScenarioConfig scenario = ScenarioConfig::canonical();
  std::vector<Trajectory> trajectories{Trajectory::MovingA};
  std::vector<EgoPrior> ego_priors{EgoPrior::Fixed};  // experiment 1 only
  std::vector<FlowLayout> flow_layouts{FlowLayout::Random};
  std::vector<NoiseSpec> noise_sweep{NoiseSpec{}};
  std::vector<std::size_t> known_flow_counts{0};
  std::vector<std::size_t> point_counts;  // empty: scenario.num_points
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  SolveOptions solve;
  InitMode init = InitMode::Identity;
  // Between-camera measures for experiments 0 and 1.
  bool between_measures = false;
  std::array<double, kBlockCount> rho;
  std::vector<Block> disabled_blocks;
  // Number of solver starts for the ambiguity check; below 2 disables it.
  int ambiguity_inits = 0;
  // Solves repeated per run; the median wall time is reported.
  int timing_repeats = 1;

  ExperimentSpec() { rho.fill(1.0); }
  // Per-experiment defaults for the measure availability and sweep axes.
  static ExperimentSpec defaults(int experiment);
  void validate() const;
};

// Maps an experiment spec to and from its document payload. sweep entries may
// give "sigma_pose", which sets sigma_trans and derives sigma_rot at the
// scenario's characteristic radius.
void to_json(Json& j, const ExperimentSpec& s);
ExperimentSpec experimentSpecFromJson(const Json& j);

enum class Verdict { Unique, Ambiguous };
std::string_view toString(Verdict v);

// Parameters compared by the ambiguity check: the four poses then the flows.
inline constexpr int kCompareCount = kPoseParamCount + 1;

struct AmbiguityReport {
  Verdict verdict = Verdict::Unique;
  std::array<double, kCompareCount> disagreement{};  // max pairwise ADD, meters
  std::array<bool, kCompareCount> free{};
  double cost_spread = 0.0;
  std::vector<double> final_costs;
  RankDiagnostics rank;
  // Free parameters disagreeing by more than the threshold.
  std::vector<std::string> ambiguousParameters(double threshold = 1e-3) const;
};

// Solves from every init. Verdict is Ambiguous when the final costs agree
// within cost_tolerance, some free parameter disagrees by more than
// disagreement_threshold, and the normal matrix at the first solution is
// rank deficient. Needs at least two inits.
AmbiguityReport detectAmbiguity(const MeasureSet& measures, const ProblemConfig& config,
                                const SolveOptions& options, const std::vector<ParameterSet>& inits,
                                double cost_tolerance = 1e-10, double disagreement_threshold = 1e-3);

// base followed by count-1 random perturbations of its free parameters.
std::vector<ParameterSet> randomInits(const ParameterSet& base, std::size_t count,
                                      std::uint64_t seed);

struct ResultRow {
  int experiment = 0;
  std::string variant;
  std::size_t sweep_index = 0;
  std::uint64_t seed = 0;
  std::size_t target_points = 0;
  std::size_t num_points = 0;
  std::size_t known_flows = 0;
  NoiseSpec noise;
  AddRecord errors;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::string termination;
  double solve_ms = 0.0;
  double setup_ms = 0.0;
  double rank_min_eigenvalue = 0.0;
  double rank_max_eigenvalue = 0.0;
  int rank_near_null = -1;  // -1 when not computed
  std::string ambiguity;    // empty when not run
  std::array<double, kCompareCount> disagreement{};
  double ambiguity_cost_spread = 0.0;
  std::string message;

  bool failed() const;
  bool operator==(const ResultRow&) const = default;
};

void to_json(Json& j, const ResultRow& r);
void from_json(const Json& j, ResultRow& r);

// One row per (sweep point, seed), ordered by sweep index then seed.
// threads > 1 runs sweep points concurrently without changing the output.
std::vector<ResultRow> runExperiment(const ExperimentSpec& spec, int threads = 1);

// Deterministic columns; timings live in timingCsv.
std::string resultsCsv(const std::vector<ResultRow>& rows);
std::string timingCsv(const std::vector<ResultRow>& rows);
extern const std::vector<std::string> kResultColumns;

struct SeriesPoint {
  int experiment = 0;
  std::string variant;
  std::size_t sweep_index = 0;
  std::size_t target_points = 0;
  std::size_t known_flows = 0;
  NoiseSpec noise;
  std::size_t count = 0;
  // Largest near-null eigenvalue count over the seeds; -1 when not computed.
  int max_near_null = -1;
  // Metric name -> (mean, sample standard deviation) over seeds.
  std::vector<std::pair<std::string, std::array<double, 2>>> stats;

  std::array<double, 2> stat(std::string_view metric) const;
};

// Names of the aggregated metrics, in column order.
extern const std::vector<std::string> kSeriesMetrics;
double metricValue(const ResultRow& row, std::string_view metric);

std::vector<SeriesPoint> aggregate(const std::vector<ResultRow>& rows);
std::string seriesCsv(const std::vector<SeriesPoint>& series);

// Writes results.csv, timing.csv, results.json and series.csv under dir.
// Throws std::invalid_argument on zero rows and std::runtime_error with the
// path on I/O failure.
void emitResults(const std::vector<ResultRow>& rows, const ExperimentSpec& spec,
                 const std::filesystem::path& dir);

Json resultsDocument(const std::vector<ResultRow>& rows, const ExperimentSpec& spec);
std::vector<ResultRow> rowsFromResultsDocument(const Json& doc);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Invariant suite over a set of result rows. Checks that need data absent
// from the rows are skipped.
std::vector<CheckResult> checkResults(const std::vector<ResultRow>& rows);

// Coefficient of determination of the least-squares line through (x, y).
double linearFitR2(const std::vector<double>& x, const std::vector<double>& y);

// Parses "0-9", "1,4,7" or a mix such as "0-2,8".
std::vector<std::uint64_t> parseSeedList(std::string_view text);

}  // namespace mvsf
