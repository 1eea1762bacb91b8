#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mvsf/harness.hpp"
#include "test_support.hpp"

namespace mvsf {
namespace {

ExperimentSpec smallAssociationSweep() {
  ExperimentSpec s = ExperimentSpec::defaults(1);
  s.seeds = {0, 1, 2};
  s.trajectories = {Trajectory::MovingA};
  s.noise_sweep.resize(3);
  s.scenario.num_points = 40;
  return s;
}

TEST(Harness, CsvIsByteIdenticalAcrossRerunsAndThreads) {
  const ExperimentSpec spec = smallAssociationSweep();
  const auto a = runExperiment(spec, 1);
  const auto b = runExperiment(spec, 1);
  const auto c = runExperiment(spec, 3);
  ASSERT_EQ(a.size(), spec.seeds.size() * spec.noise_sweep.size() * spec.ego_priors.size());
  EXPECT_EQ(resultsCsv(a), resultsCsv(b));
  EXPECT_EQ(resultsCsv(a), resultsCsv(c));
  EXPECT_EQ(resultsCsv(a).substr(0, 20), "experiment,variant,s");
  // Ordered by sweep index, then seed.
  for (std::size_t i = 1; i < a.size(); ++i) {
    EXPECT_TRUE(a[i - 1].sweep_index < a[i].sweep_index ||
                (a[i - 1].sweep_index == a[i].sweep_index && a[i - 1].seed < a[i].seed));
  }
}

TEST(Harness, ResultsDocumentRoundTrip) {
  const ExperimentSpec spec = smallAssociationSweep();
  const auto rows = runExperiment(spec);
  const Json doc = Json::parse(resultsDocument(rows, spec).dump());
  EXPECT_EQ(rowsFromResultsDocument(doc), rows);
}

TEST(Harness, ExperimentSpecRoundTrip) {
  for (int e = 0; e <= 3; ++e) {
    ExperimentSpec s = ExperimentSpec::defaults(e);
    s.disabled_blocks = {Block::PriorBetweenT1};
    s.rho[2] = 0.5;
    const Json j = s;
    EXPECT_EQ(Json(experimentSpecFromJson(j)), j) << "experiment " << e;
  }
}

TEST(Harness, SpecParsingDerivesRotationNoiseAndRejectsUnknownKeys) {
  const Json j = Json::parse(R"({"experiment": 3, "noise_sweep": [{"sigma_pose": 0.001}]})");
  const ExperimentSpec s = experimentSpecFromJson(j);
  ASSERT_EQ(s.noise_sweep.size(), 1u);
  EXPECT_EQ(s.noise_sweep[0].sigma_trans, 0.001);
  EXPECT_NEAR(s.noise_sweep[0].sigma_rot,
              rotationSigmaAtRadius(0.001, s.scenario.characteristicRadius()), 1e-18);
  EXPECT_EQ(s.known_flow_counts, ExperimentSpec::defaults(3).known_flow_counts);

  EXPECT_THROW(experimentSpecFromJson(Json::parse(R"({"experiment": 1, "sedes": [1]})")),
               std::runtime_error);
  EXPECT_THROW(experimentSpecFromJson(Json::parse(R"({"seeds": [1]})")), std::runtime_error);
  EXPECT_THROW(experimentSpecFromJson(Json::parse(R"({"experiment": 7})")), std::invalid_argument);
  EXPECT_THROW(experimentSpecFromJson(Json::parse(R"({"experiment": 1, "rho": {"prior_ego_c": 1}})")),
               std::runtime_error);
  EXPECT_THROW(experimentSpecFromJson(Json::parse(R"({"experiment": 2, "trajectories": ["orbit"]})")),
               std::runtime_error);
}

ResultRow syntheticRow(std::size_t sweep, std::uint64_t seed, double da, double flow) {
  ResultRow r;
  r.experiment = 2;
  r.variant = "v";
  r.sweep_index = sweep;
  r.seed = seed;
  r.num_points = 10 + seed;
  r.errors.in_da = da;
  r.errors.out_sf = flow;
  r.termination = "cost_tolerance";
  return r;
}

TEST(Harness, AggregationMatchesHandStatistics) {
  std::vector<ResultRow> rows;
  const std::vector<double> da{0.1, 0.4, 0.25, 0.05};
  const std::vector<double> fl{1.0, 2.0, 4.0, 8.0};
  for (std::uint64_t s = 0; s < da.size(); ++s) rows.push_back(syntheticRow(0, s, da[s], fl[s]));
  rows.push_back(syntheticRow(1, 0, 3.0, 3.0));
  ResultRow broken = syntheticRow(1, 1, 100.0, 100.0);
  broken.termination = "error";
  rows.push_back(broken);

  const auto series = aggregate(rows);
  ASSERT_EQ(series.size(), 2u);
  EXPECT_EQ(series[0].count, 4u);
  const double mean_da = (0.1 + 0.4 + 0.25 + 0.05) / 4.0;
  double ss = 0.0;
  for (double v : da) ss += (v - mean_da) * (v - mean_da);
  EXPECT_NEAR(series[0].stat("in_da")[0], mean_da, 1e-12);
  EXPECT_NEAR(series[0].stat("in_da")[1], std::sqrt(ss / 3.0), 1e-12);
  EXPECT_NEAR(series[0].stat("out_flow")[0], 3.75, 1e-12);
  EXPECT_NEAR(series[0].stat("num_points")[0], 11.5, 1e-12);
  // Failed rows are left out; a single survivor has zero spread.
  EXPECT_EQ(series[1].count, 1u);
  EXPECT_EQ(series[1].stat("in_da")[0], 3.0);
  EXPECT_EQ(series[1].stat("in_da")[1], 0.0);
  EXPECT_THROW(series[0].stat("nonsense"), std::invalid_argument);

  const std::string csv = seriesCsv(series);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Harness, EmitWritesFilesAndRejectsEmptyInput) {
  const auto dir = std::filesystem::temp_directory_path() / "mvsf_emit_test";
  std::filesystem::remove_all(dir);
  EXPECT_THROW(emitResults({}, ExperimentSpec{}, dir), std::invalid_argument);
  const std::vector<ResultRow> rows{syntheticRow(0, 0, 0.1, 0.2)};
  emitResults(rows, ExperimentSpec::defaults(2), dir);
  for (const char* f : {"results.csv", "timing.csv", "series.csv", "results.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  EXPECT_EQ(rowsFromResultsDocument(readJsonFile(dir / "results.json")), rows);
  std::filesystem::remove_all(dir);
}

TEST(Harness, UnderconstrainedSetupIsAmbiguous) {
  ExperimentSpec s = ExperimentSpec::defaults(0);
  s.seeds = {0, 1};
  const auto rows = runExperiment(s);
  for (const auto& r : rows) {
    EXPECT_EQ(r.ambiguity, "ambiguous");
    EXPECT_LE(r.errors.out_tf[0], 1e-6);
    EXPECT_LE(r.errors.out_tf[1], 1e-6);
    EXPECT_GT(r.disagreement[static_cast<int>(Param::EgoA)], 1e-3);
    EXPECT_GT(r.rank_near_null, 0);
  }
}

TEST(Harness, KnownEgoMotionIsUnique) {
  ExperimentSpec s = ExperimentSpec::defaults(1);
  s.seeds = {0};
  s.noise_sweep.resize(1);
  s.ambiguity_inits = 4;
  for (const auto& r : runExperiment(s)) {
    EXPECT_EQ(r.ambiguity, "unique") << r.variant;
    EXPECT_EQ(r.rank_near_null, 0);
  }
}

TEST(Harness, FullyMeasuredProblemIsUniqueFromManyStarts) {
  const MeasureSet m = testing::canonicalMeasures(17);
  const ProblemConfig c = ProblemConfig::allAvailable(m);
  const auto inits = randomInits(ParameterSet::zeros(m.size()), 5, 3);
  ASSERT_EQ(inits.size(), 5u);
  const AmbiguityReport rep = detectAmbiguity(m, c, SolveOptions{}, inits);
  EXPECT_EQ(rep.verdict, Verdict::Unique);
  EXPECT_TRUE(rep.ambiguousParameters().empty());
  for (double d : rep.disagreement) EXPECT_LT(d, 1e-6);
  EXPECT_THROW(detectAmbiguity(m, c, SolveOptions{}, {inits[0]}), std::invalid_argument);
}

TEST(Harness, RandomInitsRespectFixedParameters) {
  ParameterSet base = ParameterSet::zeros(4);
  base.setFixed(Param::EgoA);
  base.flow_fixed[2] = true;
  const auto inits = randomInits(base, 3, 1);
  for (const auto& p : inits) {
    EXPECT_EQ(p.pose(Param::EgoA).matrix(), base.pose(Param::EgoA).matrix());
    EXPECT_EQ(p.flow[2].delta, base.flow[2].delta);
  }
  EXPECT_NE(inits[1].flow[0].delta, inits[2].flow[0].delta);
}

TEST(Harness, ExactDataPassesChecks) {
  ExperimentSpec s = ExperimentSpec::defaults(3);
  s.seeds = {0, 1};
  s.noise_sweep = {NoiseSpec{}};
  s.known_flow_counts = {0, 5};
  const auto rows = runExperiment(s);
  for (const auto& r : rows) EXPECT_FALSE(r.failed()) << r.message;
  for (const auto& c : checkResults(rows)) {
    if (c.name == "exact_recovery" || c.name == "runs_completed" ||
        c.name == "metrics_finite_nonnegative")
      EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
  }
}

TEST(Harness, BadScenarioProducesErrorRows) {
  ExperimentSpec s = ExperimentSpec::defaults(1);
  s.seeds = {0};
  s.noise_sweep.resize(1);
  s.scenario.half_fov = 0.5 * M_PI / 180.0;
  s.scenario.max_retries = 1;
  const auto rows = runExperiment(s);
  ASSERT_FALSE(rows.empty());
  for (const auto& r : rows) {
    EXPECT_TRUE(r.failed());
    EXPECT_EQ(r.termination, "error");
    EXPECT_FALSE(r.message.empty());
  }
  bool flagged = false;
  for (const auto& c : checkResults(rows))
    if (c.name == "runs_completed") flagged = !c.passed;
  EXPECT_TRUE(flagged);
}

TEST(Harness, SeedListParsing) {
  EXPECT_EQ(parseSeedList("0-2,8"), (std::vector<std::uint64_t>{0, 1, 2, 8}));
  EXPECT_EQ(parseSeedList("5"), (std::vector<std::uint64_t>{5}));
  EXPECT_THROW(parseSeedList("3-1"), std::invalid_argument);
  EXPECT_THROW(parseSeedList("x"), std::invalid_argument);
  EXPECT_THROW(parseSeedList(""), std::invalid_argument);
}

TEST(Harness, LinearFit) {
  EXPECT_NEAR(linearFitR2({1, 2, 3, 4}, {3, 5, 7, 9}), 1.0, 1e-15);
  EXPECT_LT(linearFitR2({1, 2, 3, 4}, {1, -1, 1, -1}), 0.3);
  EXPECT_THROW(linearFitR2({1}, {1}), std::invalid_argument);
}

}  // namespace
}  // namespace mvsf
