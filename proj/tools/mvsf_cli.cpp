#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mvsf/harness.hpp"
#include "mvsf/serialization.hpp"
#include "mvsf/synthworld.hpp"

namespace fs = std::filesystem;
using namespace mvsf;

namespace {

constexpr const char* kScenarioDocument = "mvsf.scenario";

// Accepts a scenario document or an experiment document; the latter
// contributes its scenario block.
ScenarioConfig loadScenario(const std::string& path) {
  if (path.empty()) return ScenarioConfig::canonical();
  const Json doc = readJsonFile(path);
  ScenarioConfig config = ScenarioConfig::canonical();
  if (doc.value("kind", "") == kExperimentDocument) {
    return experimentSpecFromJson(payload(doc, kExperimentDocument)).scenario;
  }
  payload(doc, kScenarioDocument).get_to(config);
  config.validate();
  return config;
}

int runGenerate(const std::string& spec, const std::string& out, const std::string& seeds) {
  const ScenarioConfig base = loadScenario(spec);
  const auto seed_list = seeds.empty() ? std::vector<std::uint64_t>{base.seed} : parseSeedList(seeds);
  fs::create_directories(out);
  for (std::uint64_t seed : seed_list) {
    ScenarioConfig config = base;
    config.seed = seed;
    const GroundTruthWorld world = generate(config);
    const MeasureSet measures = deriveMeasures(world, config);
    const fs::path path = fs::path(out) / ("world_" + std::to_string(seed) + ".json");
    const Json data{{"scenario", config}, {"world", world}, {"measures", measures}};
    writeTextFile(path, document(kWorldDocument, data).dump(2) + "\n");
    std::cout << path.string() << ": " << world.points_t0.size() << " points, "
              << measures.size() << " matched\n";
  }
  return 0;
}

int runRun(const std::string& spec_path, const std::string& out, const std::string& seeds,
           int threads) {
  ExperimentSpec spec = experimentSpecFromJson(payload(readJsonFile(spec_path), kExperimentDocument));
  if (!seeds.empty()) spec.seeds = parseSeedList(seeds);
  const auto rows = runExperiment(spec, threads);
  emitResults(rows, spec, out);
  std::size_t failed = 0;
  for (const auto& r : rows) {
    if (!r.failed()) continue;
    ++failed;
    std::cerr << "run failed: sweep " << r.sweep_index << " seed " << r.seed << " ("
              << r.termination << "): " << r.message << "\n";
  }
  std::cout << spec.name << ": " << rows.size() << " runs, " << failed << " failed, results in "
            << out << "\n";
  return failed == 0 ? 0 : 1;
}

int runCheck(const std::string& results_path) {
  const auto rows = rowsFromResultsDocument(readJsonFile(results_path));
  const auto checks = checkResults(rows);
  std::size_t failed = 0;
  for (const auto& c : checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    failed += c.passed ? 0 : 1;
  }
  std::cout << checks.size() - failed << "/" << checks.size() << " checks passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-camera pose and scene-flow estimation: scenario generation and experiments"};
  app.require_subcommand(1);

  std::string spec;
  std::string out = ".";
  std::string seeds;
  int threads = 1;

  auto* gen = app.add_subcommand("generate", "Write ground-truth world and exact measures as JSON");
  gen->add_option("--spec", spec, "Scenario or experiment document (default: canonical scenario)");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--seeds", seeds, "Seeds, e.g. 0-9 or 1,5,7");

  auto* run = app.add_subcommand("run", "Run an experiment spec and write results");
  run->add_option("--spec", spec, "Experiment document")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--seeds", seeds, "Override the spec's seeds");
  run->add_option("--threads", threads, "Concurrent runs")->check(CLI::PositiveNumber);

  auto* check = app.add_subcommand("check", "Evaluate the invariant suite on a results file");
  check->add_option("--spec", spec, "results.json written by run")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return runGenerate(spec, out, seeds);
    if (*run) return runRun(spec, out, seeds, threads);
    if (*check) return runCheck(spec);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
