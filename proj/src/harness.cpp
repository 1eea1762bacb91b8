#include "mvsf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace mvsf {

namespace {

using Clock = std::chrono::steady_clock;

double elapsedMs(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

template <typename E, std::size_t N>
E parseEnum(const std::string& s, const std::array<E, N>& values, const char* what) {
  for (E v : values) {
    if (toString(v) == s) return v;
  }
  throw std::runtime_error(std::string(what) + ": unknown value '" + s + "'");
}

constexpr std::array kTrajectories{Trajectory::MovingA, Trajectory::StaticA};
constexpr std::array kEgoPriors{EgoPrior::Fixed, EgoPrior::Soft};
constexpr std::array kFlowLayouts{FlowLayout::Random, FlowLayout::Colinear};
constexpr std::array kInitModes{InitMode::Identity, InitMode::AlignedBetween};

constexpr double kColinearSpacing = 0.01;
constexpr std::uint64_t kKnownFlowStream = 0x6b6e6f776eULL;
constexpr std::uint64_t kInitStream = 0x696e6974ULL;

std::string formatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

const std::array<std::string, kCompareCount> kCompareNames{"between_t0", "between_t1", "ego_a",
                                                           "ego_b", "flow"};

struct SweepPoint {
  Trajectory trajectory = Trajectory::MovingA;
  EgoPrior prior = EgoPrior::Fixed;
  FlowLayout layout = FlowLayout::Random;
  std::size_t target_points = 0;
  std::size_t known = 0;
  std::size_t noise_index = 0;
  std::size_t index = 0;
};

std::string variantLabel(const ExperimentSpec& spec, const SweepPoint& p) {
  std::string label(toString(p.trajectory));
  if (spec.experiment == 1) label += "|" + std::string(toString(p.prior));
  if (spec.experiment == 2 || spec.experiment == 3) label += "|" + std::string(toString(p.layout));
  return label;
}

std::vector<SweepPoint> sweepPoints(const ExperimentSpec& spec) {
  std::vector<SweepPoint> out;
  const std::vector<std::size_t> counts =
      spec.point_counts.empty() ? std::vector<std::size_t>{spec.scenario.num_points}
                                : spec.point_counts;
  const std::vector<EgoPrior> priors =
      spec.experiment == 1 ? spec.ego_priors : std::vector<EgoPrior>{EgoPrior::Fixed};
  const std::vector<FlowLayout> layouts =
      spec.experiment >= 2 ? spec.flow_layouts : std::vector<FlowLayout>{FlowLayout::Random};
  const std::vector<std::size_t> knowns =
      spec.experiment >= 2 ? spec.known_flow_counts : std::vector<std::size_t>{0};
  for (Trajectory t : spec.trajectories)
    for (EgoPrior pr : priors)
      for (FlowLayout l : layouts)
        for (std::size_t n : counts)
          for (std::size_t k : knowns)
            for (std::size_t ni = 0; ni < spec.noise_sweep.size(); ++ni) {
              out.push_back({t, pr, l, n, k, ni, out.size()});
            }
  return out;
}

std::vector<std::size_t> shuffledIndices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = noiseStream(seed, kKnownFlowStream, 0);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
  return idx;
}

std::optional<std::size_t> indexOfId(const MeasureSet& m, std::size_t id) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.pointId(i) == id) return i;
  }
  return std::nullopt;
}

void setAvailability(MeasureSet& m, int experiment, bool between) {
  m.available.reset();
  for (Measure pm : {Measure::PointsAT0, Measure::PointsBT0, Measure::PointsAT1, Measure::PointsBT1})
    m.setAvailable(pm);
  const bool with_between = experiment == 3 || (experiment <= 1 && between);
  m.setAvailable(Measure::BetweenT0, with_between);
  m.setAvailable(Measure::BetweenT1, with_between);
  m.setAvailable(Measure::EgoA, experiment == 1 || experiment == 3);
  m.setAvailable(Measure::EgoB, experiment == 3);
  m.setAvailable(Measure::Flow, experiment >= 2);
}

ProblemConfig buildConfig(const ExperimentSpec& spec, const SweepPoint& p, const MeasureSet& m,
                          const std::vector<std::size_t>& known) {
  ProblemConfig c;
  c.rho = spec.rho;
  for (Block b : {Block::DataAssocT0, Block::DataAssocT1, Block::SceneFlowA, Block::SceneFlowB})
    c.setActive(b);
  c.setActive(Block::PriorBetweenT0, m.has(Measure::BetweenT0));
  c.setActive(Block::PriorBetweenT1, m.has(Measure::BetweenT1));
  c.setActive(Block::KinematicChain, m.has(Measure::BetweenT1));
  const bool ego_a_fixed = spec.experiment == 1 && p.prior == EgoPrior::Fixed;
  c.setActive(Block::PriorEgoA, m.has(Measure::EgoA) && !ego_a_fixed);
  c.setActive(Block::PriorEgoB, m.has(Measure::EgoB));
  if (m.has(Measure::Flow) && !known.empty()) {
    c.setActive(Block::PriorFlow);
    c.known_flow_indices = known;
  }
  for (Block b : spec.disabled_blocks) c.setActive(b, false);
  return c;
}

std::vector<Vec3> observedProbes(const MeasureSet& m, Param p) {
  switch (p) {
    case Param::BetweenT0: return coordinates(m.points_b_t0);
    case Param::BetweenT1: return coordinates(m.points_b_t1);
    case Param::EgoA: return coordinates(m.points_a_t1);
    case Param::EgoB: return coordinates(m.points_b_t1);
  }
  return {};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ResultRow runOne(const ExperimentSpec& spec, const SweepPoint& p, std::uint64_t seed) {
  ResultRow row;
  row.experiment = spec.experiment;
  row.variant = variantLabel(spec, p);
  row.sweep_index = p.index;
  row.seed = seed;
  row.target_points = p.target_points;
  row.noise = spec.noise_sweep[p.noise_index];
  try {
    const auto setup_start = Clock::now();
    ScenarioConfig cfg = spec.scenario;
    cfg.seed = spec.scenario.seed + seed;
    cfg.num_points = p.target_points;
    if (p.trajectory == Trajectory::StaticA) cfg.camera_a.t1 = cfg.camera_a.t0;
    GroundTruthWorld world = generate(cfg);
    MeasureSet truth = deriveMeasures(world, cfg);

    std::vector<std::size_t> known;
    const std::size_t k = spec.experiment >= 2 ? std::min(p.known, truth.size()) : 0;
    if (p.layout == FlowLayout::Colinear && k >= 2) {
      const auto order = shuffledIndices(truth.size(), seed);
      bool placed = false;
      for (std::size_t a = 0; a + 1 < order.size() && a < 20 && !placed; ++a) {
        const std::size_t first = truth.pointId(order[a]);
        const std::size_t second = truth.pointId(order[a + 1]);
        GroundTruthWorld moved = withColinearTrajectories(world, first, second, kColinearSpacing);
        MeasureSet candidate;
        try {
          candidate = deriveMeasures(moved, cfg);
        } catch (const std::runtime_error&) {
          continue;
        }
        const auto i0 = indexOfId(candidate, first);
        const auto i1 = indexOfId(candidate, second);
        if (!i0 || !i1) continue;
        world = std::move(moved);
        truth = std::move(candidate);
        known = {*i0, *i1};
        for (std::size_t i : shuffledIndices(truth.size(), seed)) {
          if (known.size() >= k) break;
          if (i != *i0 && i != *i1) known.push_back(i);
        }
        placed = true;
      }
      if (!placed) throw std::runtime_error("could not place colinear known flows");
    } else {
      const auto order = shuffledIndices(truth.size(), seed);
      known.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    }
    std::sort(known.begin(), known.end());
    row.num_points = truth.size();
    row.known_flows = known.size();

    setAvailability(truth, spec.experiment, spec.between_measures);
    NoiseSpec noise = spec.noise_sweep[p.noise_index];
    noise.seed += seed;
    const NoisyMeasures noisy = perturbMeasures(truth, noise);
    const MeasureSet& measures = noisy.measures;

    const ProblemConfig config = buildConfig(spec, p, measures, known);
    config.validate(measures);
    ParameterSet init = initialParameters(measures, spec.init);
    if (spec.experiment == 1 && p.prior == EgoPrior::Fixed) {
      init.pose(Param::EgoA) = measures.ego_a;
      init.setFixed(Param::EgoA);
    }
    row.setup_ms = elapsedMs(setup_start);

    SolveOptions options = spec.solve;
    const bool check_ambiguity = spec.ambiguity_inits >= 2;
    if (check_ambiguity) options.compute_rank_diagnostics = true;
    const SolveReport report = solve(measures, config, init, options);
    std::vector<double> times{report.wall_time_ms};
    SolveOptions timing_options = spec.solve;
    timing_options.compute_rank_diagnostics = false;
    for (int r = 1; r < spec.timing_repeats; ++r) {
      times.push_back(solve(measures, config, init, timing_options).wall_time_ms);
    }
    row.solve_ms = median(times);

    row.errors = outputErrors(report.params, truth, known);
    row.errors.in_da = noisy.realized.in_da;
    row.errors.in_tf = noisy.realized.in_tf;
    if (!known.empty()) {
      std::vector<Vec3> gt_known;
      std::vector<Vec3> noisy_known;
      for (std::size_t i : known) {
        gt_known.push_back(truth.flow[i].delta);
        noisy_known.push_back(measures.flow[i].delta);
      }
      row.errors.in_sf = addPoints(gt_known, noisy_known);
    }
    row.initial_cost = report.initial_cost;
    row.final_cost = report.final_cost;
    row.iterations = report.iterations;
    row.termination = std::string(toString(report.termination));
    row.message = report.message;
    if (report.rank) {
      row.rank_min_eigenvalue = report.rank->min_eigenvalue;
      row.rank_max_eigenvalue = report.rank->max_eigenvalue;
      row.rank_near_null = report.rank->near_null_count;
    }
    if (check_ambiguity) {
      const auto inits =
          randomInits(init, static_cast<std::size_t>(spec.ambiguity_inits), seed);
      const AmbiguityReport amb = detectAmbiguity(measures, config, spec.solve, inits);
      row.ambiguity = std::string(toString(amb.verdict));
      row.disagreement = amb.disagreement;
      row.ambiguity_cost_spread = amb.cost_spread;
    }
  } catch (const std::exception& e) {
    row.termination = "error";
    row.message = e.what();
  }
  return row;
}

}  // namespace

std::string_view toString(EgoPrior p) { return p == EgoPrior::Fixed ? "fixed" : "soft"; }
std::string_view toString(Trajectory t) {
  return t == Trajectory::MovingA ? "moving_a" : "static_a";
}
std::string_view toString(FlowLayout l) { return l == FlowLayout::Random ? "random" : "colinear"; }
std::string_view toString(Verdict v) { return v == Verdict::Unique ? "unique" : "ambiguous"; }

ExperimentSpec ExperimentSpec::defaults(int experiment) {
  ExperimentSpec s;
  s.experiment = experiment;
  s.name = "experiment" + std::to_string(experiment);
  const double radius = s.scenario.characteristicRadius();
  switch (experiment) {
    case 0:
      s.between_measures = true;
      s.ambiguity_inits = 4;
      break;
    case 1: {
      s.trajectories = {Trajectory::MovingA, Trajectory::StaticA};
      s.ego_priors = {EgoPrior::Fixed, EgoPrior::Soft};
      s.noise_sweep.clear();
      for (int mm = 0; mm <= 10; ++mm) {
        NoiseSpec n;
        n.sigma_point = sigmaForAdd(1e-3 * mm);
        s.noise_sweep.push_back(n);
      }
      break;
    }
    case 2: {
      s.known_flow_counts = {1, 2, 3, 5, 10, 20};
      s.noise_sweep.clear();
      for (double mm : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        NoiseSpec n;
        n.sigma_flow = sigmaForAdd(1e-3 * mm);
        s.noise_sweep.push_back(n);
      }
      break;
    }
    case 3: {
      s.known_flow_counts = {0, 1, 2, 5, 10, 20, 30, 40, 50};
      NoiseSpec n;
      n.sigma_point = sigmaForAdd(1e-3);
      n.sigma_flow = sigmaForAdd(1e-3);
      n.sigma_trans = sigmaForAdd(1e-3);
      n.sigma_rot = rotationSigmaAtRadius(n.sigma_trans, radius);
      s.noise_sweep = {n};
      break;
    }
    default:
      throw std::invalid_argument("experiment id must be 0..3");
  }
  return s;
}

void ExperimentSpec::validate() const {
  if (experiment < 0 || experiment > 3) throw std::invalid_argument("experiment id must be 0..3");
  if (trajectories.empty() || ego_priors.empty() || flow_layouts.empty() || noise_sweep.empty() ||
      known_flow_counts.empty() || seeds.empty()) {
    throw std::invalid_argument("experiment sweep lists must be nonempty");
  }
  for (std::size_t n : point_counts) {
    if (n == 0) throw std::invalid_argument("point counts must be positive");
  }
  for (const auto& n : noise_sweep) n.validate();
  for (double r : rho) {
    if (!(r >= 0.0)) throw std::invalid_argument("rho must be nonnegative");
  }
  if (timing_repeats < 1) throw std::invalid_argument("timing_repeats must be >= 1");
  scenario.validate();
  solve.validate();
}

void to_json(Json& j, const ExperimentSpec& s) {
  Json traj = Json::array();
  for (auto t : s.trajectories) traj.push_back(toString(t));
  Json priors = Json::array();
  for (auto p : s.ego_priors) priors.push_back(toString(p));
  Json layouts = Json::array();
  for (auto l : s.flow_layouts) layouts.push_back(toString(l));
  Json rho = Json::object();
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    rho[std::string(blockKey(static_cast<Block>(b)))] = s.rho[b];
  }
  Json disabled = Json::array();
  for (Block b : s.disabled_blocks) disabled.push_back(blockKey(b));
  j = Json{{"name", s.name},
           {"experiment", s.experiment},
           {"scenario", s.scenario},
           {"trajectories", traj},
           {"ego_priors", priors},
           {"flow_layouts", layouts},
           {"noise_sweep", s.noise_sweep},
           {"known_flow_counts", s.known_flow_counts},
           {"point_counts", s.point_counts},
           {"seeds", s.seeds},
           {"solve", s.solve},
           {"init", toString(s.init)},
           {"between_measures", s.between_measures},
           {"rho", rho},
           {"disabled_blocks", disabled},
           {"ambiguity_inits", s.ambiguity_inits},
           {"timing_repeats", s.timing_repeats}};
}

ExperimentSpec experimentSpecFromJson(const Json& j) {
  requireKnownKeys(j,
                   {"name", "experiment", "scenario", "trajectories", "ego_priors", "flow_layouts",
                    "noise_sweep", "known_flow_counts", "point_counts", "seeds", "solve", "init",
                    "between_measures", "rho", "disabled_blocks", "ambiguity_inits",
                    "timing_repeats"},
                   "experiment");
  if (!j.contains("experiment")) throw std::runtime_error("experiment: missing 'experiment' id");
  ExperimentSpec s = ExperimentSpec::defaults(j.at("experiment").get<int>());
  if (j.contains("name")) s.name = j.at("name").get<std::string>();
  if (j.contains("scenario")) j.at("scenario").get_to(s.scenario);
  if (j.contains("trajectories")) {
    s.trajectories.clear();
    for (const auto& t : j.at("trajectories"))
      s.trajectories.push_back(parseEnum(t.get<std::string>(), kTrajectories, "trajectories"));
  }
  if (j.contains("ego_priors")) {
    s.ego_priors.clear();
    for (const auto& p : j.at("ego_priors"))
      s.ego_priors.push_back(parseEnum(p.get<std::string>(), kEgoPriors, "ego_priors"));
  }
  if (j.contains("flow_layouts")) {
    s.flow_layouts.clear();
    for (const auto& l : j.at("flow_layouts"))
      s.flow_layouts.push_back(parseEnum(l.get<std::string>(), kFlowLayouts, "flow_layouts"));
  }
  if (j.contains("noise_sweep")) {
    s.noise_sweep.clear();
    const double radius = s.scenario.characteristicRadius();
    for (Json entry : j.at("noise_sweep")) {
      NoiseSpec n;
      if (auto it = entry.find("sigma_pose"); it != entry.end()) {
        n.sigma_trans = it->get<double>();
        n.sigma_rot = rotationSigmaAtRadius(n.sigma_trans, radius);
        entry.erase("sigma_pose");
      }
      entry.get_to(n);
      s.noise_sweep.push_back(n);
    }
  }
  if (j.contains("known_flow_counts")) j.at("known_flow_counts").get_to(s.known_flow_counts);
  if (j.contains("point_counts")) j.at("point_counts").get_to(s.point_counts);
  if (j.contains("seeds")) j.at("seeds").get_to(s.seeds);
  if (j.contains("solve")) j.at("solve").get_to(s.solve);
  if (j.contains("init"))
    s.init = parseEnum(j.at("init").get<std::string>(), kInitModes, "init");
  if (j.contains("between_measures")) s.between_measures = j.at("between_measures").get<bool>();
  if (j.contains("rho")) {
    for (auto it = j.at("rho").begin(); it != j.at("rho").end(); ++it) {
      const auto b = blockFromKey(it.key());
      if (!b) throw std::runtime_error("rho: unknown block '" + it.key() + "'");
      s.rho[static_cast<std::size_t>(*b)] = it.value().get<double>();
    }
  }
  if (j.contains("disabled_blocks")) {
    s.disabled_blocks.clear();
    for (const auto& k : j.at("disabled_blocks")) {
      const auto b = blockFromKey(k.get<std::string>());
      if (!b) throw std::runtime_error("disabled_blocks: unknown block " + k.dump());
      s.disabled_blocks.push_back(*b);
    }
  }
  if (j.contains("ambiguity_inits")) s.ambiguity_inits = j.at("ambiguity_inits").get<int>();
  if (j.contains("timing_repeats")) s.timing_repeats = j.at("timing_repeats").get<int>();
  s.validate();
  return s;
}

std::vector<std::string> AmbiguityReport::ambiguousParameters(double threshold) const {
  std::vector<std::string> out;
  for (int i = 0; i < kCompareCount; ++i) {
    if (free[static_cast<std::size_t>(i)] && disagreement[static_cast<std::size_t>(i)] > threshold)
      out.push_back(kCompareNames[static_cast<std::size_t>(i)]);
  }
  return out;
}

AmbiguityReport detectAmbiguity(const MeasureSet& measures, const ProblemConfig& config,
                                const SolveOptions& options, const std::vector<ParameterSet>& inits,
                                double cost_tolerance, double disagreement_threshold) {
  if (inits.size() < 2) throw std::invalid_argument("ambiguity check needs at least two inits");
  AmbiguityReport out;
  std::vector<ParameterSet> solutions;
  for (std::size_t i = 0; i < inits.size(); ++i) {
    SolveOptions o = options;
    o.compute_rank_diagnostics = i == 0;
    SolveReport r = solve(measures, config, inits[i], o);
    if (r.rank) out.rank = *r.rank;
    out.final_costs.push_back(r.final_cost);
    solutions.push_back(std::move(r.params));
  }
  const auto [lo, hi] = std::minmax_element(out.final_costs.begin(), out.final_costs.end());
  out.cost_spread = *hi - *lo;

  const ParameterSet& base = inits.front();
  for (int p = 0; p < kPoseParamCount; ++p) out.free[static_cast<std::size_t>(p)] = !base.fixed(static_cast<Param>(p));
  out.free[kPoseParamCount] =
      std::find(base.flow_fixed.begin(), base.flow_fixed.end(), false) != base.flow_fixed.end();

  std::array<std::vector<Vec3>, kPoseParamCount> probes;
  for (int p = 0; p < kPoseParamCount; ++p)
    probes[static_cast<std::size_t>(p)] = observedProbes(measures, static_cast<Param>(p));
  for (std::size_t a = 0; a < solutions.size(); ++a) {
    for (std::size_t b = a + 1; b < solutions.size(); ++b) {
      for (int p = 0; p < kPoseParamCount; ++p) {
        const Param param = static_cast<Param>(p);
        const double d = addTransform(solutions[a].pose(param), solutions[b].pose(param),
                                      probes[static_cast<std::size_t>(p)]);
        auto& slot = out.disagreement[static_cast<std::size_t>(p)];
        slot = std::max(slot, d);
      }
      auto& flow_slot = out.disagreement[kPoseParamCount];
      flow_slot = std::max(flow_slot, addFlow(solutions[a].flow, solutions[b].flow));
    }
  }
  bool disagrees = false;
  for (int i = 0; i < kCompareCount; ++i) {
    const auto u = static_cast<std::size_t>(i);
    disagrees = disagrees || (out.free[u] && out.disagreement[u] > disagreement_threshold);
  }
  out.verdict = out.cost_spread <= cost_tolerance && disagrees && out.rank.deficient()
                    ? Verdict::Ambiguous
                    : Verdict::Unique;
  return out;
}

std::vector<ParameterSet> randomInits(const ParameterSet& base, std::size_t count,
                                      std::uint64_t seed) {
  std::vector<ParameterSet> out{base};
  for (std::size_t i = 1; i < count; ++i) {
    Rng rng = noiseStream(seed, kInitStream, i);
    ParameterSet p = base;
    for (int k = 0; k < kPoseParamCount; ++k) {
      const Param param = static_cast<Param>(k);
      if (p.fixed(param)) continue;
      p.pose(param) = perturbPose(p.pose(param), 0.02, 0.3, rng);
    }
    for (std::size_t f = 0; f < p.size(); ++f) {
      if (p.flow_fixed[f]) continue;
      p.flow[f].delta = perturbVector(p.flow[f].delta, 0.005, rng);
    }
    out.push_back(std::move(p));
  }
  return out;
}

bool ResultRow::failed() const {
  return termination == "error" || termination == toString(Termination::NumericalFailure) ||
         termination == toString(Termination::DerivativeCheckFailed);
}

void to_json(Json& j, const ResultRow& r) {
  j = Json{{"experiment", r.experiment},
           {"variant", r.variant},
           {"sweep_index", r.sweep_index},
           {"seed", r.seed},
           {"target_points", r.target_points},
           {"num_points", r.num_points},
           {"known_flows", r.known_flows},
           {"noise", r.noise},
           {"in_da", r.errors.in_da},
           {"in_tf", r.errors.in_tf},
           {"in_sf", r.errors.in_sf},
           {"out_tf", r.errors.out_tf},
           {"out_sf", r.errors.out_sf},
           {"out_sf_unknown", r.errors.out_sf_unknown},
           {"probes", r.errors.probes},
           {"initial_cost", r.initial_cost},
           {"final_cost", r.final_cost},
           {"iterations", r.iterations},
           {"termination", r.termination},
           {"solve_ms", r.solve_ms},
           {"setup_ms", r.setup_ms},
           {"rank_min_eigenvalue", r.rank_min_eigenvalue},
           {"rank_max_eigenvalue", r.rank_max_eigenvalue},
           {"rank_near_null", r.rank_near_null},
           {"ambiguity", r.ambiguity},
           {"disagreement", r.disagreement},
           {"ambiguity_cost_spread", r.ambiguity_cost_spread},
           {"message", r.message}};
}

void from_json(const Json& j, ResultRow& r) {
  j.at("experiment").get_to(r.experiment);
  j.at("variant").get_to(r.variant);
  j.at("sweep_index").get_to(r.sweep_index);
  j.at("seed").get_to(r.seed);
  j.at("target_points").get_to(r.target_points);
  j.at("num_points").get_to(r.num_points);
  j.at("known_flows").get_to(r.known_flows);
  j.at("noise").get_to(r.noise);
  j.at("in_da").get_to(r.errors.in_da);
  j.at("in_tf").get_to(r.errors.in_tf);
  j.at("in_sf").get_to(r.errors.in_sf);
  j.at("out_tf").get_to(r.errors.out_tf);
  j.at("out_sf").get_to(r.errors.out_sf);
  j.at("out_sf_unknown").get_to(r.errors.out_sf_unknown);
  j.at("probes").get_to(r.errors.probes);
  j.at("initial_cost").get_to(r.initial_cost);
  j.at("final_cost").get_to(r.final_cost);
  j.at("iterations").get_to(r.iterations);
  j.at("termination").get_to(r.termination);
  j.at("solve_ms").get_to(r.solve_ms);
  j.at("setup_ms").get_to(r.setup_ms);
  j.at("rank_min_eigenvalue").get_to(r.rank_min_eigenvalue);
  j.at("rank_max_eigenvalue").get_to(r.rank_max_eigenvalue);
  j.at("rank_near_null").get_to(r.rank_near_null);
  j.at("ambiguity").get_to(r.ambiguity);
  j.at("disagreement").get_to(r.disagreement);
  j.at("ambiguity_cost_spread").get_to(r.ambiguity_cost_spread);
  j.at("message").get_to(r.message);
}

std::vector<ResultRow> runExperiment(const ExperimentSpec& spec, int threads) {
  spec.validate();
  const auto points = sweepPoints(spec);
  const std::size_t total = points.size() * spec.seeds.size();
  std::vector<ResultRow> rows(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < total; t = next++) {
      const auto& p = points[t / spec.seeds.size()];
      rows[t] = runOne(spec, p, spec.seeds[t % spec.seeds.size()]);
    }
  };
  const int count = std::max(1, std::min<int>(threads, static_cast<int>(total)));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < count; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return rows;
}

const std::vector<std::string> kResultColumns{
    "experiment",      "variant",         "sweep_index",         "seed",
    "target_points",   "num_points",      "known_flows",         "sigma_point",
    "sigma_flow",      "sigma_trans",     "sigma_rot",           "noise_association",
    "in_da",           "in_tf",           "in_sf",               "out_between_t0",
    "out_between_t1",  "out_ego_a",       "out_ego_b",           "out_flow",
    "out_flow_unknown", "initial_cost",   "final_cost",          "iterations",
    "termination",     "rank_min_eigenvalue", "rank_max_eigenvalue", "rank_near_null",
    "ambiguity",       "disagree_between_t0", "disagree_between_t1", "disagree_ego_a",
    "disagree_ego_b",  "disagree_flow",   "ambiguity_cost_spread", "message"};

std::string resultsCsv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  for (std::size_t c = 0; c < kResultColumns.size(); ++c) out << (c ? "," : "") << kResultColumns[c];
  out << '\n';
  for (const auto& r : rows) {
    std::vector<std::string> f{std::to_string(r.experiment),
                               csvField(r.variant),
                               std::to_string(r.sweep_index),
                               std::to_string(r.seed),
                               std::to_string(r.target_points),
                               std::to_string(r.num_points),
                               std::to_string(r.known_flows),
                               formatDouble(r.noise.sigma_point),
                               formatDouble(r.noise.sigma_flow),
                               formatDouble(r.noise.sigma_trans),
                               formatDouble(r.noise.sigma_rot),
                               std::string(toString(r.noise.association)),
                               formatDouble(r.errors.in_da),
                               formatDouble(r.errors.in_tf),
                               formatDouble(r.errors.in_sf)};
    for (double v : r.errors.out_tf) f.push_back(formatDouble(v));
    f.push_back(formatDouble(r.errors.out_sf));
    f.push_back(formatDouble(r.errors.out_sf_unknown));
    f.push_back(formatDouble(r.initial_cost));
    f.push_back(formatDouble(r.final_cost));
    f.push_back(std::to_string(r.iterations));
    f.push_back(csvField(r.termination));
    f.push_back(formatDouble(r.rank_min_eigenvalue));
    f.push_back(formatDouble(r.rank_max_eigenvalue));
    f.push_back(std::to_string(r.rank_near_null));
    f.push_back(r.ambiguity);
    for (double v : r.disagreement) f.push_back(formatDouble(v));
    f.push_back(formatDouble(r.ambiguity_cost_spread));
    f.push_back(csvField(r.message));
    for (std::size_t c = 0; c < f.size(); ++c) out << (c ? "," : "") << f[c];
    out << '\n';
  }
  return out.str();
}

std::string timingCsv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  out << "experiment,variant,sweep_index,seed,num_points,known_flows,iterations,solve_ms,setup_ms\n";
  for (const auto& r : rows) {
    out << r.experiment << ',' << csvField(r.variant) << ',' << r.sweep_index << ',' << r.seed << ','
        << r.num_points << ',' << r.known_flows << ',' << r.iterations << ','
        << formatDouble(r.solve_ms) << ',' << formatDouble(r.setup_ms) << '\n';
  }
  return out.str();
}

const std::vector<std::string> kSeriesMetrics{
    "in_da",     "in_tf",     "in_sf",    "out_between_t0", "out_between_t1",
    "out_ego_a", "out_ego_b", "out_flow", "out_flow_unknown", "final_cost",
    "iterations", "num_points", "solve_ms", "setup_ms"};

double metricValue(const ResultRow& r, std::string_view m) {
  if (m == "in_da") return r.errors.in_da;
  if (m == "in_tf") return r.errors.in_tf;
  if (m == "in_sf") return r.errors.in_sf;
  if (m == "out_between_t0") return r.errors.out_tf[0];
  if (m == "out_between_t1") return r.errors.out_tf[1];
  if (m == "out_ego_a") return r.errors.out_tf[2];
  if (m == "out_ego_b") return r.errors.out_tf[3];
  if (m == "out_flow") return r.errors.out_sf;
  if (m == "out_flow_unknown") return r.errors.out_sf_unknown;
  if (m == "final_cost") return r.final_cost;
  if (m == "iterations") return r.iterations;
  if (m == "num_points") return static_cast<double>(r.num_points);
  if (m == "solve_ms") return r.solve_ms;
  if (m == "setup_ms") return r.setup_ms;
  throw std::invalid_argument("unknown metric " + std::string(m));
}

std::array<double, 2> SeriesPoint::stat(std::string_view metric) const {
  for (const auto& [name, v] : stats) {
    if (name == metric) return v;
  }
  throw std::invalid_argument("unknown metric " + std::string(metric));
}

std::vector<SeriesPoint> aggregate(const std::vector<ResultRow>& rows) {
  std::map<std::pair<int, std::size_t>, std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) {
    if (!r.failed()) groups[{r.experiment, r.sweep_index}].push_back(&r);
  }
  std::vector<SeriesPoint> out;
  for (const auto& [key, members] : groups) {
    const ResultRow& first = *members.front();
    SeriesPoint s;
    s.experiment = first.experiment;
    s.variant = first.variant;
    s.sweep_index = first.sweep_index;
    s.target_points = first.target_points;
    s.known_flows = first.known_flows;
    s.noise = first.noise;
    s.count = members.size();
    for (const auto* r : members) s.max_near_null = std::max(s.max_near_null, r->rank_near_null);
    for (const auto& m : kSeriesMetrics) {
      double sum = 0.0;
      for (const auto* r : members) sum += metricValue(*r, m);
      const double mean = sum / static_cast<double>(s.count);
      double sq = 0.0;
      for (const auto* r : members) sq += std::pow(metricValue(*r, m) - mean, 2);
      const double sd = s.count > 1 ? std::sqrt(sq / static_cast<double>(s.count - 1)) : 0.0;
      s.stats.push_back({m, {mean, sd}});
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string seriesCsv(const std::vector<SeriesPoint>& series) {
  std::ostringstream out;
  out << "experiment,variant,sweep_index,target_points,known_flows,sigma_point,sigma_flow,"
         "sigma_trans,sigma_rot,count";
  for (const auto& m : kSeriesMetrics) out << ',' << m << "_mean," << m << "_std";
  out << '\n';
  for (const auto& s : series) {
    out << s.experiment << ',' << csvField(s.variant) << ',' << s.sweep_index << ','
        << s.target_points << ',' << s.known_flows << ',' << formatDouble(s.noise.sigma_point)
        << ',' << formatDouble(s.noise.sigma_flow) << ',' << formatDouble(s.noise.sigma_trans)
        << ',' << formatDouble(s.noise.sigma_rot) << ',' << s.count;
    for (const auto& [name, v] : s.stats) out << ',' << formatDouble(v[0]) << ',' << formatDouble(v[1]);
    out << '\n';
  }
  return out.str();
}

Json resultsDocument(const std::vector<ResultRow>& rows, const ExperimentSpec& spec) {
  return document(kResultsDocument, Json{{"spec", spec}, {"rows", rows}});
}

std::vector<ResultRow> rowsFromResultsDocument(const Json& doc) {
  return payload(doc, kResultsDocument).at("rows").get<std::vector<ResultRow>>();
}

void emitResults(const std::vector<ResultRow>& rows, const ExperimentSpec& spec,
                 const std::filesystem::path& dir) {
  if (rows.empty()) throw std::invalid_argument("no result rows to emit");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  writeTextFile(dir / "results.csv", resultsCsv(rows));
  writeTextFile(dir / "timing.csv", timingCsv(rows));
  writeTextFile(dir / "series.csv", seriesCsv(aggregate(rows)));
  writeTextFile(dir / "results.json", resultsDocument(rows, spec).dump(2) + "\n");
}

double linearFitR2(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit needs >= 2 pairs");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (syy == 0.0) return 1.0;
  if (sxx == 0.0) return 0.0;
  return sxy * sxy / (sxx * syy);
}

std::vector<std::uint64_t> parseSeedList(std::string_view text) {
  std::vector<std::uint64_t> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      const auto dash = item.find('-');
      if (dash == std::string::npos) {
        out.push_back(std::stoull(item));
      } else {
        const auto lo = std::stoull(item.substr(0, dash));
        const auto hi = std::stoull(item.substr(dash + 1));
        if (hi < lo) throw std::invalid_argument("descending range");
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
      }
    } catch (const std::exception&) {
      throw std::invalid_argument("bad seed list entry '" + item + "'");
    }
  }
  if (out.empty()) throw std::invalid_argument("empty seed list");
  return out;
}

// ---------------------------------------------------------------------------
// Check suite.

namespace {

struct Curve {
  std::vector<double> x;
  std::vector<std::array<double, 2>> y;
};

Curve curve(std::vector<const SeriesPoint*> pts, std::string_view xmetric, std::string_view ymetric,
            bool x_is_known = false) {
  std::sort(pts.begin(), pts.end(), [&](const SeriesPoint* a, const SeriesPoint* b) {
    return x_is_known ? a->known_flows < b->known_flows
                      : a->stat(xmetric)[0] < b->stat(xmetric)[0];
  });
  Curve c;
  for (const auto* p : pts) {
    c.x.push_back(x_is_known ? static_cast<double>(p->known_flows) : p->stat(xmetric)[0]);
    c.y.push_back(p->stat(ymetric));
  }
  return c;
}

// Index of the first point where the curve moves against the expected
// direction by more than one standard deviation of the earlier point.
std::optional<std::size_t> monotoneViolation(const Curve& c, bool increasing) {
  for (std::size_t i = 1; i < c.y.size(); ++i) {
    const double step = c.y[i][0] - c.y[i - 1][0];
    const double slack = c.y[i - 1][1];
    if (increasing ? step < -slack : step > slack) return i;
  }
  return std::nullopt;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

void add(std::vector<CheckResult>& out, std::string name, bool ok, std::string detail) {
  out.push_back({std::move(name), ok, std::move(detail)});
}

bool zeroNoise(const NoiseSpec& n) {
  return n.sigma_point == 0.0 && n.sigma_flow == 0.0 && n.sigma_trans == 0.0 && n.sigma_rot == 0.0;
}

}  // namespace

std::vector<CheckResult> checkResults(const std::vector<ResultRow>& rows) {
  std::vector<CheckResult> out;
  if (rows.empty()) {
    add(out, "rows_present", false, "no rows");
    return out;
  }
  {
    std::size_t failed = 0;
    std::string first;
    for (const auto& r : rows) {
      if (r.failed()) {
        if (first.empty()) first = r.variant + " seed " + std::to_string(r.seed) + ": " + r.message;
        ++failed;
      }
    }
    add(out, "runs_completed", failed == 0,
        std::to_string(failed) + " of " + std::to_string(rows.size()) + " failed" +
            (first.empty() ? "" : " (" + first + ")"));
  }
  {
    bool ok = true;
    for (const auto& r : rows) {
      for (const auto& m : kSeriesMetrics) {
        const double v = metricValue(r, m);
        ok = ok && std::isfinite(v) && v >= 0.0;
      }
    }
    add(out, "metrics_finite_nonnegative", ok, ok ? "all values finite and >= 0" : "bad value found");
  }

  // Exact recovery on noise-free well-posed runs.
  {
    double worst_add = 0.0, worst_cost = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if ((r.experiment != 1 && r.experiment != 3) || !zeroNoise(r.noise) || r.failed()) continue;
      for (double v : r.errors.out_tf) worst_add = std::max(worst_add, v);
      worst_add = std::max(worst_add, r.errors.out_sf);
      worst_cost = std::max(worst_cost, r.final_cost);
      ++n;
    }
    if (n > 0) {
      add(out, "exact_recovery", worst_add <= 1e-6 && worst_cost <= 1e-15,
          std::to_string(n) + " runs, worst ADD " + fmt(worst_add) + " m, worst cost " +
              fmt(worst_cost));
    }
  }

  const auto series = aggregate(rows);
  std::map<std::pair<int, std::string>, std::vector<const SeriesPoint*>> by_variant;
  for (const auto& s : series) by_variant[{s.experiment, s.variant}].push_back(&s);

  for (const auto& [key, pts] : by_variant) {
    const auto& [exp, variant] = key;
    const std::string tag = "exp" + std::to_string(exp) + "[" + variant + "]";
    if (exp == 1) {
      std::vector<const SeriesPoint*> left;
      for (const auto* p : pts) {
        if (p->noise.sigma_trans == 0.0 && p->noise.sigma_rot == 0.0) left.push_back(p);
      }
      if (left.size() >= 2) {
        for (const char* m : {"out_between_t0", "out_between_t1"}) {
          const auto c = curve(left, "in_da", m);
          const auto bad = monotoneViolation(c, true);
          add(out, tag + " " + m + " grows with in_da", !bad,
              bad ? "drop at in_da " + fmt(c.x[*bad]) : fmt(c.y.front()[0]) + " -> " + fmt(c.y.back()[0]) + " m");
        }
        double max_in = 0.0;
        for (const auto* p : left) max_in = std::max(max_in, p->stat("in_da")[0]);
        for (const char* m : {"out_ego_b", "out_flow"}) {
          double worst = 0.0, at = 0.0;
          for (const auto* p : left) {
            if (p->stat(m)[0] > worst) {
              worst = p->stat(m)[0];
              at = p->stat("in_da")[0];
            }
          }
          add(out, tag + " " + m + " below 1 mm", worst < 1e-3,
              "max mean " + fmt(worst) + " m at in_da " + fmt(at) + " m (sweep to " + fmt(max_in) + " m)");
        }
      }
      std::vector<const SeriesPoint*> with_ego_noise;
      bool any_ego_noise = false;
      for (const auto* p : pts) {
        const bool ego = p->noise.sigma_trans > 0.0 || p->noise.sigma_rot > 0.0;
        any_ego_noise = any_ego_noise || ego;
        if (ego || zeroNoise(p->noise)) with_ego_noise.push_back(p);
      }
      if (any_ego_noise && with_ego_noise.size() >= 2) {
        for (const char* m : {"out_between_t0", "out_between_t1", "out_ego_a", "out_ego_b", "out_flow"}) {
          const auto c = curve(with_ego_noise, "in_da", m);
          const auto bad = monotoneViolation(c, true);
          add(out, tag + " " + m + " grows with association and ego noise", !bad,
              bad ? "drop at in_da " + fmt(c.x[*bad]) : fmt(c.y.front()[0]) + " -> " + fmt(c.y.back()[0]) + " m");
        }
      }
    }
    if (exp == 2) {
      std::map<std::size_t, std::vector<const SeriesPoint*>> by_k;
      std::map<double, std::vector<const SeriesPoint*>> by_sigma;
      for (const auto* p : pts) {
        by_k[p->known_flows].push_back(p);
        by_sigma[p->noise.sigma_flow].push_back(p);
      }
      for (const auto& [k, kp] : by_k) {
        if (k < 3 || kp.size() < 2) continue;
        const auto c = curve(kp, "in_sf", "out_flow");
        const auto bad = monotoneViolation(c, true);
        add(out, tag + " k=" + std::to_string(k) + " out_flow grows with in_sf", !bad,
            bad ? "drop at in_sf " + fmt(c.x[*bad]) : fmt(c.y.front()[0]) + " -> " + fmt(c.y.back()[0]) + " m");
      }
      for (const auto& [sigma, all] : by_sigma) {
        // Rank-deficient points have init-dependent errors.
        std::vector<const SeriesPoint*> sp;
        for (const auto* p : all) {
          if (p->max_near_null <= 0) sp.push_back(p);
        }
        if (sp.size() < 2) continue;
        const auto c = curve(sp, "", "out_flow_unknown", true);
        const auto bad = monotoneViolation(c, false);
        add(out, tag + " sigma_flow=" + fmt(sigma) + " unknown-flow error falls with k", !bad,
            bad ? "rise at k=" + fmt(c.x[*bad]) : fmt(c.y.front()[0]) + " -> " + fmt(c.y.back()[0]) + " m");
      }
    }
    if (exp == 3) {
      using GroupKey = std::tuple<std::size_t, double, double, double, double>;
      std::map<GroupKey, std::vector<const SeriesPoint*>> groups;
      for (const auto* p : pts) {
        groups[{p->target_points, p->noise.sigma_point, p->noise.sigma_flow, p->noise.sigma_trans,
                p->noise.sigma_rot}]
            .push_back(p);
      }
      for (const auto& [g, gp] : groups) {
        std::vector<std::size_t> ks;
        for (const auto* p : gp) ks.push_back(p->known_flows);
        std::sort(ks.begin(), ks.end());
        ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
        if (ks.size() < 2 || ks.back() <= 20 || zeroNoise(gp.front()->noise)) continue;
        for (const char* m : {"out_ego_a", "out_ego_b", "out_flow"}) {
          const auto c = curve(gp, "", m, true);
          const auto bad = monotoneViolation(c, false);
          add(out, tag + " n=" + std::to_string(std::get<0>(g)) + " " + m + " non-increasing in k", !bad,
              bad ? "rise at k=" + fmt(c.x[*bad]) : fmt(c.y.front()[0]) + " -> " + fmt(c.y.back()[0]) + " m");
          std::size_t ref = 0;
          while (ref < c.x.size() && c.x[ref] < 20.0) ++ref;
          double worst = 0.0;
          for (std::size_t i = ref + 1; i < c.x.size(); ++i)
            worst = std::max(worst, std::abs(c.y[i][0] - c.y[ref][0]) / c.y[ref][0]);
          add(out, tag + " n=" + std::to_string(std::get<0>(g)) + " " + m + " stable beyond k=20",
              worst < 0.10, "max relative change " + fmt(100.0 * worst) + "% vs k=" + fmt(c.x[ref]));
        }
      }
      std::map<std::size_t, const SeriesPoint*> by_n;
      for (const auto* p : pts) {
        if (!by_n.count(p->target_points) || p->known_flows < by_n[p->target_points]->known_flows)
          by_n[p->target_points] = p;
      }
      if (by_n.size() >= 3) {
        std::vector<double> xs, ys;
        for (const auto& [n, p] : by_n) {
          xs.push_back(p->stat("num_points")[0]);
          ys.push_back(p->stat("solve_ms")[0]);
        }
        const double r2 = linearFitR2(xs, ys);
        add(out, tag + " solve time linear in n", r2 >= 0.95, "R^2 = " + fmt(r2));
        if (by_n.count(500)) {
          const double t = by_n[500]->stat("solve_ms")[0];
          add(out, tag + " n=500 solve time within 10x of 15 ms", t <= 150.0,
              "mean " + fmt(t) + " ms");
        }
      }
    }
  }

  // Ambiguity verdicts.
  {
    std::map<std::string, std::pair<std::size_t, std::size_t>> tallies;  // name -> (ok, total)
    std::map<std::string, std::string> notes;
    auto tally = [&](const std::string& name, bool ok, const std::string& note) {
      auto& t = tallies[name];
      t.second++;
      if (ok) {
        t.first++;
      } else if (!notes.count(name)) {
        notes[name] = note;
      }
    };
    for (const auto& r : rows) {
      if (r.ambiguity.empty() || r.failed()) continue;
      const bool amb = r.ambiguity == toString(Verdict::Ambiguous);
      const std::string where = r.variant + " seed " + std::to_string(r.seed);
      if (r.experiment == 0) {
        const bool recovered = r.errors.out_tf[0] <= 1e-6 && r.errors.out_tf[1] <= 1e-6;
        tally("exp0 between-camera poses recovered", recovered,
              where + ": " + fmt(r.errors.out_tf[0]) + ", " + fmt(r.errors.out_tf[1]) + " m");
        const bool all_three = r.disagreement[2] > 1e-3 && r.disagreement[3] > 1e-3 &&
                               r.disagreement[4] > 1e-3;
        tally("exp0 ego-motions and flows ambiguous", amb && all_three,
              where + ": verdict " + r.ambiguity + ", disagreement " + fmt(r.disagreement[2]) +
                  "/" + fmt(r.disagreement[3]) + "/" + fmt(r.disagreement[4]) + " m");
      }
      if (r.experiment == 1 && zeroNoise(r.noise)) {
        tally("exp1 unique", !amb, where + ": verdict " + r.ambiguity);
      }
      if (r.experiment == 2 && zeroNoise(r.noise)) {
        double worst = 0.0;
        for (double d : r.disagreement) worst = std::max(worst, d);
        const bool colinear = r.variant.find(toString(FlowLayout::Colinear)) != std::string::npos;
        if (r.known_flows == 1) {
          tally("exp2 k=1 ambiguous", amb, where + ": verdict " + r.ambiguity);
        } else if (r.known_flows == 2 && colinear) {
          tally("exp2 k=2 colinear ambiguous", amb, where + ": verdict " + r.ambiguity);
        } else if (r.known_flows == 2) {
          tally("exp2 k=2 non-colinear unique", !amb && worst <= 1e-6,
                where + ": verdict " + r.ambiguity + ", max disagreement " + fmt(worst) +
                    " m, near-null " + std::to_string(r.rank_near_null));
        } else if (r.known_flows >= 3) {
          tally("exp2 k>=3 unique", !amb && worst <= 1e-6,
                where + ": verdict " + r.ambiguity + ", max disagreement " + fmt(worst) + " m");
        }
      }
    }
    for (const auto& [name, t] : tallies) {
      add(out, name, t.first == t.second,
          std::to_string(t.first) + "/" + std::to_string(t.second) + " runs" +
              (notes.count(name) ? "; first miss " + notes[name] : ""));
    }
  }
  return out;
}

}  // namespace mvsf
