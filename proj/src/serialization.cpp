#include "mvsf/serialization.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mvsf {

namespace {

template <typename T>
void readIf(const Json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) it->get_to(out);
}

}  // namespace

void requireKnownKeys(const Json& j, std::initializer_list<const char*> allowed,
                      const char* context) {
  if (!j.is_object()) throw std::runtime_error(std::string(context) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) known = known || it.key() == a;
    if (!known) throw std::runtime_error(std::string(context) + ": unknown key '" + it.key() + "'");
  }
}

void to_json(Json& j, const Posed& p) {
  const auto& q = p.rotation();
  j = Json{{"q", {q.w(), q.x(), q.y(), q.z()}}, {"t", p.translation()}};
}

void from_json(const Json& j, Posed& p) {
  requireKnownKeys(j, {"q", "t"}, "pose");
  Eigen::Quaterniond q = p.rotation();
  Vec3 t = p.translation();
  if (auto it = j.find("q"); it != j.end()) {
    if (!it->is_array() || it->size() != 4) throw std::runtime_error("pose.q: expected [w,x,y,z]");
    q = Eigen::Quaterniond((*it)[0].get<double>(), (*it)[1].get<double>(),
                           (*it)[2].get<double>(), (*it)[3].get<double>());
    if (!(q.norm() > 0.0)) throw std::runtime_error("pose.q: zero quaternion");
  }
  readIf(j, "t", t);
  p = Posed(q, t, p.frames());
}

void to_json(Json& j, const CameraTrajectory& c) { j = Json{{"t0", c.t0}, {"t1", c.t1}}; }

void from_json(const Json& j, CameraTrajectory& c) {
  requireKnownKeys(j, {"t0", "t1"}, "camera");
  readIf(j, "t0", c.t0);
  readIf(j, "t1", c.t1);
}

void to_json(Json& j, const ScenarioConfig& c) {
  j = Json{{"seed", c.seed},
           {"num_points", c.num_points},
           {"extent_x", c.extent_x},
           {"extent_y", c.extent_y},
           {"patch_center", c.patch_center},
           {"patch_relief", c.patch_relief},
           {"amplitude_min", c.amplitude_min},
           {"amplitude_max", c.amplitude_max},
           {"deformation_modes", c.deformation_modes},
           {"camera_a", c.camera_a},
           {"camera_b", c.camera_b},
           {"half_fov", c.half_fov},
           {"near_plane", c.near_plane},
           {"overlap_fraction", c.overlap_fraction},
           {"max_retries", c.max_retries},
           {"match_radius", c.match_radius}};
}

void from_json(const Json& j, ScenarioConfig& c) {
  requireKnownKeys(j,
                   {"seed", "num_points", "extent_x", "extent_y", "patch_center", "patch_relief",
                    "amplitude_min", "amplitude_max", "deformation_modes", "camera_a", "camera_b",
                    "half_fov", "near_plane", "overlap_fraction", "max_retries", "match_radius"},
                   "scenario");
  readIf(j, "seed", c.seed);
  readIf(j, "num_points", c.num_points);
  readIf(j, "extent_x", c.extent_x);
  readIf(j, "extent_y", c.extent_y);
  readIf(j, "patch_center", c.patch_center);
  readIf(j, "patch_relief", c.patch_relief);
  readIf(j, "amplitude_min", c.amplitude_min);
  readIf(j, "amplitude_max", c.amplitude_max);
  readIf(j, "deformation_modes", c.deformation_modes);
  readIf(j, "camera_a", c.camera_a);
  readIf(j, "camera_b", c.camera_b);
  readIf(j, "half_fov", c.half_fov);
  readIf(j, "near_plane", c.near_plane);
  readIf(j, "overlap_fraction", c.overlap_fraction);
  readIf(j, "max_retries", c.max_retries);
  readIf(j, "match_radius", c.match_radius);
}

void to_json(Json& j, const GroundTruthWorld& w) {
  j = Json{{"points_t0", w.points_t0},
           {"points_t1", w.points_t1},
           {"camera_a", w.camera_a},
           {"camera_b", w.camera_b},
           {"lipschitz_bound", w.lipschitz_bound}};
}

void from_json(const Json& j, GroundTruthWorld& w) {
  requireKnownKeys(j, {"points_t0", "points_t1", "camera_a", "camera_b", "lipschitz_bound"},
                   "world");
  readIf(j, "points_t0", w.points_t0);
  readIf(j, "points_t1", w.points_t1);
  readIf(j, "camera_a", w.camera_a);
  readIf(j, "camera_b", w.camera_b);
  readIf(j, "lipschitz_bound", w.lipschitz_bound);
  if (w.points_t0.size() != w.points_t1.size()) {
    throw std::runtime_error("world: points_t0 and points_t1 differ in length");
  }
}

namespace {

std::vector<Vec3> pointCoords(const std::vector<Point3>& pts) {
  std::vector<Vec3> out;
  for (const auto& p : pts) out.push_back(p.coords);
  return out;
}

std::vector<Point3> taggedPoints(const std::vector<Vec3>& coords, Frame frame) {
  std::vector<Point3> out;
  for (const auto& c : coords) out.push_back({c, frame});
  return out;
}

}  // namespace

void to_json(Json& j, const MeasureSet& m) {
  Json available = Json::array();
  for (std::size_t i = 0; i < kMeasureCount; ++i) {
    if (m.available.test(i)) available.push_back(toString(static_cast<Measure>(i)));
  }
  std::vector<Vec3> flow;
  for (const auto& f : m.flow) flow.push_back(f.delta);
  j = Json{{"between_t0", m.between_t0},   {"between_t1", m.between_t1},
           {"ego_a", m.ego_a},             {"ego_b", m.ego_b},
           {"flow", flow},                 {"points_a_t0", pointCoords(m.points_a_t0)},
           {"points_b_t0", pointCoords(m.points_b_t0)},
           {"points_a_t1", pointCoords(m.points_a_t1)},
           {"points_b_t1", pointCoords(m.points_b_t1)},
           {"point_ids", m.point_ids},     {"available", available}};
}

void from_json(const Json& j, MeasureSet& m) {
  requireKnownKeys(j,
                   {"between_t0", "between_t1", "ego_a", "ego_b", "flow", "points_a_t0",
                    "points_b_t0", "points_a_t1", "points_b_t1", "point_ids", "available"},
                   "measures");
  m.between_t0 = m.between_t0.withFrames({Frame::A_t0, Frame::B_t0});
  m.between_t1 = m.between_t1.withFrames({Frame::A_t1, Frame::B_t1});
  m.ego_a = m.ego_a.withFrames({Frame::A_t0, Frame::A_t1});
  m.ego_b = m.ego_b.withFrames({Frame::B_t0, Frame::B_t1});
  readIf(j, "between_t0", m.between_t0);
  readIf(j, "between_t1", m.between_t1);
  readIf(j, "ego_a", m.ego_a);
  readIf(j, "ego_b", m.ego_b);
  if (j.contains("flow")) {
    m.flow.clear();
    for (const auto& f : j.at("flow").get<std::vector<Vec3>>()) m.flow.push_back({f, Frame::B_t0});
  }
  const std::pair<const char*, std::pair<std::vector<Point3>*, Frame>> arrays[] = {
      {"points_a_t0", {&m.points_a_t0, Frame::A_t0}},
      {"points_b_t0", {&m.points_b_t0, Frame::B_t0}},
      {"points_a_t1", {&m.points_a_t1, Frame::A_t1}},
      {"points_b_t1", {&m.points_b_t1, Frame::B_t1}}};
  for (const auto& [key, target] : arrays) {
    if (j.contains(key)) *target.first = taggedPoints(j.at(key).get<std::vector<Vec3>>(), target.second);
  }
  readIf(j, "point_ids", m.point_ids);
  if (j.contains("available")) {
    m.available.reset();
    for (const auto& name : j.at("available")) {
      bool found = false;
      for (std::size_t i = 0; i < kMeasureCount; ++i) {
        if (toString(static_cast<Measure>(i)) == name.get<std::string>()) {
          m.available.set(i);
          found = true;
        }
      }
      if (!found) throw std::runtime_error("measures.available: unknown measure " + name.dump());
    }
  }
  m.validate();
}

void to_json(Json& j, const NoiseSpec& s) {
  j = Json{{"sigma_point", s.sigma_point},
           {"sigma_flow", s.sigma_flow},
           {"sigma_trans", s.sigma_trans},
           {"sigma_rot", s.sigma_rot},
           {"seed", s.seed},
           {"association", toString(s.association)}};
}

void from_json(const Json& j, NoiseSpec& s) {
  requireKnownKeys(j, {"sigma_point", "sigma_flow", "sigma_trans", "sigma_rot", "seed", "association"},
                   "noise");
  readIf(j, "sigma_point", s.sigma_point);
  readIf(j, "sigma_flow", s.sigma_flow);
  readIf(j, "sigma_trans", s.sigma_trans);
  readIf(j, "sigma_rot", s.sigma_rot);
  readIf(j, "seed", s.seed);
  if (auto it = j.find("association"); it != j.end()) {
    const auto mode = associationNoiseFromString(it->get<std::string>());
    if (!mode) throw std::runtime_error("noise.association: unknown mode " + it->dump());
    s.association = *mode;
  }
}

void to_json(Json& j, const SolveOptions& o) {
  j = Json{{"max_iterations", o.max_iterations},
           {"cost_tolerance", o.cost_tolerance},
           {"gradient_tolerance", o.gradient_tolerance},
           {"initial_damping", o.initial_damping},
           {"damping_increase", o.damping_increase},
           {"damping_decrease", o.damping_decrease},
           {"max_damping", o.max_damping},
           {"min_damping", o.min_damping},
           {"derivative_mode", toString(o.derivative_mode)},
           {"linear_solver", o.linear_solver == LinearSolverKind::Dense ? "dense" : "flow_elimination"},
           {"derivative_check_abs", o.derivative_check_abs},
           {"derivative_check_rel", o.derivative_check_rel},
           {"compute_rank_diagnostics", o.compute_rank_diagnostics}};
}

void from_json(const Json& j, SolveOptions& o) {
  requireKnownKeys(j,
                   {"max_iterations", "cost_tolerance", "gradient_tolerance", "initial_damping",
                    "damping_increase", "damping_decrease", "max_damping", "min_damping",
                    "derivative_mode", "linear_solver", "derivative_check_abs",
                    "derivative_check_rel", "compute_rank_diagnostics"},
                   "solve");
  readIf(j, "max_iterations", o.max_iterations);
  readIf(j, "cost_tolerance", o.cost_tolerance);
  readIf(j, "gradient_tolerance", o.gradient_tolerance);
  readIf(j, "initial_damping", o.initial_damping);
  readIf(j, "damping_increase", o.damping_increase);
  readIf(j, "damping_decrease", o.damping_decrease);
  readIf(j, "max_damping", o.max_damping);
  readIf(j, "min_damping", o.min_damping);
  if (auto it = j.find("derivative_mode"); it != j.end()) {
    const auto mode = derivativeModeFromString(it->get<std::string>());
    if (!mode) throw std::runtime_error("solve.derivative_mode: unknown mode " + it->dump());
    o.derivative_mode = *mode;
  }
  if (auto it = j.find("linear_solver"); it != j.end()) {
    const auto s = it->get<std::string>();
    if (s == "dense") {
      o.linear_solver = LinearSolverKind::Dense;
    } else if (s == "flow_elimination") {
      o.linear_solver = LinearSolverKind::FlowElimination;
    } else {
      throw std::runtime_error("solve.linear_solver: unknown kind " + it->dump());
    }
  }
  readIf(j, "derivative_check_abs", o.derivative_check_abs);
  readIf(j, "derivative_check_rel", o.derivative_check_rel);
  readIf(j, "compute_rank_diagnostics", o.compute_rank_diagnostics);
}

Json document(const char* kind, Json payload) {
  return Json{{"schema_version", kSchemaVersion}, {"kind", kind}, {"data", std::move(payload)}};
}

Json payload(const Json& doc, const char* kind) {
  if (!doc.is_object() || !doc.contains("schema_version") || !doc.contains("kind") ||
      !doc.contains("data")) {
    throw std::runtime_error("not a versioned document (need schema_version, kind, data)");
  }
  const int version = doc.at("schema_version").get<int>();
  if (version != kSchemaVersion) {
    throw std::runtime_error("unsupported schema_version " + std::to_string(version) +
                             " (expected " + std::to_string(kSchemaVersion) + ")");
  }
  const auto k = doc.at("kind").get<std::string>();
  if (k != kind) throw std::runtime_error("document kind is '" + k + "', expected '" + kind + "'");
  return doc.at("data");
}

Json readJsonFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void writeTextFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace mvsf
