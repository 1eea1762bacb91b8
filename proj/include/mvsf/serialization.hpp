#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "mvsf/geometry.hpp"
#include "mvsf/noise.hpp"
#include "mvsf/residuals.hpp"
#include "mvsf/solver.hpp"
#include "mvsf/synthworld.hpp"

namespace mvsf {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// Document kinds stamped next to schema_version.
inline constexpr const char* kWorldDocument = "mvsf.world";
inline constexpr const char* kExperimentDocument = "mvsf.experiment";
inline constexpr const char* kResultsDocument = "mvsf.results";

// from_json overloads only overwrite keys present in the document, so
// j.get_to(value) merges a partial document into existing defaults.
// Unknown keys are rejected.

// {"q": [w, x, y, z], "t": [x, y, z]}
void to_json(Json& j, const Posed& p);
void from_json(const Json& j, Posed& p);

void to_json(Json& j, const CameraTrajectory& c);
void from_json(const Json& j, CameraTrajectory& c);

void to_json(Json& j, const ScenarioConfig& c);
void from_json(const Json& j, ScenarioConfig& c);

void to_json(Json& j, const GroundTruthWorld& w);
void from_json(const Json& j, GroundTruthWorld& w);

// Per-point arrays are written as coordinate lists; "available" lists the
// flagged measures by name.
void to_json(Json& j, const MeasureSet& m);
void from_json(const Json& j, MeasureSet& m);

void to_json(Json& j, const NoiseSpec& s);
void from_json(const Json& j, NoiseSpec& s);

void to_json(Json& j, const SolveOptions& o);
void from_json(const Json& j, SolveOptions& o);

// Wraps a payload with schema_version and kind.
Json document(const char* kind, Json payload);
// Checks schema_version and kind; returns the payload. Throws
// std::runtime_error on a mismatch.
Json payload(const Json& doc, const char* kind);

Json readJsonFile(const std::filesystem::path& path);
void writeTextFile(const std::filesystem::path& path, const std::string& text);

// Throws std::runtime_error naming the key when j has a key outside allowed.
void requireKnownKeys(const Json& j, std::initializer_list<const char*> allowed,
                      const char* context);

}  // namespace mvsf

// Eigen vectors serialize as [x, y, z].
template <>
struct nlohmann::adl_serializer<mvsf::Vec3> {
  static void to_json(nlohmann::json& j, const mvsf::Vec3& v) { j = {v.x(), v.y(), v.z()}; }
  static void from_json(const nlohmann::json& j, mvsf::Vec3& v) {
    if (!j.is_array() || j.size() != 3) throw std::runtime_error("expected a 3-element array");
    v = mvsf::Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  }
};
