#include <gtest/gtest.h>

#include <filesystem>

#include "mvsf/serialization.hpp"
#include "test_support.hpp"

namespace mvsf {
namespace {

TEST(Serialization, PoseRoundTripIsExact) {
  const Posed p = Posed::fromRotationVector(Vec3(0.1, -0.7, 0.3), Vec3(1e-3, 2.5, -7));
  const Json j = p;
  EXPECT_EQ(j.at("q").size(), 4u);
  EXPECT_EQ(j.get<Posed>().matrix(), p.matrix());
}

TEST(Serialization, WorldAndMeasuresRoundTrip) {
  const ScenarioConfig cfg = ScenarioConfig::canonical();
  const GroundTruthWorld w = generate(cfg);
  MeasureSet m = deriveMeasures(w, cfg);
  m.setAvailable(Measure::EgoB, false);

  const Json jw = Json::parse(Json(w).dump());
  const GroundTruthWorld restored_world = jw.get<GroundTruthWorld>();
  ASSERT_EQ(restored_world.points_t0.size(), w.points_t0.size());
  for (std::size_t i = 0; i < w.points_t0.size(); ++i) EXPECT_EQ(restored_world.points_t1[i], w.points_t1[i]);
  EXPECT_EQ(restored_world.camera_b.t1.matrix(), w.camera_b.t1.matrix());

  const MeasureSet restored = Json::parse(Json(m).dump()).get<MeasureSet>();
  EXPECT_EQ(restored.available, m.available);
  EXPECT_EQ(restored.point_ids, m.point_ids);
  ASSERT_EQ(restored.size(), m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(restored.points_a_t1[i].coords, m.points_a_t1[i].coords);
    EXPECT_EQ(restored.points_a_t1[i].frame, Frame::A_t1);
    EXPECT_EQ(restored.flow[i].delta, m.flow[i].delta);
  }
  EXPECT_EQ(restored.between_t1.matrix(), m.between_t1.matrix());
}

TEST(Serialization, PartialDocumentsMergeIntoDefaults) {
  ScenarioConfig cfg = ScenarioConfig::canonical();
  Json::parse(R"({"num_points": 250, "seed": 9})").get_to(cfg);
  EXPECT_EQ(cfg.num_points, 250u);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.extent_x, ScenarioConfig::canonical().extent_x);

  NoiseSpec n;
  Json::parse(R"({"sigma_flow": 0.002, "association": "independent"})").get_to(n);
  EXPECT_EQ(n.sigma_flow, 0.002);
  EXPECT_EQ(n.association, AssociationNoise::Independent);

  SolveOptions o;
  Json::parse(R"({"derivative_mode": "autodiff", "linear_solver": "dense"})").get_to(o);
  EXPECT_EQ(o.derivative_mode, DerivativeMode::AutoDiff);
  EXPECT_EQ(o.linear_solver, LinearSolverKind::Dense);
  EXPECT_EQ(Json(o).get<SolveOptions>().max_iterations, o.max_iterations);
}

TEST(Serialization, UnknownKeysAndBadValuesAreRejected) {
  ScenarioConfig cfg;
  EXPECT_THROW(Json::parse(R"({"num_pointz": 5})").get_to(cfg), std::runtime_error);
  NoiseSpec n;
  EXPECT_THROW(Json::parse(R"({"association": "sometimes"})").get_to(n), std::runtime_error);
  Posed p;
  EXPECT_THROW(Json::parse(R"({"q": [1, 0, 0], "t": [0, 0, 0]})").get_to(p), std::exception);
}

TEST(Serialization, DocumentEnvelope) {
  const Json doc = document(kWorldDocument, Json{{"x", 1}});
  EXPECT_EQ(doc.at("schema_version"), kSchemaVersion);
  EXPECT_EQ(payload(doc, kWorldDocument).at("x"), 1);
  EXPECT_THROW(payload(doc, kResultsDocument), std::runtime_error);
  Json future = doc;
  future["schema_version"] = kSchemaVersion + 1;
  EXPECT_THROW(payload(future, kWorldDocument), std::runtime_error);
}

TEST(Serialization, FileHelpers) {
  const auto dir = std::filesystem::temp_directory_path() / "mvsf_serialization_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "doc.json";
  writeTextFile(path, document(kWorldDocument, Json{{"k", 2}}).dump());
  EXPECT_EQ(payload(readJsonFile(path), kWorldDocument).at("k"), 2);
  EXPECT_THROW(readJsonFile(dir / "missing.json"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace mvsf
