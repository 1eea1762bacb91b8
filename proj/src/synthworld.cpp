#include "mvsf/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <tuple>

namespace mvsf {

namespace {

constexpr double kDeg = M_PI / 180.0;

Posed cameraPose(const Vec3& rotation_vector, const Vec3& position) {
  return Posed(quatExp<double>(rotation_vector), position, {Frame::World, Frame::Unspecified});
}

// Applies a motion expressed as a world translation plus a rotation in the
// camera's own frame.
Posed moved(const Posed& start, const Vec3& local_rotation, const Vec3& world_translation) {
  return Posed(start.rotation() * quatExp<double>(local_rotation),
               start.translation() + world_translation, start.frames());
}

Posed tagged(const Posed& p, Frame target, Frame source) { return p.withFrames({target, source}); }

}  // namespace

ScenarioConfig ScenarioConfig::canonical() {
  ScenarioConfig c;
  // Camera frames: x right, y down, z forward; yaw about y, roll about z.
  c.camera_a.t0 = cameraPose(Vec3::Zero(), Vec3::Zero());
  c.camera_a.t1 = moved(c.camera_a.t0, Vec3(0.0, 2.0 * kDeg, 0.0), Vec3(0.01, 0.0, 0.0));
  c.camera_b.t0 = cameraPose(Vec3(0.0, -10.0 * kDeg, 0.0), Vec3(0.0, 0.05, 0.0));
  c.camera_b.t1 = moved(c.camera_b.t0, Vec3(0.0, 0.0, 1.0 * kDeg), Vec3(0.0, -0.005, 0.002));
  return c;
}

ScenarioConfig ScenarioConfig::canonicalStaticA() {
  ScenarioConfig c = canonical();
  c.camera_a.t1 = c.camera_a.t0;
  return c;
}

double ScenarioConfig::characteristicRadius() const {
  return 0.5 * std::hypot(extent_x, extent_y);
}

void ScenarioConfig::validate() const {
  if (num_points < 1) throw std::invalid_argument("scenario needs at least one point");
  if (!(amplitude_min >= 0.0) || !(amplitude_max >= amplitude_min)) {
    throw std::invalid_argument("amplitude range must satisfy 0 <= min <= max");
  }
  if (!(match_radius > 0.0)) throw std::invalid_argument("match radius must be positive");
  if (!(extent_x > 0.0) || !(extent_y > 0.0)) throw std::invalid_argument("empty surface patch");
  if (overlap_fraction < 0.0 || overlap_fraction > 1.0) {
    throw std::invalid_argument("overlap fraction must lie in [0, 1]");
  }
  if (deformation_modes < 0) throw std::invalid_argument("negative mode count");
}

DeformationField::DeformationField(Vec3 base_direction, std::vector<Mode> direction_modes,
                                   Vec3 magnitude_wavevector, double magnitude_phase,
                                   double amplitude_min, double amplitude_max)
    : base_direction_(base_direction.normalized()),
      modes_(std::move(direction_modes)),
      magnitude_wavevector_(magnitude_wavevector),
      magnitude_phase_(magnitude_phase),
      amplitude_min_(amplitude_min),
      amplitude_max_(amplitude_max) {
  double total = 0.0;
  for (const auto& m : modes_) total += m.amplitude.norm();
  if (total >= 1.0) throw std::invalid_argument("direction modes must sum below unit amplitude");
}

DeformationField DeformationField::random(std::uint64_t seed, int modes, double amplitude_min,
                                          double amplitude_max) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  auto unit = [&] {
    Vec3 v(normal(rng), normal(rng), normal(rng));
    return v.normalized();
  };
  // Wavelengths between 4 and 16 cm keep the field smooth over the patch.
  auto wavevector = [&] {
    const double wavelength = 0.04 + 0.12 * uniform(rng);
    return Vec3(unit() * (2.0 * M_PI / wavelength));
  };
  const Vec3 base = unit();
  std::vector<Mode> dir_modes;
  for (int i = 0; i < modes; ++i) {
    Mode m;
    m.amplitude = unit() * (0.45 / std::max(modes, 1)) * uniform(rng);
    m.wavevector = wavevector();
    m.phase = 2.0 * M_PI * uniform(rng);
    dir_modes.push_back(m);
  }
  const Vec3 mag_k = wavevector();
  const double mag_phase = 2.0 * M_PI * uniform(rng);
  return DeformationField(base, std::move(dir_modes), mag_k, mag_phase, amplitude_min,
                          amplitude_max);
}

Vec3 DeformationField::operator()(const Vec3& p) const {
  Vec3 v = base_direction_;
  for (const auto& m : modes_) v += m.amplitude * std::sin(m.wavevector.dot(p) + m.phase);
  const double s = 0.5 + 0.5 * std::sin(magnitude_wavevector_.dot(p) + magnitude_phase_);
  const double magnitude = amplitude_min_ + (amplitude_max_ - amplitude_min_) * s;
  return magnitude * v.normalized();
}

double DeformationField::lipschitzBound() const {
  double grad_v = 0.0;
  double amp = 0.0;
  for (const auto& m : modes_) {
    grad_v += m.amplitude.norm() * m.wavevector.norm();
    amp += m.amplitude.norm();
  }
  const double grad_magnitude = 0.5 * (amplitude_max_ - amplitude_min_) * magnitude_wavevector_.norm();
  return grad_magnitude + amplitude_max_ * grad_v / (1.0 - amp);
}

bool visible(const Posed& world_from_camera, const Vec3& world_point, double half_fov,
             double near_plane) {
  const Vec3 c = inverse(world_from_camera) * world_point;
  if (c.z() < near_plane) return false;
  return std::atan2(c.head<2>().norm(), c.z()) <= half_fov;
}

GroundTruthWorld generate(const ScenarioConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> uniform(-0.5, 0.5);
  const DeformationField field =
      DeformationField::random(rng(), config.deformation_modes, config.amplitude_min,
                               config.amplitude_max);

  const double kx = 2.0 * M_PI / config.extent_x;
  const double ky = 2.0 * M_PI / config.extent_y;
  const std::array<const Posed*, 4> views = {&config.camera_a.t0, &config.camera_a.t1,
                                             &config.camera_b.t0, &config.camera_b.t1};

  double best = 0.0;
  for (int attempt = 0; attempt < std::max(config.max_retries, 1); ++attempt) {
    GroundTruthWorld world;
    world.camera_a = config.camera_a;
    world.camera_b = config.camera_b;
    world.lipschitz_bound = field.lipschitzBound();
    std::size_t in_view = 0;
    for (std::size_t i = 0; i < config.num_points; ++i) {
      const double u = uniform(rng) * config.extent_x;
      const double v = uniform(rng) * config.extent_y;
      const double height = config.patch_relief * std::sin(kx * u) * std::cos(ky * v);
      const Vec3 p0 = config.patch_center + Vec3(u, v, height);
      const Vec3 p1 = p0 + field(p0);
      world.points_t0.push_back(p0);
      world.points_t1.push_back(p1);
      bool all = true;
      for (std::size_t k = 0; k < views.size(); ++k) {
        const Vec3& p = k % 2 == 0 ? p0 : p1;
        all = all && visible(*views[k], p, config.half_fov, config.near_plane);
      }
      in_view += all ? 1 : 0;
    }
    const double fraction = static_cast<double>(in_view) / static_cast<double>(config.num_points);
    if (fraction >= config.overlap_fraction) return world;
    best = std::max(best, fraction);
  }
  throw std::runtime_error("overlap target " + std::to_string(config.overlap_fraction) +
                           " not met after " + std::to_string(config.max_retries) +
                           " attempts (best " + std::to_string(best) + ")");
}

std::vector<std::pair<std::size_t, std::size_t>> matchOverlap(std::span<const Vec3> a,
                                                              std::span<const Vec3> b,
                                                              double radius) {
  using Cell = std::tuple<long long, long long, long long>;
  auto cellOf = [radius](const Vec3& p) {
    return Cell{static_cast<long long>(std::floor(p.x() / radius)),
                static_cast<long long>(std::floor(p.y() / radius)),
                static_cast<long long>(std::floor(p.z() / radius))};
  };
  std::map<Cell, std::vector<std::size_t>> grid;
  for (std::size_t j = 0; j < b.size(); ++j) grid[cellOf(b[j])].push_back(j);

  struct Candidate {
    double distance;
    std::size_t ia;
    std::size_t ib;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto [cx, cy, cz] = cellOf(a[i]);
    for (long long dx = -1; dx <= 1; ++dx)
      for (long long dy = -1; dy <= 1; ++dy)
        for (long long dz = -1; dz <= 1; ++dz) {
          const auto it = grid.find(Cell{cx + dx, cy + dy, cz + dz});
          if (it == grid.end()) continue;
          for (std::size_t j : it->second) {
            const double d = (a[i] - b[j]).norm();
            if (d <= radius) candidates.push_back({d, i, j});
          }
        }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& l, const Candidate& r) {
    return std::tie(l.distance, l.ia, l.ib) < std::tie(r.distance, r.ia, r.ib);
  });

  std::vector<bool> used_a(a.size(), false);
  std::vector<bool> used_b(b.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& c : candidates) {
    if (used_a[c.ia] || used_b[c.ib]) continue;
    used_a[c.ia] = used_b[c.ib] = true;
    pairs.emplace_back(c.ia, c.ib);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

FlowVector relativeToAbsoluteFlow(const Vec3& relative_flow, const Point3& point_b_t0,
                                  const Posed& ego_b) {
  MVSF_FRAME_CHECK(point_b_t0.frame, ego_b.frames().target);
  return {ego_b * (point_b_t0.coords + relative_flow) - point_b_t0.coords, Frame::B_t0};
}

MeasureSet deriveMeasures(const GroundTruthWorld& world, const ScenarioConfig& config) {
  const Posed a0 = tagged(world.camera_a.t0, Frame::World, Frame::A_t0);
  const Posed a1 = tagged(world.camera_a.t1, Frame::World, Frame::A_t1);
  const Posed b0 = tagged(world.camera_b.t0, Frame::World, Frame::B_t0);
  const Posed b1 = tagged(world.camera_b.t1, Frame::World, Frame::B_t1);

  MeasureSet m;
  m.between_t0 = compose(inverse(a0), b0);
  m.between_t1 = compose(inverse(a1), b1);
  m.ego_a = compose(inverse(a0), a1);
  m.ego_b = compose(inverse(b0), b1);

  // Points seen by both cameras at both instants.
  std::vector<std::size_t> seen;
  for (std::size_t i = 0; i < world.points_t0.size(); ++i) {
    const Vec3& p0 = world.points_t0[i];
    const Vec3& p1 = world.points_t1[i];
    if (visible(a0, p0, config.half_fov, config.near_plane) &&
        visible(b0, p0, config.half_fov, config.near_plane) &&
        visible(a1, p1, config.half_fov, config.near_plane) &&
        visible(b1, p1, config.half_fov, config.near_plane)) {
      seen.push_back(i);
    }
  }

  // Each camera's t0 cloud, registered into the world frame with the
  // ground-truth poses, then matched.
  const Posed a0_inv = inverse(a0);
  const Posed b0_inv = inverse(b0);
  std::vector<Vec3> cloud_a;
  std::vector<Vec3> cloud_b;
  for (std::size_t i : seen) {
    cloud_a.push_back(a0 * (a0_inv * world.points_t0[i]));
    cloud_b.push_back(b0 * (b0_inv * world.points_t0[i]));
  }
  const auto pairs = matchOverlap(cloud_a, cloud_b, config.match_radius);
  if (pairs.empty()) throw std::runtime_error("no overlapping points between the two cameras");

  const Posed a1_inv = inverse(a1);
  const Posed b1_inv = inverse(b1);
  for (const auto& [ia, ib] : pairs) {
    const std::size_t wa = seen[ia];
    const std::size_t wb = seen[ib];
    m.point_ids.push_back(wb);
    m.points_a_t0.push_back({a0_inv * world.points_t0[wa], Frame::A_t0});
    m.points_b_t0.push_back({b0_inv * world.points_t0[wb], Frame::B_t0});
    m.points_a_t1.push_back({a1_inv * world.points_t1[wa], Frame::A_t1});
    m.points_b_t1.push_back({b1_inv * world.points_t1[wb], Frame::B_t1});
    m.flow.push_back(
        {b0_inv * world.points_t1[wb] - m.points_b_t0.back().coords, Frame::B_t0});
  }
  for (std::size_t k = 0; k < kMeasureCount; ++k) m.available.set(k);
  return m;
}

GroundTruthWorld withColinearTrajectories(GroundTruthWorld world, std::size_t first,
                                          std::size_t second, double spacing) {
  if (first >= world.points_t0.size() || second >= world.points_t0.size() || first == second) {
    throw std::invalid_argument("colinear pair indices out of range or equal");
  }
  const Vec3 d_first = world.points_t1[first] - world.points_t0[first];
  const double step = (world.points_t1[second] - world.points_t0[second]).norm();
  const Vec3 dir = d_first.normalized();
  world.points_t0[second] = world.points_t0[first] + spacing * dir;
  world.points_t1[second] = world.points_t0[second] + step * dir;
  return world;
}

}  // namespace mvsf
