#include "tcmap/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace tcmap {

using nlohmann::json;

double Shape::sdf(const Vec& x, int dims) const {
  if (kind == ShapeKind::Disk) {
    return norm(sub(x, center), dims) - radius;
  }
  // Axis-aligned box.
  double outside2 = 0.0;
  double inside = -std::numeric_limits<double>::infinity();
  for (int d = 0; d < dims; ++d) {
    const double q = std::abs(x[d] - center[d]) - half_extents[d];
    if (q > 0.0) outside2 += q * q;
    inside = std::max(inside, q);
  }
  return outside2 > 0.0 ? std::sqrt(outside2) : inside;
}

double Shape::perimeter(int dims) const {
  if (kind == ShapeKind::Disk) return 2.0 * M_PI * radius;
  double p = 0.0;
  for (int d = 0; d < dims; ++d) p += 4.0 * half_extents[d];
  return p;
}

bool in_frustum(const Frustum& f, const Vec& x) {
  const Vec d = sub(x, f.position);
  const double r = norm(d, 2);
  if (r > f.max_range) return false;
  if (r < 1e-12) return true;
  double a = std::atan2(d[1], d[0]) - f.heading;
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a < -M_PI) a += 2.0 * M_PI;
  return std::abs(a) <= f.fov / 2.0 + 1e-12;
}

std::vector<long> Scenario::stage_boundaries() const {
  std::vector<long> b;
  for (std::size_t i = 1; i < stages.size(); ++i) b.push_back(stages[i].active_from);
  return b;
}

SdfSample scene_sdf(const SceneStage& stage, const Vec& x, int dims, const Color& background,
                    double empty_distance) {
  SdfSample best{empty_distance, background};
  for (const auto& shape : stage.shapes) {
    const double d = shape.sdf(x, dims);
    if (d < best.distance) best = {d, shape.color};
  }
  return best;
}

RaycastHit raycast(const SceneStage& stage, const Ray& ray, int dims, const Color& background) {
  constexpr double kHitTol = 1e-6;
  constexpr int kMaxIters = 20000;
  RaycastHit out;
  double t = 0.0;
  for (int it = 0; it < kMaxIters && t <= ray.max_range; ++it) {
    const SdfSample s = scene_sdf(stage, ray.at(t), dims, background, ray.max_range);
    if (std::abs(s.distance) < kHitTol) {
      out.hit = true;
      out.depth = t;
      out.color = s.color;
      return out;
    }
    if (s.distance < 0.0) {  // started inside a shape
      out.hit = true;
      out.depth = t;
      out.color = s.color;
      return out;
    }
    t += s.distance;
  }
  return out;
}

const SceneStage& stage_at(const Scenario& scenario, long step) {
  const SceneStage* best = &scenario.stages.front();
  for (const auto& stage : scenario.stages)
    if (stage.active_from <= step) best = &stage;
  return *best;
}

SensorPose pose_at(const Scenario& scenario, long step) {
  const TrajectorySegment* seg = &scenario.trajectory.front();
  for (const auto& s : scenario.trajectory)
    if (s.from_step <= step) seg = &s;
  const long span = std::max<long>(1, seg->steps - 1);
  const double u = std::min(1.0, static_cast<double>(step - seg->from_step) / span);
  const double angle = seg->angle_start + u * (seg->angle_end - seg->angle_start);
  SensorPose pose;
  pose.position = {seg->orbit_center[0] + seg->orbit_radius * std::cos(angle),
                   seg->orbit_center[1] + seg->orbit_radius * std::sin(angle), 0.0};
  pose.heading = std::atan2(seg->lookat[1] - pose.position[1], seg->lookat[0] - pose.position[0]);
  return pose;
}

Frustum frustum_at(const Scenario& scenario, long step) {
  const SensorPose pose = pose_at(scenario, step);
  return {pose.position, pose.heading, scenario.sensor.fov, scenario.sensor.max_range};
}

RayBatch observe(const SceneStage& stage, const SensorSpec& sensor, const SensorPose& pose,
                 const Color& background, int dims, long step, Rng& rng) {
  RayBatch batch;
  batch.timestamp = step;
  batch.rays.reserve(static_cast<std::size_t>(sensor.rays_per_frame));
  std::normal_distribution<double> noise(0.0, sensor.depth_noise_sigma);
  const int n = sensor.rays_per_frame;
  for (int i = 0; i < n; ++i) {
    const double a = pose.heading - sensor.fov / 2.0 + sensor.fov * (i + 0.5) / n;
    RayObservation obs;
    obs.ray.origin = pose.position;
    obs.ray.dir = {std::cos(a), std::sin(a), 0.0};
    obs.ray.max_range = sensor.max_range;
    const RaycastHit hit = raycast(stage, obs.ray, dims, background);
    if (hit.hit) {
      double d = hit.depth;
      if (sensor.depth_noise_sigma > 0.0) d += noise(rng);
      obs.has_depth = true;
      obs.depth = std::min(std::max(d, 1e-6), sensor.max_range);
      obs.color = hit.color;
    } else {
      obs.has_depth = false;
      obs.color = background;
    }
    batch.rays.push_back(obs);
  }
  return batch;
}

RayBatch observe_step(const Scenario& scenario, long step, std::uint64_t stream_seed) {
  Rng rng(mix_seed(stream_seed, 0x6f6273ULL, static_cast<std::uint64_t>(step)));
  return observe(stage_at(scenario, step), scenario.sensor, pose_at(scenario, step),
                 scenario.background, scenario.dims, step, rng);
}

std::vector<Vec> sample_boundary(const SceneStage& stage, int count, std::uint64_t seed,
                                 int dims) {
  std::vector<Vec> points;
  if (stage.shapes.empty() || count <= 0) return points;
  double total = 0.0;
  for (const auto& s : stage.shapes) total += s.perimeter(dims);
  Rng rng(mix_seed(seed, 0x626f756eULL));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (const auto& s : stage.shapes) {
    const int n = std::max(1, static_cast<int>(std::lround(count * s.perimeter(dims) / total)));
    const double phase = unit(rng);
    for (int i = 0; i < n; ++i) {
      const double u = (i + phase) / n;
      Vec p{0.0, 0.0, 0.0};
      if (s.kind == ShapeKind::Disk) {
        const double a = 2.0 * M_PI * u;
        p = {s.center[0] + s.radius * std::cos(a), s.center[1] + s.radius * std::sin(a), 0.0};
      } else {
        const double hx = s.half_extents[0], hy = s.half_extents[1];
        const double per = 4.0 * (hx + hy);
        double t = u * per;
        if (t < 2.0 * hx) {
          p = {s.center[0] - hx + t, s.center[1] - hy, 0.0};
        } else if ((t -= 2.0 * hx) < 2.0 * hy) {
          p = {s.center[0] + hx, s.center[1] - hy + t, 0.0};
        } else if ((t -= 2.0 * hy) < 2.0 * hx) {
          p = {s.center[0] + hx - t, s.center[1] + hy, 0.0};
        } else {
          t -= 2.0 * hx;
          p = {s.center[0] - hx, s.center[1] + hy - t, 0.0};
        }
      }
      // Keep only points on the union boundary.
      bool interior = false;
      for (const auto& other : stage.shapes) {
        if (&other == &s) continue;
        if (other.sdf(p, dims) < -1e-9) {
          interior = true;
          break;
        }
      }
      if (!interior) points.push_back(p);
    }
  }
  return points;
}

namespace {

Vec vec_from_json(const json& j) {
  Vec v{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < j.size() && i < 3; ++i) v[i] = j[i].get<double>();
  return v;
}

Color color_from_json(const json& j) {
  Color c{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < j.size() && i < 3; ++i) c[i] = j[i].get<double>();
  return c;
}

json to_json(const Vec& v, int dims) {
  json j = json::array();
  for (int d = 0; d < dims; ++d) j.push_back(v[d]);
  return j;
}

json to_json(const Color& c) { return json::array({c[0], c[1], c[2]}); }

}  // namespace

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  json j = json::parse(in);
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
    throw std::runtime_error("scenario: unsupported schema_version");

  Scenario sc;
  sc.schema_version = 1;
  sc.name = j.value("name", std::string("unnamed"));
  sc.seed = j.value("seed", 0ULL);
  sc.dims = j.value("dims", 2);
  if (j.contains("domain")) {
    sc.domain.lo = vec_from_json(j["domain"]["lo"]);
    sc.domain.hi = vec_from_json(j["domain"]["hi"]);
  }
  if (j.contains("background")) sc.background = color_from_json(j["background"]);

  const json& js = j.at("sensor");
  sc.sensor.fov = js.contains("fov_deg") ? js["fov_deg"].get<double>() * M_PI / 180.0
                                         : js.value("fov", M_PI / 2.0);
  sc.sensor.rays_per_frame = js.value("rays_per_frame", 64);
  sc.sensor.depth_noise_sigma = js.value("depth_noise_sigma", 0.002);
  sc.sensor.max_range = js.value("max_range", sc.domain.diameter(sc.dims));
  if (sc.sensor.rays_per_frame < 1) throw std::runtime_error("scenario: rays_per_frame must be >= 1");
  if (!(sc.sensor.fov > 0.0) || sc.sensor.fov > 2.0 * M_PI + 1e-9)
    throw std::runtime_error("scenario: fov must be in (0, 2*pi]");

  long prev_from = -1;
  for (const json& jst : j.at("stages")) {
    SceneStage stage;
    stage.active_from = jst.value("active_from", 0L);
    for (const json& jsh : jst.value("shapes", json::array())) {
      Shape s;
      const std::string kind = jsh.at("kind").get<std::string>();
      if (kind == "disk") {
        s.kind = ShapeKind::Disk;
        s.radius = jsh.at("radius").get<double>();
        if (!(s.radius > 0.0)) throw std::runtime_error("scenario: disk radius must be positive");
      } else if (kind == "box") {
        s.kind = ShapeKind::Box;
        s.half_extents = vec_from_json(jsh.at("half_extents"));
        for (int d = 0; d < sc.dims; ++d)
          if (!(s.half_extents[d] > 0.0))
            throw std::runtime_error("scenario: box half_extents must be positive");
      } else {
        throw std::runtime_error("scenario: unknown shape kind " + kind);
      }
      s.center = vec_from_json(jsh.at("center"));
      if (jsh.contains("color")) s.color = color_from_json(jsh["color"]);
      for (double ch : s.color)
        if (ch < 0.0 || ch > 1.0) throw std::runtime_error("scenario: color out of [0,1]");
      stage.shapes.push_back(s);
    }
    if (stage.active_from <= prev_from)
      throw std::runtime_error("scenario: stages must have strictly increasing active_from");
    prev_from = stage.active_from;
    sc.stages.push_back(std::move(stage));
  }
  if (sc.stages.empty() || sc.stages.front().active_from != 0)
    throw std::runtime_error("scenario: stage 0 must start at step 0");

  for (const json& jt : j.at("trajectory")) {
    TrajectorySegment seg;
    seg.from_step = jt.value("from_step", 0L);
    seg.steps = jt.at("steps").get<long>();
    seg.orbit_center = vec_from_json(jt.at("orbit_center"));
    seg.orbit_radius = jt.at("orbit_radius").get<double>();
    seg.angle_start = jt.contains("angle_start_deg")
                          ? jt["angle_start_deg"].get<double>() * M_PI / 180.0
                          : jt.value("angle_start", 0.0);
    seg.angle_end = jt.contains("angle_end_deg")
                        ? jt["angle_end_deg"].get<double>() * M_PI / 180.0
                        : jt.value("angle_end", 2.0 * M_PI);
    seg.lookat = jt.contains("lookat") ? vec_from_json(jt["lookat"]) : seg.orbit_center;
    sc.trajectory.push_back(seg);
  }
  if (sc.trajectory.empty()) throw std::runtime_error("scenario: trajectory must be nonempty");

  sc.total_steps = j.value("total_steps", 0L);
  if (sc.total_steps <= 0) {
    const auto& last = sc.trajectory.back();
    sc.total_steps = last.from_step + last.steps;
  }
  return sc;
}

void save_scenario(const Scenario& sc, const std::string& path) {
  json j;
  j["schema_version"] = 1;
  j["name"] = sc.name;
  j["seed"] = sc.seed;
  j["dims"] = sc.dims;
  j["domain"] = {{"lo", to_json(sc.domain.lo, sc.dims)}, {"hi", to_json(sc.domain.hi, sc.dims)}};
  j["background"] = to_json(sc.background);
  j["sensor"] = {{"fov_deg", sc.sensor.fov * 180.0 / M_PI},
                 {"rays_per_frame", sc.sensor.rays_per_frame},
                 {"depth_noise_sigma", sc.sensor.depth_noise_sigma},
                 {"max_range", sc.sensor.max_range}};
  j["stages"] = json::array();
  for (const auto& stage : sc.stages) {
    json jst;
    jst["active_from"] = stage.active_from;
    jst["shapes"] = json::array();
    for (const auto& s : stage.shapes) {
      json jsh;
      jsh["kind"] = s.kind == ShapeKind::Disk ? "disk" : "box";
      jsh["center"] = to_json(s.center, sc.dims);
      if (s.kind == ShapeKind::Disk)
        jsh["radius"] = s.radius;
      else
        jsh["half_extents"] = to_json(s.half_extents, sc.dims);
      jsh["color"] = to_json(s.color);
      jst["shapes"].push_back(jsh);
    }
    j["stages"].push_back(jst);
  }
  j["trajectory"] = json::array();
  for (const auto& seg : sc.trajectory) {
    j["trajectory"].push_back({{"from_step", seg.from_step},
                               {"steps", seg.steps},
                               {"orbit_center", to_json(seg.orbit_center, sc.dims)},
                               {"orbit_radius", seg.orbit_radius},
                               {"angle_start_deg", seg.angle_start * 180.0 / M_PI},
                               {"angle_end_deg", seg.angle_end * 180.0 / M_PI},
                               {"lookat", to_json(seg.lookat, sc.dims)}});
  }
  j["total_steps"] = sc.total_steps;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scenario file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace tcmap
