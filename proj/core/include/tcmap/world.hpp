#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcmap/common.hpp"
#include "tcmap/loss.hpp"

namespace tcmap {

enum class ShapeKind { Disk, Box };

struct Shape {
  ShapeKind kind = ShapeKind::Disk;
  Vec center{0.0, 0.0, 0.0};
  double radius = 0.1;               // disk
  Vec half_extents{0.1, 0.1, 0.0};   // box
  Color color{0.5, 0.5, 0.5};

  double sdf(const Vec& x, int dims) const;
  double perimeter(int dims) const;
};

struct SceneStage {
  std::vector<Shape> shapes;
  long active_from = 0;
};

struct SensorSpec {
  double fov = M_PI / 2.0;  // radians
  int rays_per_frame = 64;
  double depth_noise_sigma = 0.002;
  double max_range = 1.5;
};

// Orbit arc: position sweeps angle_start..angle_end around the orbit center
// over the segment's step span, heading locked onto the lookat point.
struct TrajectorySegment {
  long from_step = 0;
  long steps = 1;
  Vec orbit_center{0.5, 0.5, 0.0};
  double orbit_radius = 0.45;
  double angle_start = 0.0;
  double angle_end = 2.0 * M_PI;
  Vec lookat{0.5, 0.5, 0.0};
};

struct SensorPose {
  Vec position{0.0, 0.0, 0.0};
  double heading = 0.0;
};

// A 2D wedge: everything within max_range of the apex and inside the field of
// view around the heading.
struct Frustum {
  Vec position{0.0, 0.0, 0.0};
  double heading = 0.0;
  double fov = M_PI / 2.0;
  double max_range = 1.5;
};

bool in_frustum(const Frustum& f, const Vec& x);

struct Scenario {
  int schema_version = 1;
  std::string name;
  std::uint64_t seed = 0;
  int dims = 2;
  Aabb domain;
  Color background{0.0, 0.0, 0.0};
  SensorSpec sensor;
  std::vector<SceneStage> stages;
  std::vector<TrajectorySegment> trajectory;
  long total_steps = 0;

  std::vector<long> stage_boundaries() const;  // active_from of stages past the first
};

struct SdfSample {
  double distance = 0.0;
  Color color{0.0, 0.0, 0.0};
};

struct RaycastHit {
  bool hit = false;
  double depth = 0.0;
  Color color{0.0, 0.0, 0.0};
};

/// Union SDF over the stage's shapes with the arg-min shape's color.
/// Empty stages return (+empty_distance, background).
SdfSample scene_sdf(const SceneStage& stage, const Vec& x, int dims, const Color& background,
                    double empty_distance);

/// Sphere tracing against the stage's union SDF; miss leaves hit=false.
RaycastHit raycast(const SceneStage& stage, const Ray& ray, int dims, const Color& background);

/// Stage whose active_from is the largest index <= step.
const SceneStage& stage_at(const Scenario& scenario, long step);

SensorPose pose_at(const Scenario& scenario, long step);

Frustum frustum_at(const Scenario& scenario, long step);

/// One frame of observations: rays fanned uniformly across the field of view,
/// depths from raycast plus clamped Gaussian noise, colors exact.
RayBatch observe(const SceneStage& stage, const SensorSpec& sensor, const SensorPose& pose,
                 const Color& background, int dims, long step, Rng& rng);

/// Frame at `step` with the noise stream derived from `stream_seed`.
RayBatch observe_step(const Scenario& scenario, long step, std::uint64_t stream_seed);

/// Uniform perimeter sampling of the stage's union boundary; identical output
/// for identical (stage, seed).
std::vector<Vec> sample_boundary(const SceneStage& stage, int count, std::uint64_t seed,
                                 int dims);

Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& scenario, const std::string& path);

}  // namespace tcmap
