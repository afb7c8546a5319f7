#pragma once

#include <vector>

#include "tcmap/field.hpp"
#include "tcmap/world.hpp"

namespace tcmap {

enum class PointSource { Reconstructed, GroundTruth };

struct PointSet {
  std::vector<Vec> points;
  PointSource source = PointSource::Reconstructed;

  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
};

struct MetricsConfig {
  double tau = 0.05;          // threshold in world units
  int eval_resolution = 256;  // marching-squares cells per axis
  int boundary_samples = 2000;
};

struct MetricsReport {
  double artifacts = 0.0;         // mean distance recon -> gt
  double holes = 0.0;             // mean distance gt -> recon
  double chamfer = 0.0;           // (artifacts + holes) / 2
  double completion_ratio = 0.0;  // fraction of gt within tau of recon
  double precision_at_tau = 0.0;  // fraction of recon within tau of gt
  double f1_at_tau = 0.0;         // harmonic mean, recall = completion_ratio
  double tau = 0.05;
  std::size_t recon_count = 0;
  std::size_t gt_count = 0;
  bool empty_reconstruction = false;
};

/// Zero level set of the model's SDF head via marching squares on a regular
/// grid over the model's domain: linear-interpolated edge crossings emitted as
/// points. Empty when the field has no sign change. 2D only.
PointSet extract_zero_set(const FieldModel& model, int resolution);

/// Mean nearest-neighbor distance from each point of `a` to the set `b`.
/// Throws std::invalid_argument on empty input.
double directed_distance(const PointSet& a, const PointSet& b);

/// Full metric report. Empty reconstruction yields the worst-case sentinel
/// (holes/chamfer infinite, fractions zero).
MetricsReport report(const PointSet& recon, const PointSet& gt, double tau);

/// Keeps only points inside at least one of the given sensor frusta.
PointSet filter_observed(const PointSet& points, const std::vector<Frustum>& frusta);

}  // namespace tcmap
