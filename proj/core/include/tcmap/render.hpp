#pragma once

#include <optional>
#include <vector>

#include "tcmap/common.hpp"
#include "tcmap/field.hpp"

namespace tcmap {

struct Ray {
  Vec origin{0.0, 0.0, 0.0};
  Vec dir{1.0, 0.0, 0.0};  // unit length
  double max_range = 1.0;

  Vec at(double t) const { return add_scaled(origin, dir, t); }
};

// Strictly increasing sample depths along one ray, in (0, max_range].
struct SampleSet {
  std::vector<double> depths;
  std::size_t size() const { return depths.size(); }
};

struct RenderConfig {
  int samples_per_ray = 32;
  int near_samples = 8;
  double truncation = 0.1;      // tr, world units
  double weight_floor = 1e-12;  // below this sum a ray is degenerate
};

struct RenderResult {
  Color color{0.0, 0.0, 0.0};
  double depth = 0.0;
  double weight_sum = 0.0;
  bool valid = false;
};

/// Stratified-uniform depths over (0, max_range], plus `near_count` samples
/// uniform in [observed_depth - tr, observed_depth + tr] when a depth
/// measurement is present. Sorted, strictly increasing.
SampleSet sample_ray(const Ray& ray, std::optional<double> observed_depth, int total,
                     int near_count, double truncation, Rng& rng);

/// Surface-peaked rendering weight sigma(s/tr) * sigma(-s/tr); in (0, 0.25],
/// exactly symmetric in s.
double render_weight(double s, double truncation);

/// d(render_weight)/ds.
double render_weight_grad(double s, double truncation);

/// Normalized weighted average of per-sample colors and depths.
RenderResult combine_samples(std::span<const double> weights, std::span<const Color> colors,
                             std::span<const double> depths, double weight_floor = 1e-12);

/// Renders one ray through the field: evaluates (s_i, c_i) at each sample and
/// combines them with render_weight.
RenderResult render_ray(const FieldModel& model, const Ray& ray, const SampleSet& samples,
                        const RenderConfig& cfg);

}  // namespace tcmap
