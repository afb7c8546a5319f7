#include "tcmap/render.hpp"

#include <algorithm>
#include <cmath>

namespace tcmap {

SampleSet sample_ray(const Ray& ray, std::optional<double> observed_depth, int total,
                     int near_count, double truncation, Rng& rng) {
  SampleSet set;
  if (total < 2) total = 2;
  const bool near = observed_depth.has_value();
  const int strat = near ? std::max(1, total - near_count) : total;
  set.depths.reserve(static_cast<std::size_t>(total));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < strat; ++i) {
    double d = ray.max_range * (i + unit(rng)) / strat;
    set.depths.push_back(std::max(d, 1e-9));
  }
  if (near) {
    const double lo = *observed_depth - truncation;
    const double hi = *observed_depth + truncation;
    for (int i = strat; i < total; ++i) {
      double d = lo + (hi - lo) * unit(rng);
      set.depths.push_back(std::min(std::max(d, 1e-9), ray.max_range));
    }
  }
  std::sort(set.depths.begin(), set.depths.end());
  // Enforce strict monotonicity; ties have measure zero but break invariants.
  for (std::size_t i = 1; i < set.depths.size(); ++i)
    if (set.depths[i] <= set.depths[i - 1])
      set.depths[i] = set.depths[i - 1] + 1e-12;
  if (set.depths.back() > ray.max_range) {
    set.depths.back() = ray.max_range;
    for (std::size_t i = set.depths.size() - 1; i-- > 0;)
      if (set.depths[i] >= set.depths[i + 1]) set.depths[i] = set.depths[i + 1] - 1e-12;
  }
  return set;
}

double render_weight(double s, double truncation) {
  const double q = std::exp(-std::abs(s) / truncation);
  const double d = 1.0 + q;
  return q / (d * d);
}

double render_weight_grad(double s, double truncation) {
  const double w = render_weight(s, truncation);
  return w * (1.0 - 2.0 * sigmoid(s / truncation)) / truncation;
}

RenderResult combine_samples(std::span<const double> weights, std::span<const Color> colors,
                             std::span<const double> depths, double weight_floor) {
  RenderResult r;
  double sum = 0.0;
  for (double w : weights) sum += w;
  r.weight_sum = sum;
  if (sum < weight_floor) return r;
  r.valid = true;
  const double inv = 1.0 / sum;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double wn = weights[i] * inv;
    for (int ch = 0; ch < 3; ++ch) r.color[ch] += wn * colors[i][ch];
    r.depth += wn * depths[i];
  }
  return r;
}

RenderResult render_ray(const FieldModel& model, const Ray& ray, const SampleSet& samples,
                        const RenderConfig& cfg) {
  const std::size_t n = samples.size();
  std::vector<double> weights(n);
  std::vector<Color> colors(n);
  PointCache cache;
  model.init_cache(cache);
  for (std::size_t i = 0; i < n; ++i) {
    model.forward_point(ray.at(samples.depths[i]), cache);
    weights[i] = render_weight(cache.s, cfg.truncation);
    colors[i] = cache.c;
  }
  return combine_samples(weights, colors, samples.depths, cfg.weight_floor);
}

}  // namespace tcmap
