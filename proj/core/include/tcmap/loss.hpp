#pragma once

#include <cstdint>
#include <vector>

#include "tcmap/field.hpp"
#include "tcmap/render.hpp"

namespace tcmap {

struct RayObservation {
  Ray ray;
  Color color{0.0, 0.0, 0.0};
  bool has_depth = false;
  double depth = 0.0;
};

// One time step's worth of streaming observations.
struct RayBatch {
  std::vector<RayObservation> rays;
  std::int64_t timestamp = 0;

  bool empty() const { return rays.empty(); }
  std::size_t size() const { return rays.size(); }
  std::size_t byte_size() const { return rays.size() * sizeof(RayObservation) + sizeof(*this); }
};

struct LossWeights {
  double rgb = 1.0;
  double depth = 0.1;
  double sdf = 10.0;
  double freespace = 1.0;
  double smooth = 1e-3;
};

struct LossBreakdown {
  double rgb = 0.0;        // raw (unweighted) term values
  double depth = 0.0;
  double sdf = 0.0;
  double freespace = 0.0;
  double smooth = 0.0;
  double total = 0.0;      // lambda-weighted sum
  int valid_rays = 0;

  double weighted(const LossWeights& w) const {
    return w.rgb * rgb + w.depth * depth + w.sdf * sdf + w.freespace * freespace +
           w.smooth * smooth;
  }
};

// --- Individual loss terms (value-only reference path) -----------------------

/// Mean squared color error over valid renders.
double loss_rgb(const RayBatch& batch, const std::vector<RenderResult>& renders);

/// Mean squared depth error over valid renders of rays with a measurement.
double loss_depth(const RayBatch& batch, const std::vector<RenderResult>& renders);

/// Truncation-normalized SDF supervision: over samples with
/// |d_obs - d_i| <= tr, mean of (s_i - (d_obs - d_i)/tr)^2.
double loss_sdf(const RayBatch& batch, const std::vector<SampleSet>& samples,
                const FieldModel& model, double truncation);

/// Free-space supervision: over samples with d_i < d_obs - tr, mean of (s_i - 1)^2.
double loss_freespace(const RayBatch& batch, const std::vector<SampleSet>& samples,
                      const FieldModel& model, double truncation);

/// Mean squared feature difference over `patch_count` randomly chosen adjacent
/// grid-node pairs (level chosen uniformly per pair).
double loss_smooth(const FieldModel& model, std::uint64_t seed, int patch_count);

// --- Fused batch engine -------------------------------------------------------

// Per-batch evaluation workspace. Sample depths, interpolation stencils and
// positional encodings depend only on geometry, so they are computed once and
// reused across every gradient step taken on this batch.
class BatchEvaluator {
 public:
  BatchEvaluator(const FieldModel& model, const RayBatch& batch, const RenderConfig& cfg,
                 std::uint64_t sample_seed, int smooth_patch_count = 64);

  const RayBatch& batch() const { return batch_; }
  const std::vector<SampleSet>& samples() const { return samples_; }
  const RenderConfig& render_config() const { return cfg_; }
  const std::vector<RenderResult>& renders() const { return renders_; }

  /// Weighted objective with per-term breakdown. Throws NumericalError if any
  /// term is non-finite.
  LossBreakdown objective(const FieldModel& model, const LossWeights& weights,
                          std::uint64_t smooth_seed);

  /// Objective plus its gradient with respect to every parameter.
  LossBreakdown objective_with_gradient(const FieldModel& model, const LossWeights& weights,
                                        std::uint64_t smooth_seed, GradientVector& grad);

  /// Ground-truth-free proxy: mean over valid rays of |c_hat|^2 + d_hat^2.
  double proxy(const FieldModel& model);
  double proxy_with_gradient(const FieldModel& model, GradientVector& grad);

 private:
  void forward(const FieldModel& model);
  LossBreakdown run(const FieldModel& model, const LossWeights& weights, std::uint64_t smooth_seed,
                    GradientVector* grad);
  double run_proxy(const FieldModel& model, GradientVector* grad);

  RayBatch batch_;
  RenderConfig cfg_;
  int smooth_patch_count_;
  std::vector<SampleSet> samples_;
  std::vector<std::size_t> ray_offset_;       // start of each ray's samples
  std::vector<PointCache> caches_;            // one per sample, reused
  std::vector<double> weights_;               // render weights per sample
  std::vector<RenderResult> renders_;
  BackwardScratch scratch_;
};

}  // namespace tcmap
