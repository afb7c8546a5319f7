#include "tcmap/loss.hpp"

#include <cmath>

namespace tcmap {

namespace {

struct FeaturePair {
  std::size_t a = 0, b = 0;
};

// Random adjacent node pairs: uniform level, uniform axis, uniform base node.
std::vector<FeaturePair> sample_adjacent_pairs(const FieldModel& model, std::uint64_t seed,
                                               int count) {
  const auto& cfg = model.config();
  const auto& levels = model.grid_levels();
  Rng rng(mix_seed(seed, 0x736d6f6fULL));
  std::uniform_int_distribution<int> pick_level(0, cfg.levels - 1);
  std::uniform_int_distribution<int> pick_axis(0, cfg.dims - 1);
  std::vector<FeaturePair> pairs;
  pairs.reserve(static_cast<std::size_t>(count));
  for (int p = 0; p < count; ++p) {
    const int l = pick_level(rng);
    const int axis = pick_axis(rng);
    const int nodes = levels[l].nodes;
    std::array<int, kMaxDims> a{0, 0, 0};
    for (int d = 0; d < cfg.dims; ++d) {
      const int hi = (d == axis) ? nodes - 2 : nodes - 1;
      std::uniform_int_distribution<int> pick(0, hi);
      a[d] = pick(rng);
    }
    std::array<int, kMaxDims> b = a;
    b[axis] += 1;
    pairs.push_back({model.node_param_index(l, a), model.node_param_index(l, b)});
  }
  return pairs;
}

void check_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericalError(term, "value " + std::to_string(v));
}

}  // namespace

double loss_rgb(const RayBatch& batch, const std::vector<RenderResult>& renders) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t r = 0; r < batch.rays.size(); ++r) {
    if (!renders[r].valid) continue;
    for (int ch = 0; ch < 3; ++ch) {
      const double e = renders[r].color[ch] - batch.rays[r].color[ch];
      sum += e * e;
    }
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

double loss_depth(const RayBatch& batch, const std::vector<RenderResult>& renders) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t r = 0; r < batch.rays.size(); ++r) {
    if (!renders[r].valid || !batch.rays[r].has_depth) continue;
    const double e = renders[r].depth - batch.rays[r].depth;
    sum += e * e;
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

double loss_sdf(const RayBatch& batch, const std::vector<SampleSet>& samples,
                const FieldModel& model, double truncation) {
  double sum = 0.0;
  long n = 0;
  for (std::size_t r = 0; r < batch.rays.size(); ++r) {
    if (!batch.rays[r].has_depth) continue;
    const double d_obs = batch.rays[r].depth;
    for (double d : samples[r].depths) {
      if (std::abs(d_obs - d) > truncation) continue;
      const double s = model.eval_point(batch.rays[r].ray.at(d)).s;
      const double e = s - (d_obs - d) / truncation;
      sum += e * e;
      ++n;
    }
  }
  return n > 0 ? sum / n : 0.0;
}

double loss_freespace(const RayBatch& batch, const std::vector<SampleSet>& samples,
                      const FieldModel& model, double truncation) {
  double sum = 0.0;
  long n = 0;
  for (std::size_t r = 0; r < batch.rays.size(); ++r) {
    if (!batch.rays[r].has_depth) continue;
    const double d_obs = batch.rays[r].depth;
    for (double d : samples[r].depths) {
      if (d >= d_obs - truncation) continue;
      const double s = model.eval_point(batch.rays[r].ray.at(d)).s;
      const double e = s - 1.0;
      sum += e * e;
      ++n;
    }
  }
  return n > 0 ? sum / n : 0.0;
}

double loss_smooth(const FieldModel& model, std::uint64_t seed, int patch_count) {
  const auto pairs = sample_adjacent_pairs(model, seed, patch_count);
  const int F = model.config().features_per_level;
  const auto& v = model.params().values;
  double sum = 0.0;
  for (const auto& p : pairs) {
    for (int f = 0; f < F; ++f) {
      const double d = v[p.a + f] - v[p.b + f];
      sum += d * d;
    }
  }
  return pairs.empty() ? 0.0 : sum / static_cast<double>(pairs.size());
}

BatchEvaluator::BatchEvaluator(const FieldModel& model, const RayBatch& batch,
                               const RenderConfig& cfg, std::uint64_t sample_seed,
                               int smooth_patch_count)
    : batch_(batch), cfg_(cfg), smooth_patch_count_(smooth_patch_count) {
  Rng rng(mix_seed(sample_seed, 0x73616d70ULL));
  samples_.reserve(batch_.rays.size());
  ray_offset_.reserve(batch_.rays.size());
  std::size_t total = 0;
  for (const auto& obs : batch_.rays) {
    std::optional<double> od;
    if (obs.has_depth) od = obs.depth;
    samples_.push_back(sample_ray(obs.ray, od, cfg_.samples_per_ray, cfg_.near_samples,
                                  cfg_.truncation, rng));
    ray_offset_.push_back(total);
    total += samples_.back().size();
  }
  caches_.resize(total);
  for (std::size_t i = 0; i < total; ++i) model.init_cache(caches_[i]);
  // Stencils and encodings depend only on sample positions; fill them once.
  std::size_t k = 0;
  for (std::size_t r = 0; r < batch_.rays.size(); ++r) {
    for (double d : samples_[r].depths) {
      const Vec x = batch_.rays[r].ray.at(d);
      model.encode(x, caches_[k].enc);
      model.build_stencil(x, caches_[k].stencil);
      ++k;
    }
  }
  weights_.assign(total, 0.0);
  renders_.assign(batch_.rays.size(), RenderResult{});
}

void BatchEvaluator::forward(const FieldModel& model) {
  std::size_t k = 0;
  for (std::size_t r = 0; r < batch_.rays.size(); ++r) {
    const std::size_t n = samples_[r].size();
    double sum = 0.0;
    RenderResult& out = renders_[r];
    out = RenderResult{};
    for (std::size_t i = 0; i < n; ++i, ++k) {
      PointCache& c = caches_[k];
      // Positions are cached; redo only the parameter-dependent part.
      model.gather_features(c.stencil, c.feat);
      std::copy(c.enc.begin(), c.enc.end(), c.geo_in.begin());
      std::copy(c.feat.begin(), c.feat.end(), c.geo_in.begin() + c.enc.size());
      model.forward_from_inputs(c);
      weights_[ray_offset_[r] + i] = render_weight(c.s, cfg_.truncation);
      sum += weights_[ray_offset_[r] + i];
    }
    out.weight_sum = sum;
    if (sum < cfg_.weight_floor) continue;
    out.valid = true;
    const double inv = 1.0 / sum;
    for (std::size_t i = 0; i < n; ++i) {
      const PointCache& c = caches_[ray_offset_[r] + i];
      const double wn = weights_[ray_offset_[r] + i] * inv;
      for (int ch = 0; ch < 3; ++ch) out.color[ch] += wn * c.c[ch];
      out.depth += wn * samples_[r].depths[i];
    }
  }
}

LossBreakdown BatchEvaluator::run(const FieldModel& model, const LossWeights& weights,
                                  std::uint64_t smooth_seed, GradientVector* grad) {
  forward(model);
  LossBreakdown out;

  // Term values and denominators.
  int n_rgb = 0, n_d = 0;
  long n_sdf = 0, n_fs = 0;
  for (std::size_t r = 0; r < batch_.rays.size(); ++r) {
    const auto& obs = batch_.rays[r];
    if (renders_[r].valid) {
      ++n_rgb;
      for (int ch = 0; ch < 3; ++ch) {
        const double e = renders_[r].color[ch] - obs.color[ch];
        out.rgb += e * e;
      }
      if (obs.has_depth) {
        ++n_d;
        const double e = renders_[r].depth - obs.depth;
        out.depth += e * e;
      }
    }
    if (obs.has_depth) {
      for (std::size_t i = 0; i < samples_[r].size(); ++i) {
        const double d = samples_[r].depths[i];
        const double s = caches_[ray_offset_[r] + i].s;
        if (std::abs(obs.depth - d) <= cfg_.truncation) {
          const double e = s - (obs.depth - d) / cfg_.truncation;
          out.sdf += e * e;
          ++n_sdf;
        } else if (d < obs.depth - cfg_.truncation) {
          const double e = s - 1.0;
          out.freespace += e * e;
          ++n_fs;
        }
      }
    }
  }
  out.valid_rays = n_rgb;
  if (n_rgb > 0) out.rgb /= n_rgb;
  if (n_d > 0) out.depth /= n_d;
  if (n_sdf > 0) out.sdf /= n_sdf;
  if (n_fs > 0) out.freespace /= n_fs;

  const auto pairs = sample_adjacent_pairs(model, smooth_seed, smooth_patch_count_);
  const int F = model.config().features_per_level;
  const auto& v = model.params().values;
  for (const auto& p : pairs) {
    for (int f = 0; f < F; ++f) {
      const double d = v[p.a + f] - v[p.b + f];
      out.smooth += d * d;
    }
  }
  if (!pairs.empty()) out.smooth /= static_cast<double>(pairs.size());

  check_finite(out.rgb, "loss_rgb");
  check_finite(out.depth, "loss_depth");
  check_finite(out.sdf, "loss_sdf");
  check_finite(out.freespace, "loss_freespace");
  check_finite(out.smooth, "loss_smooth");
  out.total = out.weighted(weights);
  check_finite(out.total, "objective");

  if (grad == nullptr) return out;

  // Backward pass.
  for (const auto& p : pairs) {
    for (int f = 0; f < F; ++f) {
      const double d = v[p.a + f] - v[p.b + f];
      const double g = 2.0 * weights.smooth * d / static_cast<double>(pairs.size());
      grad->values[p.a + f] += g;
      grad->values[p.b + f] -= g;
    }
  }

  for (std::size_t r = 0; r < batch_.rays.size(); ++r) {
    const auto& obs = batch_.rays[r];
    const RenderResult& rr = renders_[r];
    const std::size_t n = samples_[r].size();
    Color dhat{0.0, 0.0, 0.0};
    double ddep = 0.0;
    if (rr.valid) {
      for (int ch = 0; ch < 3; ++ch)
        dhat[ch] = 2.0 * weights.rgb * (rr.color[ch] - obs.color[ch]) / n_rgb;
      if (obs.has_depth && n_d > 0)
        ddep = 2.0 * weights.depth * (rr.depth - obs.depth) / n_d;
    }
    const double inv = rr.valid ? 1.0 / rr.weight_sum : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = ray_offset_[r] + i;
      const PointCache& c = caches_[k];
      double ds = 0.0;
      Color dc{0.0, 0.0, 0.0};
      bool has_dc = false;
      if (rr.valid) {
        double dw = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
          dc[ch] = dhat[ch] * weights_[k] * inv;
          dw += dhat[ch] * (c.c[ch] - rr.color[ch]) * inv;
        }
        dw += ddep * (samples_[r].depths[i] - rr.depth) * inv;
        ds += dw * render_weight_grad(c.s, cfg_.truncation);
        has_dc = true;
      }
      if (obs.has_depth) {
        const double d = samples_[r].depths[i];
        if (std::abs(obs.depth - d) <= cfg_.truncation) {
          ds += 2.0 * weights.sdf * (c.s - (obs.depth - d) / cfg_.truncation) / n_sdf;
        } else if (d < obs.depth - cfg_.truncation) {
          ds += 2.0 * weights.freespace * (c.s - 1.0) / n_fs;
        }
      }
      if (ds != 0.0 || has_dc)
        model.backward_point(c, ds, has_dc ? dc.data() : nullptr, *grad, scratch_);
    }
  }
  if (!grad->all_finite()) throw NumericalError("objective_gradient", "non-finite gradient entry");
  return out;
}

double BatchEvaluator::run_proxy(const FieldModel& model, GradientVector* grad) {
  forward(model);
  double value = 0.0;
  int n = 0;
  for (const auto& rr : renders_)
    if (rr.valid) ++n;
  if (n == 0) return 0.0;
  for (std::size_t r = 0; r < batch_.rays.size(); ++r) {
    const RenderResult& rr = renders_[r];
    if (!rr.valid) continue;
    for (int ch = 0; ch < 3; ++ch) value += rr.color[ch] * rr.color[ch];
    value += rr.depth * rr.depth;
  }
  value /= n;
  check_finite(value, "proxy_loss");
  if (grad == nullptr) return value;

  for (std::size_t r = 0; r < batch_.rays.size(); ++r) {
    const RenderResult& rr = renders_[r];
    if (!rr.valid) continue;
    Color dhat;
    for (int ch = 0; ch < 3; ++ch) dhat[ch] = 2.0 * rr.color[ch] / n;
    const double ddep = 2.0 * rr.depth / n;
    const double inv = 1.0 / rr.weight_sum;
    for (std::size_t i = 0; i < samples_[r].size(); ++i) {
      const std::size_t k = ray_offset_[r] + i;
      const PointCache& c = caches_[k];
      Color dc;
      double dw = 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        dc[ch] = dhat[ch] * weights_[k] * inv;
        dw += dhat[ch] * (c.c[ch] - rr.color[ch]) * inv;
      }
      dw += ddep * (samples_[r].depths[i] - rr.depth) * inv;
      const double ds = dw * render_weight_grad(c.s, cfg_.truncation);
      model.backward_point(c, ds, dc.data(), *grad, scratch_);
    }
  }
  if (!grad->all_finite()) throw NumericalError("proxy_gradient", "non-finite gradient entry");
  return value;
}

LossBreakdown BatchEvaluator::objective(const FieldModel& model, const LossWeights& weights,
                                        std::uint64_t smooth_seed) {
  return run(model, weights, smooth_seed, nullptr);
}

LossBreakdown BatchEvaluator::objective_with_gradient(const FieldModel& model,
                                                      const LossWeights& weights,
                                                      std::uint64_t smooth_seed,
                                                      GradientVector& grad) {
  return run(model, weights, smooth_seed, &grad);
}

double BatchEvaluator::proxy(const FieldModel& model) { return run_proxy(model, nullptr); }

double BatchEvaluator::proxy_with_gradient(const FieldModel& model, GradientVector& grad) {
  return run_proxy(model, &grad);
}

}  // namespace tcmap
