#include "tcmap/consensus.hpp"

#include <cmath>

namespace tcmap {

LossBreakdown descend(FieldModel& model, BatchEvaluator& eval, const LossWeights& weights,
                      const DescentOptions& opts, std::uint64_t seed,
                      const ConsensusPenalty* consensus, const AnchorPenalty* anchor) {
  GradientVector grad(model.layout().total);
  LossBreakdown last;
  auto& theta = model.params().values;
  for (int it = 0; it < opts.steps; ++it) {
    grad.zero();
    last = eval.objective_with_gradient(model, weights, mix_seed(seed, 0x696eULL, it), grad);
    if (consensus != nullptr && consensus->rho > 0.0) {
      const double k = consensus->literal_form ? 2.0 * consensus->rho : consensus->rho;
      const auto& z = *consensus->z;
      const auto& p = *consensus->dual;
      for (std::size_t i = consensus->range.begin; i < consensus->range.end; ++i)
        grad[i] += p[i] + k * (theta[i] - z[i]);
    } else if (consensus != nullptr && consensus->dual != nullptr) {
      const auto& p = *consensus->dual;
      for (std::size_t i = consensus->range.begin; i < consensus->range.end; ++i) grad[i] += p[i];
    }
    if (anchor != nullptr && anchor->lambda > 0.0) {
      const auto& a = *anchor->anchor;
      const auto& om = *anchor->omega;
      for (std::size_t i = 0; i < theta.size(); ++i)
        grad[i] += anchor->lambda * om[i] * (theta[i] - a[i]);
    }
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= opts.step_size * grad[i];
    if (!model.params().all_finite())
      throw NumericalError("descent", "non-finite parameter after update");
  }
  return last;
}

double proxy_loss(const FieldModel& model, BatchEvaluator& eval) { return eval.proxy(model); }

ImportanceVector accumulate_importance(const ImportanceVector& u, const FieldModel& model,
                                       BatchEvaluator& eval) {
  GradientVector grad(model.layout().total);
  eval.proxy_with_gradient(model, grad);
  ImportanceVector out = u;
  if (out.u.size() != model.layout().total)
    throw std::invalid_argument("accumulate_importance: length mismatch");
  const IndexRange grid = model.layout().grid;
  for (std::size_t i = grid.begin; i < grid.end; ++i) out.u[i] += std::abs(grad[i]);
  return out;
}

ScaledWeights scale_weights(const ImportanceVector& u_current,
                            const std::vector<const ImportanceVector*>& u_hist, double rho,
                            const IndexRange& grid) {
  ScaledWeights out;
  const std::size_t n = u_current.size();
  double sum = 0.0;
  for (std::size_t i = grid.begin; i < grid.end; ++i) {
    double s = u_current.u[i];
    for (const auto* h : u_hist) s += h->u[i];
    sum += s;
  }
  const double mean = grid.size() > 0 ? sum / static_cast<double>(grid.size()) : 0.0;
  out.current.assign(n, 0.0);
  out.historical.assign(u_hist.size(), std::vector<double>(n, 0.0));
  if (mean <= 0.0) {
    out.degenerate = true;  // pure data-driven update
    return out;
  }
  out.epsilon = rho / mean;
  for (std::size_t i = grid.begin; i < grid.end; ++i) {
    out.current[i] = out.epsilon * u_current.u[i];
    for (std::size_t k = 0; k < u_hist.size(); ++k)
      out.historical[k][i] = out.epsilon * u_hist[k]->u[i];
  }
  return out;
}

void mask_weights(std::vector<double>& w_hist, double beta, const IndexRange& grid) {
  if (beta <= 0.0) return;
  for (std::size_t i = grid.begin; i < grid.end; ++i)
    if (w_hist[i] < beta) w_hist[i] = 0.0;
}

std::vector<double> consensus_target(const ParamVector& current,
                                     const std::vector<double>& w_current,
                                     const std::vector<const ParamVector*>& snaps,
                                     const std::vector<std::vector<double>>& w_snaps,
                                     const IndexRange& grid) {
  std::vector<double> z = current.values;
  for (std::size_t i = grid.begin; i < grid.end; ++i) {
    double wsum = w_current[i];
    double acc = w_current[i] * current.values[i];
    for (std::size_t k = 0; k < snaps.size(); ++k) {
      wsum += w_snaps[k][i];
      acc += w_snaps[k][i] * snaps[k]->values[i];
    }
    if (wsum > 0.0) z[i] = acc / wsum;
  }
  return z;
}

LossBreakdown primal_update(FieldModel& model, BatchEvaluator& eval, const LossWeights& weights,
                            const std::vector<double>& z, const DualState& dual, double rho,
                            int inner_steps, double step_size, std::uint64_t seed,
                            bool literal_form) {
  ConsensusPenalty cp;
  cp.z = &z;
  cp.dual = &dual.p;
  cp.rho = rho;
  cp.literal_form = literal_form;
  cp.range = model.layout().grid;
  return descend(model, eval, weights, {inner_steps, step_size}, seed, &cp, nullptr);
}

void dual_update(DualState& dual, const std::vector<double>& theta, const std::vector<double>& z,
                 double rho, const IndexRange& grid) {
  for (std::size_t i = grid.begin; i < grid.end; ++i)
    dual.p[i] += rho * (theta[i] - z[i]);
}

std::size_t ConsensusState::byte_size() const {
  std::size_t b = importance.u.size() * sizeof(double) + sizeof(*this);
  for (const auto& s : snapshots)
    b += s.params.values.size() * sizeof(double) + s.importance.u.size() * sizeof(double);
  return b;
}

ConsensusStepLog consensus_step(FieldModel& model, ConsensusState& state, const RayBatch& batch,
                                const ConsensusConfig& cfg, const LossWeights& weights,
                                const RenderConfig& rcfg, std::uint64_t step_seed) {
  const IndexRange grid = model.layout().grid;
  const std::size_t n = model.layout().total;
  if (state.importance.u.empty()) state.importance = ImportanceVector::zeros(n);

  const ParamVector pre_params = model.params();
  const ImportanceVector pre_importance = state.importance;
  ConsensusStepLog log;

  BatchEvaluator eval(model, batch, rcfg, batch_sample_seed(step_seed));
  try {
    if (state.snapshots.empty()) {
      // No consensus source yet: pure data update, identical to the naive path.
      log.loss = descend(model, eval, weights, {cfg.inner_steps, cfg.step_size},
                         round_seed(step_seed, 0));
    } else {
      std::vector<const ImportanceVector*> u_hist;
      std::vector<const ParamVector*> theta_hist;
      for (const auto& s : state.snapshots) {
        u_hist.push_back(&s.importance);
        theta_hist.push_back(&s.params);
      }
      ScaledWeights sw = scale_weights(state.importance, u_hist, cfg.rho, grid);

      double mean_hist = 0.0, mean_cur = 0.0;
      long positive = 0, masked = 0;
      const double beta = cfg.mask_beta_scale * cfg.rho;
      for (auto& wh : sw.historical) {
        for (std::size_t i = grid.begin; i < grid.end; ++i) {
          mean_hist += wh[i];
          if (wh[i] > 0.0) {
            ++positive;
            if (wh[i] < beta) ++masked;
          }
        }
        mask_weights(wh, beta, grid);
      }
      for (std::size_t i = grid.begin; i < grid.end; ++i) mean_cur += sw.current[i];
      log.mean_w_current = mean_cur / static_cast<double>(grid.size());
      log.mean_w_hist = mean_hist / static_cast<double>(grid.size());
      log.masked_fraction = positive > 0 ? static_cast<double>(masked) / positive : 0.0;

      const std::vector<double> z =
          consensus_target(model.params(), sw.current, theta_hist, sw.historical, grid);
      DualState dual = DualState::zeros(n);
      for (int k = 0; k < cfg.rounds; ++k) {
        log.loss = primal_update(model, eval, weights, z, dual, cfg.rho, cfg.inner_steps,
                                 cfg.step_size, round_seed(step_seed, k), cfg.literal_penalty);
        dual_update(dual, model.params().values, z, cfg.rho, grid);
      }
      double r2 = 0.0;
      for (std::size_t i = grid.begin; i < grid.end; ++i) {
        const double d = model.params().values[i] - z[i];
        r2 += d * d;
      }
      log.residual = std::sqrt(r2);
    }

    ImportanceVector next = accumulate_importance(state.importance, model, eval);
    for (std::size_t i = 0; i < n; ++i)
      if (next.u[i] < state.importance.u[i]) ++state.importance_violations;
    state.importance = std::move(next);
  } catch (const NumericalError&) {
    model.set_params(pre_params);
    state.importance = pre_importance;
    throw;
  }

  state.snapshots.push_back({pre_params, pre_importance, batch.timestamp});
  while (static_cast<int>(state.snapshots.size()) > cfg.snapshots_kept)
    state.snapshots.pop_front();
  return log;
}

}  // namespace tcmap
