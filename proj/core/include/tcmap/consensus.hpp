#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "tcmap/descent.hpp"
#include "tcmap/field.hpp"
#include "tcmap/loss.hpp"

namespace tcmap {

// Accumulated absolute proxy-loss sensitivity per parameter. Full-length for
// alignment; entries outside the grid partition stay at zero for all time.
struct ImportanceVector {
  std::vector<double> u;

  static ImportanceVector zeros(std::size_t n) { return {std::vector<double>(n, 0.0)}; }
  std::size_t size() const { return u.size(); }
};

// Frozen historical model with the importance it had when frozen.
struct Snapshot {
  ParamVector params;
  ImportanceVector importance;
  std::int64_t step = 0;
};

struct ConsensusConfig {
  double rho = 0.1;              // consensus penalty strength
  double mask_beta_scale = 1e-4; // mask threshold beta = scale * rho
  int rounds = 2;                // primal/dual rounds per time step (K)
  int inner_steps = 10;          // gradient steps per primal update
  double step_size = 1e-2;
  int snapshots_kept = 1;
  bool literal_penalty = false;  // rho*|.|^2 as printed vs rho/2 pairing
};

// Dual variable; reset to zero at the start of every time step.
struct DualState {
  std::vector<double> p;

  static DualState zeros(std::size_t n) { return {std::vector<double>(n, 0.0)}; }
};

struct ScaledWeights {
  std::vector<double> current;                  // epsilon * u_t
  std::vector<std::vector<double>> historical;  // epsilon * u_{t-k}, oldest last
  double epsilon = 0.0;                         // rho / mean(u_sum) over grid entries
  bool degenerate = false;                      // mean(u_sum) == 0: weights all zero
};

/// Ground-truth-free proxy objective over the evaluator's rays.
double proxy_loss(const FieldModel& model, BatchEvaluator& eval);

/// u' = u + |d proxy / d theta| restricted to the grid partition. Input is not
/// mutated; entries are entrywise nondecreasing across calls.
ImportanceVector accumulate_importance(const ImportanceVector& u, const FieldModel& model,
                                       BatchEvaluator& eval);

/// Relative linear scaling: epsilon = rho / mean(u_current + sum of u_hist)
/// with the mean taken over all grid entries; weights are epsilon * u.
ScaledWeights scale_weights(const ImportanceVector& u_current,
                            const std::vector<const ImportanceVector*>& u_hist, double rho,
                            const IndexRange& grid);

/// Entries below beta are zeroed; applied to historical weights only.
void mask_weights(std::vector<double>& w_hist, double beta, const IndexRange& grid);

/// Parameter-wise weighted average of the current model and snapshots.
/// Zero-total-weight entries and all decoder entries take the current value.
std::vector<double> consensus_target(const ParamVector& current,
                                     const std::vector<double>& w_current,
                                     const std::vector<const ParamVector*>& snaps,
                                     const std::vector<std::vector<double>>& w_snaps,
                                     const IndexRange& grid);

/// One primal update: inner_steps descent steps on
/// L^obj + theta^T p + (rho/2)|theta - z|^2 (grid partition only).
LossBreakdown primal_update(FieldModel& model, BatchEvaluator& eval, const LossWeights& weights,
                            const std::vector<double>& z, const DualState& dual, double rho,
                            int inner_steps, double step_size, std::uint64_t seed,
                            bool literal_form = false);

/// p' = p + rho (theta - z) on the grid partition; decoder entries stay zero.
void dual_update(DualState& dual, const std::vector<double>& theta, const std::vector<double>& z,
                 double rho, const IndexRange& grid);

// Mutable optimizer state advanced once per incoming batch.
struct ConsensusState {
  ImportanceVector importance;
  std::deque<Snapshot> snapshots;
  std::uint64_t importance_violations = 0;

  std::size_t byte_size() const;
};

struct ConsensusStepLog {
  double residual = 0.0;         // ||theta - z|| over the grid after the last round
  double mean_w_current = 0.0;   // grid means before masking
  double mean_w_hist = 0.0;
  double masked_fraction = 0.0;  // fraction of positive historical weights zeroed
  LossBreakdown loss;
};

/// Advances the model one time step on a new batch: build weights and the
/// consensus target, run K primal/dual rounds, accumulate importance, push a
/// snapshot of the pre-step state. With no snapshots the step is a pure data
/// update. A numerical failure restores the pre-step parameters and rethrows.
ConsensusStepLog consensus_step(FieldModel& model, ConsensusState& state, const RayBatch& batch,
                                const ConsensusConfig& cfg, const LossWeights& weights,
                                const RenderConfig& rcfg, std::uint64_t step_seed);

}  // namespace tcmap
