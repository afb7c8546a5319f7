#pragma once

#include <memory>
#include <string>

#include "tcmap/consensus.hpp"
#include "tcmap/descent.hpp"
#include "tcmap/loss.hpp"

namespace tcmap {

enum class StrategyKind { Consensus, Naive, Replay, ReplayUpper, Mas, Ewc };

StrategyKind strategy_from_string(const std::string& name);
std::string to_string(StrategyKind kind);

enum class ReplayPolicy { Reservoir, KeyframeFifo };

struct ReplayConfig {
  int capacity = 10;            // stored batches; 0 is the degenerate always-empty buffer
  int sample_batches = 2;       // batches drawn per step (ReplayUpper uses all)
  ReplayPolicy policy = ReplayPolicy::Reservoir;
  int keyframe_interval = 1;    // KeyframeFifo: insert every n-th batch
};

struct StrategyConfig {
  StrategyKind kind = StrategyKind::Naive;
  int inner_steps = 10;
  double step_size = 1e-2;
  ConsensusConfig consensus;
  ReplayConfig replay;
  double reg_lambda = 1.0;      // MAS/EWC penalty strength
};

struct StepLog {
  LossBreakdown loss;
  double residual = 0.0;
  double mean_w_current = 0.0;
  double mean_w_hist = 0.0;
  double masked_fraction = 0.0;
  std::size_t state_bytes = 0;
};

// Bounded storage of past batches for the replay baselines.
class ReplayBuffer {
 public:
  ReplayBuffer(int capacity, ReplayPolicy policy, int keyframe_interval);

  void insert(const RayBatch& batch, std::uint64_t seed);
  /// Uniform sample without replacement of up to `count` stored batches
  /// (count < 0 returns everything, oldest first).
  std::vector<const RayBatch*> sample(int count, std::uint64_t seed) const;

  std::size_t size() const { return stored_.size(); }
  std::size_t byte_size() const;

 private:
  int capacity_;
  ReplayPolicy policy_;
  int keyframe_interval_;
  std::uint64_t offered_ = 0;
  std::vector<RayBatch> stored_;
};

// Continual-learning strategy behind a uniform step interface. One logical
// writer per instance; a numerical failure restores the pre-step model state
// and rethrows.
class Strategy {
 public:
  Strategy(FieldModel& model, LossWeights weights, RenderConfig rcfg)
      : model_(model), weights_(weights), rcfg_(rcfg) {}
  virtual ~Strategy() = default;

  virtual StepLog step(const RayBatch& batch, std::uint64_t step_seed) = 0;
  virtual std::size_t tracked_state_bytes() const = 0;
  virtual std::uint64_t importance_violations() const { return 0; }

  FieldModel& model() { return model_; }

 protected:
  FieldModel& model_;
  LossWeights weights_;
  RenderConfig rcfg_;
};

std::unique_ptr<Strategy> make_strategy(const StrategyConfig& cfg, FieldModel& model,
                                        const LossWeights& weights, const RenderConfig& rcfg);

// Concrete strategies (exposed for targeted tests).

class NaiveStrategy : public Strategy {
 public:
  NaiveStrategy(FieldModel& model, LossWeights w, RenderConfig r, int inner_steps,
                double step_size)
      : Strategy(model, w, r), inner_steps_(inner_steps), step_size_(step_size) {}
  StepLog step(const RayBatch& batch, std::uint64_t step_seed) override;
  std::size_t tracked_state_bytes() const override;

 private:
  int inner_steps_;
  double step_size_;
};

class ReplayStrategy : public Strategy {
 public:
  ReplayStrategy(FieldModel& model, LossWeights w, RenderConfig r, int inner_steps,
                 double step_size, ReplayConfig cfg, bool full_buffer)
      : Strategy(model, w, r),
        inner_steps_(inner_steps),
        step_size_(step_size),
        cfg_(cfg),
        full_buffer_(full_buffer),
        buffer_(full_buffer ? std::numeric_limits<int>::max() : cfg.capacity, cfg.policy,
                cfg.keyframe_interval) {}
  StepLog step(const RayBatch& batch, std::uint64_t step_seed) override;
  std::size_t tracked_state_bytes() const override;
  const ReplayBuffer& buffer() const { return buffer_; }

 private:
  int inner_steps_;
  double step_size_;
  ReplayConfig cfg_;
  bool full_buffer_;
  ReplayBuffer buffer_;
};

// Quadratic anchor penalty with accumulated importance (omega).
class RegularizedStrategy : public Strategy {
 public:
  enum class Mode { Mas, Ewc };
  RegularizedStrategy(FieldModel& model, LossWeights w, RenderConfig r, int inner_steps,
                      double step_size, double lambda, Mode mode);
  StepLog step(const RayBatch& batch, std::uint64_t step_seed) override;
  std::size_t tracked_state_bytes() const override;
  const std::vector<double>& omega() const { return omega_.u; }
  const ParamVector& anchor() const { return anchor_; }

 private:
  int inner_steps_;
  double step_size_;
  double lambda_;
  Mode mode_;
  ParamVector anchor_;
  ImportanceVector omega_;
};

class ConsensusStrategy : public Strategy {
 public:
  ConsensusStrategy(FieldModel& model, LossWeights w, RenderConfig r, ConsensusConfig cfg)
      : Strategy(model, w, r), cfg_(cfg) {}
  StepLog step(const RayBatch& batch, std::uint64_t step_seed) override;
  std::size_t tracked_state_bytes() const override;
  std::uint64_t importance_violations() const override { return state_.importance_violations; }
  const ConsensusState& state() const { return state_; }

 private:
  ConsensusConfig cfg_;
  ConsensusState state_;
};

}  // namespace tcmap
