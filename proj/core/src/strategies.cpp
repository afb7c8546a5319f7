#include "tcmap/strategies.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace tcmap {

StrategyKind strategy_from_string(const std::string& name) {
  if (name == "consensus") return StrategyKind::Consensus;
  if (name == "naive") return StrategyKind::Naive;
  if (name == "replay") return StrategyKind::Replay;
  if (name == "replay_upper") return StrategyKind::ReplayUpper;
  if (name == "mas") return StrategyKind::Mas;
  if (name == "ewc") return StrategyKind::Ewc;
  throw std::invalid_argument("unknown strategy: " + name);
}

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Consensus: return "consensus";
    case StrategyKind::Naive: return "naive";
    case StrategyKind::Replay: return "replay";
    case StrategyKind::ReplayUpper: return "replay_upper";
    case StrategyKind::Mas: return "mas";
    case StrategyKind::Ewc: return "ewc";
  }
  return "naive";
}

ReplayBuffer::ReplayBuffer(int capacity, ReplayPolicy policy, int keyframe_interval)
    : capacity_(capacity), policy_(policy), keyframe_interval_(std::max(1, keyframe_interval)) {}

void ReplayBuffer::insert(const RayBatch& batch, std::uint64_t seed) {
  const std::uint64_t index = offered_++;
  if (capacity_ <= 0) return;
  if (policy_ == ReplayPolicy::KeyframeFifo) {
    if (index % static_cast<std::uint64_t>(keyframe_interval_) != 0) return;
    stored_.push_back(batch);
    if (static_cast<int>(stored_.size()) > capacity_) stored_.erase(stored_.begin());
  } else {
    if (static_cast<int>(stored_.size()) < capacity_) {
      stored_.push_back(batch);
    } else {
      Rng rng(mix_seed(seed, 0x7265736572ULL, index));
      std::uniform_int_distribution<std::uint64_t> pick(0, index);
      const std::uint64_t j = pick(rng);
      if (j < static_cast<std::uint64_t>(capacity_)) stored_[j] = batch;
    }
  }
}

std::vector<const RayBatch*> ReplayBuffer::sample(int count, std::uint64_t seed) const {
  std::vector<const RayBatch*> out;
  if (stored_.empty()) return out;
  if (count < 0 || count >= static_cast<int>(stored_.size())) {
    for (const auto& b : stored_) out.push_back(&b);
    return out;
  }
  std::vector<std::size_t> idx(stored_.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(seed, 0x7374ULL));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  for (std::size_t i : idx) out.push_back(&stored_[i]);
  return out;
}

std::size_t ReplayBuffer::byte_size() const {
  std::size_t b = sizeof(*this);
  for (const auto& batch : stored_) b += batch.byte_size();
  return b;
}

namespace {

// Shared pre-step save / descend / restore-on-failure skeleton.
template <typename Fn>
StepLog guarded_step(FieldModel& model, Fn&& body) {
  const ParamVector saved = model.params();
  try {
    return body();
  } catch (const NumericalError&) {
    model.set_params(saved);
    throw;
  }
}

}  // namespace

StepLog NaiveStrategy::step(const RayBatch& batch, std::uint64_t step_seed) {
  return guarded_step(model_, [&] {
    BatchEvaluator eval(model_, batch, rcfg_, batch_sample_seed(step_seed));
    StepLog log;
    log.loss = descend(model_, eval, weights_, {inner_steps_, step_size_},
                       round_seed(step_seed, 0));
    log.state_bytes = tracked_state_bytes();
    return log;
  });
}

std::size_t NaiveStrategy::tracked_state_bytes() const { return sizeof(*this); }

StepLog ReplayStrategy::step(const RayBatch& batch, std::uint64_t step_seed) {
  StepLog log = guarded_step(model_, [&] {
    RayBatch merged = batch;
    const int want = full_buffer_ ? -1 : cfg_.sample_batches;
    for (const RayBatch* old : buffer_.sample(want, mix_seed(step_seed, 0x627566ULL)))
      merged.rays.insert(merged.rays.end(), old->rays.begin(), old->rays.end());
    BatchEvaluator eval(model_, merged, rcfg_, batch_sample_seed(step_seed));
    StepLog inner;
    inner.loss = descend(model_, eval, weights_, {inner_steps_, step_size_},
                         round_seed(step_seed, 0));
    return inner;
  });
  buffer_.insert(batch, mix_seed(step_seed, 0x696e73ULL));
  log.state_bytes = tracked_state_bytes();
  return log;
}

std::size_t ReplayStrategy::tracked_state_bytes() const { return buffer_.byte_size(); }

RegularizedStrategy::RegularizedStrategy(FieldModel& model, LossWeights w, RenderConfig r,
                                         int inner_steps, double step_size, double lambda,
                                         Mode mode)
    : Strategy(model, w, r),
      inner_steps_(inner_steps),
      step_size_(step_size),
      lambda_(lambda),
      mode_(mode),
      anchor_(model.params()),
      omega_(ImportanceVector::zeros(model.layout().total)) {}

StepLog RegularizedStrategy::step(const RayBatch& batch, std::uint64_t step_seed) {
  StepLog log = guarded_step(model_, [&] {
    BatchEvaluator eval(model_, batch, rcfg_, batch_sample_seed(step_seed));
    AnchorPenalty ap;
    ap.anchor = &anchor_.values;
    ap.omega = &omega_.u;
    ap.lambda = lambda_;
    StepLog inner;
    inner.loss = descend(model_, eval, weights_, {inner_steps_, step_size_},
                         round_seed(step_seed, 0), nullptr, &ap);

    if (mode_ == Mode::Mas) {
      omega_ = accumulate_importance(omega_, model_, eval);
    } else {
      // Empirical Fisher diagonal: squared objective gradient at the new state.
      GradientVector grad(model_.layout().total);
      eval.objective_with_gradient(model_, weights_, mix_seed(step_seed, 0x66697368ULL), grad);
      for (std::size_t i = 0; i < omega_.u.size(); ++i) omega_.u[i] += grad[i] * grad[i];
    }
    return inner;
  });
  anchor_ = model_.params();  // online anchor refresh, once per time step
  log.state_bytes = tracked_state_bytes();
  return log;
}

std::size_t RegularizedStrategy::tracked_state_bytes() const {
  return sizeof(*this) + anchor_.values.size() * sizeof(double) +
         omega_.u.size() * sizeof(double);
}

StepLog ConsensusStrategy::step(const RayBatch& batch, std::uint64_t step_seed) {
  ConsensusStepLog inner = consensus_step(model_, state_, batch, cfg_, weights_, rcfg_, step_seed);
  StepLog log;
  log.loss = inner.loss;
  log.residual = inner.residual;
  log.mean_w_current = inner.mean_w_current;
  log.mean_w_hist = inner.mean_w_hist;
  log.masked_fraction = inner.masked_fraction;
  log.state_bytes = tracked_state_bytes();
  return log;
}

std::size_t ConsensusStrategy::tracked_state_bytes() const {
  return sizeof(*this) + state_.byte_size();
}

std::unique_ptr<Strategy> make_strategy(const StrategyConfig& cfg, FieldModel& model,
                                        const LossWeights& weights, const RenderConfig& rcfg) {
  switch (cfg.kind) {
    case StrategyKind::Consensus:
      return std::make_unique<ConsensusStrategy>(model, weights, rcfg, cfg.consensus);
    case StrategyKind::Naive:
      return std::make_unique<NaiveStrategy>(model, weights, rcfg, cfg.inner_steps,
                                             cfg.step_size);
    case StrategyKind::Replay:
      return std::make_unique<ReplayStrategy>(model, weights, rcfg, cfg.inner_steps,
                                              cfg.step_size, cfg.replay, false);
    case StrategyKind::ReplayUpper:
      return std::make_unique<ReplayStrategy>(model, weights, rcfg, cfg.inner_steps,
                                              cfg.step_size, cfg.replay, true);
    case StrategyKind::Mas:
      return std::make_unique<RegularizedStrategy>(model, weights, rcfg, cfg.inner_steps,
                                                   cfg.step_size, cfg.reg_lambda,
                                                   RegularizedStrategy::Mode::Mas);
    case StrategyKind::Ewc:
      return std::make_unique<RegularizedStrategy>(model, weights, rcfg, cfg.inner_steps,
                                                   cfg.step_size, cfg.reg_lambda,
                                                   RegularizedStrategy::Mode::Ewc);
  }
  throw std::invalid_argument("unknown strategy kind");
}

}  // namespace tcmap
