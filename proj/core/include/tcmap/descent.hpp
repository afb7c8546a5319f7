#pragma once

#include <cstdint>

#include "tcmap/loss.hpp"
#include "tcmap/params.hpp"

namespace tcmap {

// Quadratic consensus penalty plus dual term, applied to the grid partition:
//   theta^T p + (rho/2) |theta - z|^2        (augmented-Lagrangian pairing)
//   theta^T p +  rho    |theta - z|^2        (literal_form)
struct ConsensusPenalty {
  const std::vector<double>* z = nullptr;
  const std::vector<double>* dual = nullptr;
  double rho = 0.0;
  bool literal_form = false;
  IndexRange range;
};

// Importance-weighted anchor penalty (MAS/EWC): (lambda/2) sum_i omega_i (theta_i - anchor_i)^2.
struct AnchorPenalty {
  const std::vector<double>* anchor = nullptr;
  const std::vector<double>* omega = nullptr;
  double lambda = 0.0;
};

struct DescentOptions {
  int steps = 10;
  double step_size = 1e-2;
};

// Seed plumbing shared by all strategies so that reductions (consensus with no
// snapshots == naive, rho = 0 == naive, ...) are bitwise reproductions.
inline std::uint64_t batch_sample_seed(std::uint64_t step_seed) {
  return mix_seed(step_seed, 0x73616d706c65ULL);
}
inline std::uint64_t round_seed(std::uint64_t step_seed, int round) {
  return mix_seed(step_seed, 0x726f756e64ULL, static_cast<std::uint64_t>(round));
}

/// Momentum-free gradient descent on the batch objective plus optional
/// penalties. Mutates the model's parameters in place; throws NumericalError
/// on a non-finite step (caller restores state). Returns the breakdown
/// evaluated at the final inner iterate.
LossBreakdown descend(FieldModel& model, BatchEvaluator& eval, const LossWeights& weights,
                      const DescentOptions& opts, std::uint64_t seed,
                      const ConsensusPenalty* consensus = nullptr,
                      const AnchorPenalty* anchor = nullptr);

}  // namespace tcmap
