#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "tcmap/common.hpp"

namespace tcmap {

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
};

// Partition of the flat parameter vector: per-level grid slices followed by
// the geometry- and color-decoder slices. Immutable once built.
struct ParamLayout {
  std::vector<IndexRange> grid_levels;
  IndexRange grid;      // union of all grid levels (contiguous)
  IndexRange geometry;  // geometry decoder weights+biases
  IndexRange color;     // color decoder weights+biases
  std::size_t total = 0;
};

// Flat view of all learnable parameters. Plain data; cheap to snapshot.
struct ParamVector {
  std::vector<double> values;
  std::shared_ptr<const ParamLayout> layout;

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// Gradient carrier aligned with a ParamLayout.
struct GradientVector {
  std::vector<double> values;

  explicit GradientVector(std::size_t n = 0) : values(n, 0.0) {}
  void reset(std::size_t n) { values.assign(n, 0.0); }
  void zero() { values.assign(values.size(), 0.0); }
  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

}  // namespace tcmap
