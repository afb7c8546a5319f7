#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace tcmap {

// Spatial vector with runtime dimensionality (2 by default, 3 supported).
// Unused trailing components are kept at zero so comparisons stay exact.
constexpr int kMaxDims = 3;
using Vec = std::array<double, kMaxDims>;
using Color = std::array<double, 3>;

inline Vec make_vec(double x, double y, double z = 0.0) { return {x, y, z}; }

inline double dot(const Vec& a, const Vec& b, int dims) {
  double s = 0.0;
  for (int d = 0; d < dims; ++d) s += a[d] * b[d];
  return s;
}

inline double norm(const Vec& a, int dims) { return std::sqrt(dot(a, a, dims)); }

inline Vec sub(const Vec& a, const Vec& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

inline Vec add_scaled(const Vec& a, const Vec& dir, double t) {
  return {a[0] + t * dir[0], a[1] + t * dir[1], a[2] + t * dir[2]};
}

// Axis-aligned domain box in world units.
struct Aabb {
  Vec lo{0.0, 0.0, 0.0};
  Vec hi{1.0, 1.0, 0.0};

  double extent(int d) const { return hi[d] - lo[d]; }
  double diameter(int dims) const {
    double s = 0.0;
    for (int d = 0; d < dims; ++d) s += extent(d) * extent(d);
    return std::sqrt(s);
  }
  Vec clamp(const Vec& x, int dims) const {
    Vec r = x;
    for (int d = 0; d < dims; ++d) r[d] = std::min(std::max(x[d], lo[d]), hi[d]);
    return r;
  }
  // Maps into [0,1]^dims, clamping out-of-domain queries to the boundary.
  Vec normalize(const Vec& x, int dims) const {
    Vec r{0.0, 0.0, 0.0};
    for (int d = 0; d < dims; ++d) {
      double t = (x[d] - lo[d]) / extent(d);
      r[d] = std::min(std::max(t, 0.0), 1.0);
    }
    return r;
  }
};

// Raised when an optimization step or loss evaluation produces a non-finite
// value; carries the name of the offending term.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& term, const std::string& detail)
      : std::runtime_error("non-finite value in " + term + ": " + detail), term_(term) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds from
// (run seed, step index, purpose tag) so parallel callers never share state.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1) + 0xbf58476d1ce4e5b9ULL * (c + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace tcmap
