#include "tcmap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace tcmap {

namespace {

// Uniform-grid nearest-neighbor index with expanding-ring search.
class PointIndex {
 public:
  explicit PointIndex(const std::vector<Vec>& points) : points_(points) {
    lo_ = {std::numeric_limits<double>::max(), std::numeric_limits<double>::max(), 0.0};
    Vec hi{std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest(), 0.0};
    for (const auto& p : points_) {
      for (int d = 0; d < 2; ++d) {
        lo_[d] = std::min(lo_[d], p[d]);
        hi[d] = std::max(hi[d], p[d]);
      }
    }
    const double span = std::max({hi[0] - lo_[0], hi[1] - lo_[1], 1e-9});
    // Aim for a few points per cell.
    const int target = std::max(1, static_cast<int>(std::sqrt(points_.size() / 2.0)));
    cells_ = std::min(256, target);
    h_ = span / cells_;
    for (std::size_t i = 0; i < points_.size(); ++i)
      buckets_[key(cell_of(points_[i]))].push_back(i);
  }

  double nearest_distance(const Vec& q) const {
    const auto [cx, cy] = cell_of(q);
    double best = std::numeric_limits<double>::max();
    for (int ring = 0;; ++ring) {
      // Once a candidate is found, rings beyond best/h cannot improve it.
      if (best < std::numeric_limits<double>::max() && (ring - 1) * h_ > best) break;
      bool any_cell = false;
      for (int dx = -ring; dx <= ring; ++dx) {
        for (int dy = -ring; dy <= ring; ++dy) {
          if (std::max(std::abs(dx), std::abs(dy)) != ring) continue;
          const auto it = buckets_.find(key({cx + dx, cy + dy}));
          if (it == buckets_.end()) continue;
          any_cell = true;
          for (std::size_t i : it->second) {
            const double dxp = points_[i][0] - q[0];
            const double dyp = points_[i][1] - q[1];
            best = std::min(best, std::sqrt(dxp * dxp + dyp * dyp));
          }
        }
      }
      (void)any_cell;
      if (ring > cells_ * 2 + 2 && best < std::numeric_limits<double>::max()) break;
      if (ring > cells_ * 4 + 4) break;  // all buckets exhausted
    }
    return best;
  }

 private:
  std::pair<int, int> cell_of(const Vec& p) const {
    return {static_cast<int>(std::floor((p[0] - lo_[0]) / h_)),
            static_cast<int>(std::floor((p[1] - lo_[1]) / h_))};
  }
  static std::int64_t key(std::pair<int, int> c) {
    return (static_cast<std::int64_t>(c.first) << 32) ^ (c.second & 0xffffffffLL);
  }

  const std::vector<Vec>& points_;
  Vec lo_{0.0, 0.0, 0.0};
  double h_ = 1.0;
  int cells_ = 1;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> buckets_;
};

}  // namespace

PointSet extract_zero_set(const FieldModel& model, int resolution) {
  if (model.config().dims != 2)
    throw std::invalid_argument("extract_zero_set: requires a 2D field");
  if (resolution < 8) throw std::invalid_argument("extract_zero_set: resolution must be >= 8");
  const Aabb& box = model.config().domain;
  const int n = resolution + 1;  // nodes per axis

  std::vector<double> s(static_cast<std::size_t>(n) * n);
  PointCache cache;
  model.init_cache(cache);
  for (int ix = 0; ix < n; ++ix) {
    const double x = box.lo[0] + box.extent(0) * ix / resolution;
    for (int iy = 0; iy < n; ++iy) {
      const double y = box.lo[1] + box.extent(1) * iy / resolution;
      model.forward_point({x, y, 0.0}, cache);
      s[static_cast<std::size_t>(ix) * n + iy] = cache.s;
    }
  }

  PointSet out;
  out.source = PointSource::Reconstructed;
  auto node = [&](int ix, int iy) {
    return Vec{box.lo[0] + box.extent(0) * ix / resolution,
               box.lo[1] + box.extent(1) * iy / resolution, 0.0};
  };
  auto emit = [&](int ax, int ay, int bx, int by) {
    const double sa = s[static_cast<std::size_t>(ax) * n + ay];
    const double sb = s[static_cast<std::size_t>(bx) * n + by];
    if ((sa < 0.0) == (sb < 0.0)) return;
    const double t = sa / (sa - sb);
    const Vec a = node(ax, ay), b = node(bx, by);
    out.points.push_back({a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), 0.0});
  };
  for (int ix = 0; ix < n; ++ix)
    for (int iy = 0; iy < n; ++iy) {
      if (ix + 1 < n) emit(ix, iy, ix + 1, iy);
      if (iy + 1 < n) emit(ix, iy, ix, iy + 1);
    }
  return out;
}

double directed_distance(const PointSet& a, const PointSet& b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("directed_distance: empty point set");
  PointIndex index(b.points);
  double sum = 0.0;
  for (const auto& p : a.points) sum += index.nearest_distance(p);
  return sum / static_cast<double>(a.size());
}

MetricsReport report(const PointSet& recon, const PointSet& gt, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("report: tau must be positive");
  if (gt.empty()) throw std::invalid_argument("report: empty ground-truth set");
  MetricsReport r;
  r.tau = tau;
  r.recon_count = recon.size();
  r.gt_count = gt.size();
  if (recon.empty()) {
    r.empty_reconstruction = true;
    r.artifacts = 0.0;
    r.holes = std::numeric_limits<double>::infinity();
    r.chamfer = std::numeric_limits<double>::infinity();
    return r;  // fractions stay 0
  }

  PointIndex gt_index(gt.points);
  PointIndex recon_index(recon.points);
  double sum_rg = 0.0;
  std::size_t hit_rg = 0;
  for (const auto& p : recon.points) {
    const double d = gt_index.nearest_distance(p);
    sum_rg += d;
    if (d <= tau) ++hit_rg;
  }
  double sum_gr = 0.0;
  std::size_t hit_gr = 0;
  for (const auto& p : gt.points) {
    const double d = recon_index.nearest_distance(p);
    sum_gr += d;
    if (d <= tau) ++hit_gr;
  }
  r.artifacts = sum_rg / static_cast<double>(recon.size());
  r.holes = sum_gr / static_cast<double>(gt.size());
  r.chamfer = 0.5 * (r.artifacts + r.holes);
  r.precision_at_tau = static_cast<double>(hit_rg) / static_cast<double>(recon.size());
  r.completion_ratio = static_cast<double>(hit_gr) / static_cast<double>(gt.size());
  const double pr = r.precision_at_tau + r.completion_ratio;
  r.f1_at_tau = pr > 0.0 ? 2.0 * r.precision_at_tau * r.completion_ratio / pr : 0.0;
  return r;
}

PointSet filter_observed(const PointSet& points, const std::vector<Frustum>& frusta) {
  PointSet out;
  out.source = points.source;
  for (const auto& p : points.points)
    for (const auto& f : frusta)
      if (in_frustum(f, p)) {
        out.points.push_back(p);
        break;
      }
  return out;
}

}  // namespace tcmap
