#include "occtrack/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace occtrack {

std::vector<Cluster> connected_clusters(const ByteGrid& mask) {
  const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  Eigen::ArrayXXi seen = Eigen::ArrayXXi::Zero(h, w);
  std::vector<Cluster> clusters;
  std::vector<CellIndex> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask(y, x) || seen(y, x)) continue;
      Cluster c;
      stack.push_back({x, y});
      seen(y, x) = 1;
      while (!stack.empty()) {
        const auto cell = stack.back();
        stack.pop_back();
        c.cells.push_back(cell);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cell.x + dx, ny = cell.y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h || seen(ny, nx) || !mask(ny, nx)) continue;
            seen(ny, nx) = 1;
            stack.push_back({nx, ny});
          }
      }
      std::sort(c.cells.begin(), c.cells.end(),
                [](const CellIndex& a, const CellIndex& b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
      for (const auto& cell : c.cells) c.centroid += Eigen::Vector2d(cell.x, cell.y);
      c.centroid /= static_cast<double>(c.cells.size());
      clusters.push_back(std::move(c));
    }
  return clusters;
}

ByteGrid ConstantVelocityTracker::static_cells() const {
  if (frames_ == 0) return ByteGrid();
  if (frames_ < settings_.static_min_frames) return ByteGrid::Zero(size_, size_);
  const double need = settings_.static_fraction * frames_;
  return (occupied_count_.cast<double>() >= need - 1e-9).cast<std::uint8_t>();
}

void ConstantVelocityTracker::observe(const PartialObservation& x) {
  if (frames_ == 0) {
    size_ = x.size();
    occupied_count_ = Eigen::ArrayXXi::Zero(size_, size_);
  } else if (x.size() != size_) {
    throw ShapeError("tracker observation size changed");
  }
  ++frames_;
  occupied_count_ += (x.occupancy != 0).cast<int>();

  const ByteGrid dynamic = ((x.occupancy != 0) && (static_cells() == 0)).cast<std::uint8_t>();
  auto clusters = connected_clusters(dynamic);

  // Greedy one-to-one association by increasing centroid distance.
  struct Pair {
    double d;
    std::size_t now, prev;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < clusters.size(); ++i)
    for (std::size_t j = 0; j < tracks_.size(); ++j) {
      const double d = (clusters[i].centroid - tracks_[j].cluster.centroid).norm();
      if (d <= settings_.gate_radius) pairs.push_back({d, i, j});
    }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.d < b.d; });
  std::vector<int> match(clusters.size(), -1);
  std::vector<bool> taken(tracks_.size(), false);
  for (const auto& p : pairs) {
    if (match[p.now] >= 0 || taken[p.prev]) continue;
    match[p.now] = static_cast<int>(p.prev);
    taken[p.prev] = true;
  }

  std::vector<Track> next;
  next.reserve(clusters.size());
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    Track t;
    if (match[i] >= 0) {
      const auto& prev = tracks_[static_cast<std::size_t>(match[i])];
      const Eigen::Vector2d step = clusters[i].centroid - prev.cluster.centroid;
      t.velocity = prev.has_velocity ? settings_.smoothing * step + (1 - settings_.smoothing) * prev.velocity : step;
      t.has_velocity = true;
    }
    t.cluster = std::move(clusters[i]);
    next.push_back(std::move(t));
  }
  tracks_ = std::move(next);
}

ByteGrid ConstantVelocityTracker::predict(int n) const {
  if (frames_ == 0) throw std::logic_error("tracker has no observations");
  ByteGrid out = static_cells();
  for (const auto& t : tracks_) {
    const int sx = t.has_velocity ? static_cast<int>(std::lround(n * t.velocity.x())) : 0;
    const int sy = t.has_velocity ? static_cast<int>(std::lround(n * t.velocity.y())) : 0;
    for (const auto& c : t.cluster.cells) {
      const int x = c.x + sx, y = c.y + sy;
      if (x >= 0 && y >= 0 && x < size_ && y < size_) out(y, x) = 1;
    }
  }
  return out;
}

std::vector<ByteGrid> baseline_predict(std::span<const PartialObservation> history, int n,
                                       const BaselineSettings& settings) {
  if (history.size() < 2) throw std::invalid_argument("baseline_predict needs at least two frames");
  ConstantVelocityTracker tracker(settings);
  for (const auto& x : history) tracker.observe(x);
  std::vector<ByteGrid> out;
  for (int k = 1; k <= n; ++k) out.push_back(tracker.predict(k));
  return out;
}

}  // namespace occtrack
