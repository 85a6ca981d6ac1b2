#pragma once

#include "occtrack/grid.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace occtrack {

/// Fixed constants of the cluster + constant-velocity tracker.
struct BaselineSettings {
  double gate_radius = 5.0;      // cells, nearest-centroid association gate
  double smoothing = 0.5;        // weight of the newest displacement in the velocity estimate
  double static_fraction = 0.9;  // cells occupied in at least this share of the history are static
  int static_min_frames = 5;     // no cell is static before this many frames were seen
};

struct Cluster {
  std::vector<CellIndex> cells;
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
};

/// 8-connected components of the non-zero cells of `mask`, ordered by first cell in row-major scan.
std::vector<Cluster> connected_clusters(const ByteGrid& mask);

/// Incremental tracker: cluster observed occupied cells, associate clusters to
/// the previous frame, keep an exponentially smoothed velocity per track and
/// extrapolate tracks rigidly.
class ConstantVelocityTracker {
 public:
  explicit ConstantVelocityTracker(BaselineSettings settings = {}) : settings_(settings) {}

  void reset() { *this = ConstantVelocityTracker(settings_); }
  void observe(const PartialObservation& x);

  /// Occupancy at horizon n (n = 0 gives the current estimate): static cells plus
  /// every track's cells shifted by round(n * velocity). Tracks without a
  /// velocity stay in place.
  ByteGrid predict(int n) const;

  struct Track {
    Cluster cluster;
    Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // cells per frame
    bool has_velocity = false;
  };
  const std::vector<Track>& tracks() const { return tracks_; }
  ByteGrid static_cells() const;

 private:
  BaselineSettings settings_;
  int frames_ = 0;
  int size_ = 0;
  Eigen::ArrayXXi occupied_count_;
  std::vector<Track> tracks_;
};

/// Runs the tracker over `history` (at least two frames) and returns horizons 1..n.
std::vector<ByteGrid> baseline_predict(std::span<const PartialObservation> history, int n,
                                       const BaselineSettings& settings = {});

}  // namespace occtrack
