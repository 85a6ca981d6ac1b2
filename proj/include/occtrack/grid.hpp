#pragma once

#include "occtrack/tensor.hpp"

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace occtrack {

/// Square occupancy grid centred on the sensor.
///
/// Continuous cell coordinates place cell (x, y) on [x, x+1) x [y, y+1); the
/// sensor sits at (M/2, M/2). For even M that is the corner shared by the four
/// central cells, for odd M the centre of the middle cell.
struct GridConfig {
  int size = 100;          // M, cells per side
  double cell_size = 0.2;  // metres per cell

  /// Enforces M >= 8, M even, cell_size > 0. Throws std::invalid_argument.
  void validate() const;

  double half_extent() const { return 0.5 * size * cell_size; }
  Eigen::Vector2d sensor_cell_coords() const { return Eigen::Vector2d::Constant(0.5 * size); }
  /// Continuous cell coordinates of a point given in metres.
  Eigen::Vector2d to_cell_coords(const Eigen::Vector2d& metres) const {
    return metres / cell_size + sensor_cell_coords();
  }
  /// Metric position of a cell centre.
  Eigen::Vector2d cell_center(int x, int y) const {
    return (Eigen::Vector2d(x + 0.5, y + 0.5) - sensor_cell_coords()) * cell_size;
  }

  friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

struct CellIndex {
  int x = 0;
  int y = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// floor(p / cell_size + M/2) per axis; nullopt outside [0, M).
std::optional<CellIndex> world_to_cell(const Eigen::Vector2d& point, const GridConfig& grid);

/// One 2D laser sweep. A no-return beam marks free space up to max_range;
/// its stored range equals max_range.
///
/// Equality compares the beams only: max_range is sensor metadata that episode
/// files do not carry (it is recovered from no-return beams on load).
struct LaserScan {
  std::vector<float> angles;  // radians, strictly increasing
  std::vector<float> ranges;  // metres
  std::vector<std::uint8_t> no_return;
  float max_range = 0;

  std::size_t size() const { return angles.size(); }
  /// Checks sizes, monotone angles and 0 < range <= max_range for returns.
  void validate() const;

  friend bool operator==(const LaserScan& a, const LaserScan& b) {
    return a.angles == b.angles && a.ranges == b.ranges && a.no_return == b.no_return;
  }
};

/// The network input: which cells were observed and which of those were occupied.
struct PartialObservation {
  ByteGrid visibility;  // 1 = observed
  ByteGrid occupancy;   // 1 = observed occupied; implies visibility

  int size() const { return static_cast<int>(visibility.rows()); }
  bool consistent() const { return ((occupancy != 0) <= (visibility != 0)).all(); }
  bool is_empty() const { return (visibility == 0).all() && (occupancy == 0).all(); }

  friend bool operator==(const PartialObservation& a, const PartialObservation& b) {
    return a.visibility.rows() == b.visibility.rows() && a.visibility.cols() == b.visibility.cols() &&
           (a.visibility == b.visibility).all() && (a.occupancy == b.occupancy).all();
  }
};

/// All-unobserved input used while the network predicts without measurements.
PartialObservation empty_observation(const GridConfig& grid);

/// Cell-wise merge: observed wins over unobserved, occupied wins over free.
PartialObservation merge(const PartialObservation& a, const PartialObservation& b);

/// Supercover traversal of the segment from `origin` along `direction` (unit
/// vector, cell units) up to parameter `length`. Cells are visited in order and
/// clipped to the grid. The last visited cell is the one containing the end point.
std::vector<CellIndex> trace_cells(const Eigen::Vector2d& origin, const Eigen::Vector2d& direction, double length,
                                   int grid_size);

/// Ray-traces every beam of a scan: cells before the return are free, the
/// return cell is occupied, cells beyond stay unobserved.
PartialObservation raytrace_scan(const LaserScan& scan, const GridConfig& grid);

/// Encodes an observation as a [2, M, M] tensor (visibility, occupancy).
template <typename Scalar>
Tensor<Scalar> encode_observation(const PartialObservation& obs) {
  const int m = obs.size();
  Tensor<Scalar> t({2, m, m});
  for (int y = 0; y < m; ++y)
    for (int x = 0; x < m; ++x) {
      t(0, y, x) = static_cast<Scalar>(obs.visibility(y, x));
      t(1, y, x) = static_cast<Scalar>(obs.occupancy(y, x));
    }
  return t;
}

}  // namespace occtrack
