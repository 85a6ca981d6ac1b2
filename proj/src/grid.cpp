#include "occtrack/grid.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace occtrack {

void GridConfig::validate() const {
  if (size < 8 || size % 2 != 0)
    throw std::invalid_argument("grid size must be even and >= 8, got " + std::to_string(size));
  if (!(cell_size > 0) || !std::isfinite(cell_size))
    throw std::invalid_argument("cell size must be positive, got " + std::to_string(cell_size));
}

std::optional<CellIndex> world_to_cell(const Eigen::Vector2d& point, const GridConfig& grid) {
  const Eigen::Vector2d c = grid.to_cell_coords(point);
  const double fx = std::floor(c.x()), fy = std::floor(c.y());
  if (fx < 0 || fy < 0 || fx >= grid.size || fy >= grid.size) return std::nullopt;
  return CellIndex{static_cast<int>(fx), static_cast<int>(fy)};
}

void LaserScan::validate() const {
  if (ranges.size() != angles.size() || no_return.size() != angles.size())
    throw std::invalid_argument("laser scan arrays differ in length");
  for (std::size_t i = 1; i < angles.size(); ++i)
    if (!(angles[i] > angles[i - 1])) throw std::invalid_argument("laser scan angles must be strictly increasing");
  for (std::size_t i = 0; i < ranges.size(); ++i)
    if (!no_return[i] && !(ranges[i] > 0 && ranges[i] <= max_range))
      throw std::invalid_argument("beam " + std::to_string(i) + " range outside (0, max_range]");
}

PartialObservation empty_observation(const GridConfig& grid) {
  return {ByteGrid::Zero(grid.size, grid.size), ByteGrid::Zero(grid.size, grid.size)};
}

PartialObservation merge(const PartialObservation& a, const PartialObservation& b) {
  if (a.size() != b.size()) throw ShapeError("cannot merge observations of different grid sizes");
  return {a.visibility.max(b.visibility), a.occupancy.max(b.occupancy)};
}

std::vector<CellIndex> trace_cells(const Eigen::Vector2d& origin, const Eigen::Vector2d& direction, double length,
                                   int grid_size) {
  std::vector<CellIndex> cells;
  const double inf = std::numeric_limits<double>::infinity();
  const Eigen::Vector2d end = origin + length * direction;
  const int end_x = static_cast<int>(std::floor(end.x()));
  const int end_y = static_cast<int>(std::floor(end.y()));

  int x = static_cast<int>(std::floor(origin.x()));
  int y = static_cast<int>(std::floor(origin.y()));
  const int step_x = direction.x() > 0 ? 1 : -1;
  const int step_y = direction.y() > 0 ? 1 : -1;
  // Parameter at which the ray crosses the next vertical / horizontal cell boundary.
  double next_x = inf, next_y = inf;
  if (direction.x() != 0) next_x = ((direction.x() > 0 ? x + 1 : x) - origin.x()) / direction.x();
  if (direction.y() != 0) next_y = ((direction.y() > 0 ? y + 1 : y) - origin.y()) / direction.y();
  const double delta_x = direction.x() != 0 ? 1.0 / std::abs(direction.x()) : inf;
  const double delta_y = direction.y() != 0 ? 1.0 / std::abs(direction.y()) : inf;

  auto inside = [grid_size](int cx, int cy) { return cx >= 0 && cy >= 0 && cx < grid_size && cy < grid_size; };
  const int max_steps = 4 * grid_size + static_cast<int>(2 * length) + 4;
  for (int step = 0; step < max_steps; ++step) {
    if (!inside(x, y)) {
      // The grid is convex: once a ray has left it, it never re-enters.
      if (!cells.empty()) break;
    } else {
      cells.push_back({x, y});
    }
    if (x == end_x && y == end_y) break;
    const double next = std::min(next_x, next_y);
    if (next > length) break;
    if (next_x < next_y) {
      x += step_x;
      next_x += delta_x;
    } else if (next_y < next_x) {
      y += step_y;
      next_y += delta_y;
    } else {  // exact lattice corner: the ray only touches the side cells in a point
      x += step_x;
      y += step_y;
      next_x += delta_x;
      next_y += delta_y;
    }
  }
  return cells;
}

PartialObservation raytrace_scan(const LaserScan& scan, const GridConfig& grid) {
  if (scan.size() == 0) throw std::invalid_argument("raytrace_scan: empty scan");
  if (grid.size < 1 || !(grid.cell_size > 0)) throw std::invalid_argument("raytrace_scan: invalid grid");
  PartialObservation obs = empty_observation(grid);
  const Eigen::Vector2d origin = grid.sensor_cell_coords();
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const double angle = scan.angles[i];
    const Eigen::Vector2d dir(std::cos(angle), std::sin(angle));
    const bool returned = !scan.no_return[i];
    const double length = (returned ? scan.ranges[i] : scan.max_range) / grid.cell_size;
    const auto cells = trace_cells(origin, dir, length, grid.size);
    if (cells.empty()) continue;
    const Eigen::Vector2d end = origin + length * dir;
    const CellIndex end_cell{static_cast<int>(std::floor(end.x())), static_cast<int>(std::floor(end.y()))};
    for (const auto& c : cells) {
      obs.visibility(c.y, c.x) = 1;
      if (returned && c == end_cell) obs.occupancy(c.y, c.x) = 1;
    }
  }
  return obs;
}

}  // namespace occtrack
