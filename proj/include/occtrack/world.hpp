#pragma once

#include "occtrack/grid.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace occtrack {

enum class ObjectClass : std::uint8_t { background = 0, pedestrian = 1, car = 2, cyclist = 3 };

inline constexpr int kNumClasses = 4;
const char* class_name(ObjectClass cls);

/// Disc or oriented rectangle in metres. A rectangle's length runs along its heading.
struct Footprint {
  enum class Kind : std::uint8_t { disc, rectangle };

  Kind kind = Kind::disc;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double heading = 0;
  double radius = 0;
  double length = 0;
  double width = 0;

  static Footprint disc(const Eigen::Vector2d& center, double radius);
  static Footprint rectangle(const Eigen::Vector2d& center, double length, double width, double heading = 0);

  bool contains(const Eigen::Vector2d& p) const;
  /// Signed distance from p to the boundary, negative inside.
  double distance(const Eigen::Vector2d& p) const;
  /// Smallest t >= 0 with origin + t*dir on the shape (0 when origin is inside).
  std::optional<double> intersect(const Eigen::Vector2d& origin, const Eigen::Vector2d& dir) const;
  double bounding_radius() const;
};

struct SceneObject {
  std::uint64_t id = 0;  // spawn order; later ids are drawn on top
  ObjectClass cls = ObjectClass::pedestrian;
  Footprint body;
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // m/s
  double path_heading = 0;   // heading chosen at spawn, used to bound heading drift
  double heading_jitter = 0; // max per-frame heading perturbation, radians
};

/// Per-class spawn and kinematic profile.
struct ClassProfile {
  double spawn_rate = 0;  // objects per second
  double speed_min = 0, speed_max = 0;
  double size_min = 0, size_max = 0;    // disc radius, or rectangle length
  double width_min = 0, width_max = 0;  // rectangle width (unused for discs)
  double heading_jitter = 0;            // radians per frame
  double path_spread = 0;               // max deviation of the path from the edge normal
};

struct SimConfig {
  GridConfig grid{48, 0.2};
  double frame_rate = 8.0;
  std::vector<Footprint> static_map;
  std::array<ClassProfile, 3> profiles{};  // pedestrian, car, cyclist
  int beam_count = 180;
  double angular_span = 2 * 3.14159265358979323846;
  double max_range = 15.0;
  double range_sigma = 0.02;
  int warmup_frames = 40;
  double keep_out_radius = 0.6;  // clearance kept around the sensor by spawned paths
  double despawn_margin = 0.5;

  const ClassProfile& profile(ObjectClass cls) const { return profiles.at(static_cast<std::size_t>(cls) - 1); }
  ClassProfile& profile(ObjectClass cls) { return profiles.at(static_cast<std::size_t>(cls) - 1); }

  void validate() const;
  /// Stable 64-bit digest of every field, used to tie episodes to their generator.
  std::uint64_t digest() const;
};

/// Desk-scale defaults: 48x48 grid of 0.2 m cells, 180 beams over 360 degrees,
/// 15 m range, 2 cm noise, intersection-style static map.
SimConfig default_sim_config();

/// Static obstacles of the built-in intersection world, scaled to the grid extent.
std::vector<Footprint> intersection_static_map(const GridConfig& grid);

struct WorldState {
  std::vector<SceneObject> objects;
  std::uint64_t next_id = 0;
};

using Rng = std::mt19937_64;

/// Advances objects by one frame, removes those beyond the despawn margin and
/// spawns new ones at the grid edges (Poisson per class).
WorldState step_world(WorldState state, const SimConfig& config, Rng& rng);

struct GroundTruth {
  ByteGrid occupancy;  // objects and static map, no occlusion
  ByteGrid classes;    // class index, kIgnoreLabel where unoccupied
};

/// Rasterises by cell-centre containment: static map as background, then
/// objects in spawn order on top.
GroundTruth render_ground_truth(const WorldState& state, const SimConfig& config);

/// Casts every beam from the sensor against the static map and all objects.
LaserScan synthesize_scan(const WorldState& state, const SimConfig& config, Rng& rng);

/// Beam angles: -span/2 + i*span/N.
std::vector<float> beam_angles(const SimConfig& config);

struct Frame {
  PartialObservation observation;
  ByteGrid occupancy;
  ByteGrid classes;
  LaserScan scan;

  friend bool operator==(const Frame& a, const Frame& b) {
    return a.observation == b.observation && (a.occupancy == b.occupancy).all() && (a.classes == b.classes).all() &&
           a.scan == b.scan;
  }
};

struct Episode {
  GridConfig grid;
  int classes = kNumClasses;
  std::uint64_t seed = 0;
  std::vector<Frame> frames;

  int length() const { return static_cast<int>(frames.size()); }
  /// Cell size is compared at the 32-bit precision used on disk.
  friend bool operator==(const Episode& a, const Episode& b) {
    return a.grid.size == b.grid.size &&
           static_cast<float>(a.grid.cell_size) == static_cast<float>(b.grid.cell_size) && a.classes == b.classes &&
           a.seed == b.seed && a.frames == b.frames;
  }
};

/// Deterministic in (config, frames, seed): warm-up, then record frame, step world.
Episode generate_episode(const SimConfig& config, int frames, std::uint64_t seed);

/// Builds one frame from a world state.
Frame capture_frame(const WorldState& state, const SimConfig& config, Rng& rng);

inline constexpr std::array<std::string_view, 3> kScenarioNames = {"occluded-crossing", "static-only",
                                                                   "mixed-traffic"};

/// Hand-authored scenes on the configured static map:
///  occluded-crossing  one pedestrian walking behind the north wall,
///  static-only        no moving objects,
///  mixed-traffic      at least one object of every class.
Episode scripted_scenario(std::string_view name, const SimConfig& config);

}  // namespace occtrack
