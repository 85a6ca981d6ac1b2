#include "occtrack/world.hpp"

#include "occtrack/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace occtrack {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::Vector2d to_local(const Footprint& s, const Eigen::Vector2d& p) {
  const double c = std::cos(s.heading), sn = std::sin(s.heading);
  const Eigen::Vector2d d = p - s.center;
  return {c * d.x() + sn * d.y(), -sn * d.x() + c * d.y()};
}

Eigen::Vector2d rotate_to_local(const Footprint& s, const Eigen::Vector2d& v) {
  const double c = std::cos(s.heading), sn = std::sin(s.heading);
  return {c * v.x() + sn * v.y(), -sn * v.x() + c * v.y()};
}

double wrap_angle(double a) {
  while (a > kPi) a -= 2 * kPi;
  while (a < -kPi) a += 2 * kPi;
  return a;
}

std::array<Eigen::Vector2d, 4> corners(const Footprint& r) {
  const Eigen::Vector2d u(std::cos(r.heading), std::sin(r.heading)), v(-u.y(), u.x());
  const Eigen::Vector2d a = 0.5 * r.length * u, b = 0.5 * r.width * v;
  return {r.center + a + b, r.center + a - b, r.center - a - b, r.center - a + b};
}

/// Separating-axis test for two convex footprints, treating gaps below `margin` as contact.
bool overlaps(const Footprint& a, const Footprint& b, double margin) {
  if (a.kind == Footprint::Kind::disc) return b.distance(a.center) < a.radius + margin;
  if (b.kind == Footprint::Kind::disc) return a.distance(b.center) < b.radius + margin;
  const auto ca = corners(a), cb = corners(b);
  for (double heading : {a.heading, a.heading + 0.5 * kPi, b.heading, b.heading + 0.5 * kPi}) {
    const Eigen::Vector2d axis(std::cos(heading), std::sin(heading));
    double lo_a = std::numeric_limits<double>::infinity(), hi_a = -lo_a, lo_b = lo_a, hi_b = -lo_a;
    for (const auto& p : ca) {
      lo_a = std::min(lo_a, p.dot(axis));
      hi_a = std::max(hi_a, p.dot(axis));
    }
    for (const auto& p : cb) {
      lo_b = std::min(lo_b, p.dot(axis));
      hi_b = std::max(hi_b, p.dot(axis));
    }
    if (lo_b - hi_a >= margin || lo_a - hi_b >= margin) return false;
  }
  return true;
}

constexpr double kClearance = 0.05;

/// True when `body` moved to `position` would touch the static map or the sensor keep-out disc.
bool blocked(Footprint body, const Eigen::Vector2d& position, const SimConfig& config) {
  body.center = position;
  for (const auto& s : config.static_map)
    if (overlaps(body, s, kClearance)) return true;
  return body.distance(Eigen::Vector2d::Zero()) < config.keep_out_radius;
}

/// Samples the straight path from start to end and rejects it if the object
/// ever touches a static shape or the sensor keep-out disc.
bool path_clear(const Footprint& body, const Eigen::Vector2d& start, const Eigen::Vector2d& end, const SimConfig& config) {
  const double len = (end - start).norm();
  const int samples = std::max(2, static_cast<int>(len / 0.1));
  for (int i = 0; i <= samples; ++i) {
    const Eigen::Vector2d p = start + (end - start) * (static_cast<double>(i) / samples);
    if (blocked(body, p, config)) return false;
  }
  return true;
}

std::optional<SceneObject> try_spawn(ObjectClass cls, const SimConfig& config, Rng& rng) {
  const ClassProfile& prof = config.profile(cls);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double extent = config.grid.half_extent();

  SceneObject obj;
  obj.cls = cls;
  const double size = uniform(prof.size_min, prof.size_max);
  if (cls == ObjectClass::pedestrian)
    obj.body = Footprint::disc(Eigen::Vector2d::Zero(), size);
  else
    obj.body = Footprint::rectangle(Eigen::Vector2d::Zero(), size, uniform(prof.width_min, prof.width_max));
  const double speed = uniform(prof.speed_min, prof.speed_max);
  obj.heading_jitter = prof.heading_jitter;

  const double offset = extent + obj.body.bounding_radius() + 0.1;
  for (int attempt = 0; attempt < 200; ++attempt) {
    const int side = static_cast<int>(unit(rng) * 4) % 4;
    const double across = uniform(-extent, extent);
    const double deviation = uniform(-prof.path_spread, prof.path_spread);
    // side 0: enter from -x, 1: from +x, 2: from -y, 3: from +y
    Eigen::Vector2d start, normal;
    switch (side) {
      case 0: start = {-offset, across}; normal = {1, 0}; break;
      case 1: start = {offset, across}; normal = {-1, 0}; break;
      case 2: start = {across, -offset}; normal = {0, 1}; break;
      default: start = {across, offset}; normal = {0, -1}; break;
    }
    const double heading = std::atan2(normal.y(), normal.x()) + deviation;
    const Eigen::Vector2d dir(std::cos(heading), std::sin(heading));
    const Eigen::Vector2d end = start + dir * (2 * offset / std::cos(deviation));
    obj.path_heading = heading;
    obj.body.heading = heading;
    if (!path_clear(obj.body, start, end, config)) continue;
    obj.body.center = start;
    obj.velocity = speed * dir;
    return obj;
  }
  return std::nullopt;
}

}  // namespace

const char* class_name(ObjectClass cls) {
  switch (cls) {
    case ObjectClass::background: return "background";
    case ObjectClass::pedestrian: return "pedestrian";
    case ObjectClass::car: return "car";
    case ObjectClass::cyclist: return "cyclist";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Footprint

Footprint Footprint::disc(const Eigen::Vector2d& center, double radius) {
  if (!(radius > 0)) throw std::invalid_argument("disc radius must be positive");
  Footprint s;
  s.kind = Kind::disc;
  s.center = center;
  s.radius = radius;
  return s;
}

Footprint Footprint::rectangle(const Eigen::Vector2d& center, double length, double width, double heading) {
  if (!(length > 0) || !(width > 0)) throw std::invalid_argument("rectangle sides must be positive");
  Footprint s;
  s.kind = Kind::rectangle;
  s.center = center;
  s.length = length;
  s.width = width;
  s.heading = heading;
  return s;
}

bool Footprint::contains(const Eigen::Vector2d& p) const { return distance(p) <= 0; }

double Footprint::distance(const Eigen::Vector2d& p) const {
  if (kind == Kind::disc) return (p - center).norm() - radius;
  const Eigen::Vector2d q = to_local(*this, p).cwiseAbs() - Eigen::Vector2d(0.5 * length, 0.5 * width);
  return q.cwiseMax(0.0).norm() + std::min(std::max(q.x(), q.y()), 0.0);
}

std::optional<double> Footprint::intersect(const Eigen::Vector2d& origin, const Eigen::Vector2d& dir) const {
  if (kind == Kind::disc) {
    const Eigen::Vector2d oc = origin - center;
    const double b = oc.dot(dir);
    const double c = oc.squaredNorm() - radius * radius;
    if (c <= 0) return 0.0;
    const double disc = b * b - c;
    if (disc < 0) return std::nullopt;
    const double t = -b - std::sqrt(disc);
    if (t < 0) return std::nullopt;
    return t;
  }
  const Eigen::Vector2d o = to_local(*this, origin);
  const Eigen::Vector2d d = rotate_to_local(*this, dir);
  const Eigen::Vector2d half(0.5 * length, 0.5 * width);
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 2; ++axis) {
    if (d[axis] == 0) {
      if (std::abs(o[axis]) > half[axis]) return std::nullopt;
      continue;
    }
    double t1 = (-half[axis] - o[axis]) / d[axis];
    double t2 = (half[axis] - o[axis]) / d[axis];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (t_near > t_far || t_far < 0) return std::nullopt;
  return std::max(t_near, 0.0);
}

double Footprint::bounding_radius() const {
  return kind == Kind::disc ? radius : 0.5 * std::hypot(length, width);
}

// ---------------------------------------------------------------------------
// Configuration

void SimConfig::validate() const {
  grid.validate();
  if (!(frame_rate > 0)) throw std::invalid_argument("frame rate must be positive");
  if (beam_count < 1) throw std::invalid_argument("beam count must be >= 1");
  if (!(angular_span > 0) || angular_span > 2 * kPi + 1e-9) throw std::invalid_argument("angular span must be in (0, 2pi]");
  if (!(max_range > 0)) throw std::invalid_argument("max range must be positive");
  if (range_sigma < 0) throw std::invalid_argument("range sigma must be >= 0");
  if (warmup_frames < 0) throw std::invalid_argument("warm-up frames must be >= 0");
  for (int c = 1; c <= 3; ++c) {
    const auto& p = profile(static_cast<ObjectClass>(c));
    const std::string name = class_name(static_cast<ObjectClass>(c));
    if (p.spawn_rate < 0) throw std::invalid_argument(name + " spawn rate must be >= 0");
    if (p.speed_min < 0 || p.speed_max < p.speed_min) throw std::invalid_argument(name + " speed band invalid");
    if (!(p.size_min > 0) || p.size_max < p.size_min) throw std::invalid_argument(name + " size band invalid");
    if (c != 1 && (!(p.width_min > 0) || p.width_max < p.width_min))
      throw std::invalid_argument(name + " width band invalid");
  }
}

std::uint64_t SimConfig::digest() const {
  std::ostringstream os;
  os.precision(17);
  os << grid.size << ' ' << grid.cell_size << ' ' << frame_rate << ' ' << beam_count << ' ' << angular_span << ' '
     << max_range << ' ' << range_sigma << ' ' << warmup_frames << ' ' << keep_out_radius << ' ' << despawn_margin;
  for (const auto& s : static_map)
    os << " S" << static_cast<int>(s.kind) << ' ' << s.center.x() << ' ' << s.center.y() << ' ' << s.heading << ' '
       << s.radius << ' ' << s.length << ' ' << s.width;
  for (const auto& p : profiles)
    os << " P" << p.spawn_rate << ' ' << p.speed_min << ' ' << p.speed_max << ' ' << p.size_min << ' ' << p.size_max
       << ' ' << p.width_min << ' ' << p.width_max << ' ' << p.heading_jitter << ' ' << p.path_spread;
  // FNV-1a
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : os.str()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<Footprint> intersection_static_map(const GridConfig& grid) {
  // Laid out for a 4.8 m half extent and scaled to the actual grid.
  const double k = grid.half_extent() / 4.8;
  auto v = [k](double x, double y) { return Eigen::Vector2d(k * x, k * y); };
  return {
      // building blocks in the four corners
      Footprint::rectangle(v(4.8, 4.8), 1.6 * k, 1.6 * k),
      Footprint::rectangle(v(-4.8, 4.8), 1.6 * k, 1.6 * k),
      Footprint::rectangle(v(4.8, -4.8), 1.6 * k, 1.6 * k),
      Footprint::rectangle(v(-4.8, -4.8), 1.6 * k, 1.6 * k),
      // wall north of the sensor; its shadow covers the northern lane
      Footprint::rectangle(v(0.0, 1.2), 1.6 * k, 0.4 * k),
      // wall east of the sensor
      Footprint::rectangle(v(1.2, -0.6), 0.4 * k, 1.2 * k),
      // pillar south-west
      Footprint::disc(v(-1.2, -1.2), 0.3 * k),
  };
}

SimConfig default_sim_config() {
  SimConfig c;
  c.static_map = intersection_static_map(c.grid);
  auto& ped = c.profile(ObjectClass::pedestrian);
  ped = {0.3, 0.5, 2.0, 0.2, 0.35, 0.0, 0.0, 0.15, 40.0 * kPi / 180.0};
  auto& car = c.profile(ObjectClass::car);
  car = {0.3, 3.0, 10.0, 3.8, 4.6, 1.6, 1.9, 0.0, 2.0 * kPi / 180.0};
  auto& cyc = c.profile(ObjectClass::cyclist);
  cyc = {0.3, 2.0, 6.0, 1.6, 2.0, 0.5, 0.7, 0.03, 10.0 * kPi / 180.0};
  return c;
}

// ---------------------------------------------------------------------------
// Dynamics

WorldState step_world(WorldState state, const SimConfig& config, Rng& rng) {
  const double dt = 1.0 / config.frame_rate;
  const double extent = config.grid.half_extent();
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  for (auto& obj : state.objects) {
    const double speed = obj.velocity.norm();
    if (obj.heading_jitter > 0 && speed > 0) {
      double heading = std::atan2(obj.velocity.y(), obj.velocity.x());
      // bounded perturbation with a pull back towards the spawn heading
      const double drift = wrap_angle(heading - obj.path_heading);
      const double proposed = heading + obj.heading_jitter * unit(rng) - 0.1 * drift;
      const Eigen::Vector2d v(speed * std::cos(proposed), speed * std::sin(proposed));
      Footprint turned = obj.body;
      turned.heading = proposed;
      if (!blocked(turned, obj.body.center + v * dt, config)) {
        obj.velocity = v;
        heading = proposed;
      }
      obj.body.heading = heading;
    }
    obj.body.center += obj.velocity * dt;
  }

  std::erase_if(state.objects, [&](const SceneObject& obj) {
    const double limit = extent + obj.body.bounding_radius() + config.despawn_margin;
    return obj.body.center.cwiseAbs().maxCoeff() > limit;
  });

  for (int c = 1; c <= 3; ++c) {
    const auto cls = static_cast<ObjectClass>(c);
    const double lambda = config.profile(cls).spawn_rate * dt;
    if (lambda <= 0) continue;
    std::poisson_distribution<int> spawns(lambda);
    const int n = spawns(rng);
    for (int i = 0; i < n; ++i) {
      if (auto obj = try_spawn(cls, config, rng)) {
        obj->id = state.next_id++;
        state.objects.push_back(*obj);
      }
    }
  }
  return state;
}

GroundTruth render_ground_truth(const WorldState& state, const SimConfig& config) {
  const int m = config.grid.size;
  GroundTruth gt{ByteGrid::Zero(m, m), ByteGrid::Constant(m, m, kIgnoreLabel)};
  auto paint = [&](const Footprint& s, ObjectClass cls) {
    const double r = s.bounding_radius();
    const Eigen::Vector2d lo = config.grid.to_cell_coords(s.center - Eigen::Vector2d::Constant(r));
    const Eigen::Vector2d hi = config.grid.to_cell_coords(s.center + Eigen::Vector2d::Constant(r));
    const int x0 = std::max(0, static_cast<int>(std::floor(lo.x())));
    const int y0 = std::max(0, static_cast<int>(std::floor(lo.y())));
    const int x1 = std::min(m - 1, static_cast<int>(std::floor(hi.x())));
    const int y1 = std::min(m - 1, static_cast<int>(std::floor(hi.y())));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (s.contains(config.grid.cell_center(x, y))) {
          gt.occupancy(y, x) = 1;
          gt.classes(y, x) = static_cast<std::uint8_t>(cls);
        }
  };
  for (const auto& s : config.static_map) paint(s, ObjectClass::background);
  std::vector<const SceneObject*> order;
  for (const auto& obj : state.objects) order.push_back(&obj);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });
  for (const auto* obj : order) paint(obj->body, obj->cls);
  return gt;
}

std::vector<float> beam_angles(const SimConfig& config) {
  std::vector<float> angles(static_cast<std::size_t>(config.beam_count));
  for (int i = 0; i < config.beam_count; ++i)
    angles[static_cast<std::size_t>(i)] =
        static_cast<float>(-0.5 * config.angular_span + i * config.angular_span / config.beam_count);
  return angles;
}

LaserScan synthesize_scan(const WorldState& state, const SimConfig& config, Rng& rng) {
  LaserScan scan;
  scan.max_range = static_cast<float>(config.max_range);
  scan.angles = beam_angles(config);
  const std::size_t n = scan.angles.size();
  scan.ranges.resize(n);
  scan.no_return.resize(n);
  std::normal_distribution<double> noise(0.0, 1.0);
  const Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const double a = scan.angles[i];
    const Eigen::Vector2d dir(std::cos(a), std::sin(a));
    double best = std::numeric_limits<double>::infinity();
    auto consider = [&](const Footprint& s) {
      if (auto t = s.intersect(origin, dir)) best = std::min(best, *t);
    };
    for (const auto& s : config.static_map) consider(s);
    for (const auto& obj : state.objects) consider(obj.body);
    // Noise is drawn for every beam so the random stream does not depend on the scene.
    const double jitter = config.range_sigma * noise(rng);
    if (best <= config.max_range) {
      const double r = std::clamp(best + jitter, 0.01, config.max_range);
      scan.ranges[i] = static_cast<float>(r);
      scan.no_return[i] = 0;
    } else {
      scan.ranges[i] = scan.max_range;
      scan.no_return[i] = 1;
    }
  }
  return scan;
}

// ---------------------------------------------------------------------------
// Episodes

Frame capture_frame(const WorldState& state, const SimConfig& config, Rng& rng) {
  Frame f;
  f.scan = synthesize_scan(state, config, rng);
  f.observation = raytrace_scan(f.scan, config.grid);
  auto gt = render_ground_truth(state, config);
  f.occupancy = std::move(gt.occupancy);
  f.classes = std::move(gt.classes);
  return f;
}

Episode generate_episode(const SimConfig& config, int frames, std::uint64_t seed) {
  if (frames < 1) throw std::invalid_argument("episode length must be >= 1");
  config.validate();
  Rng rng(seed);
  WorldState state;
  for (int i = 0; i < config.warmup_frames; ++i) state = step_world(std::move(state), config, rng);
  Episode ep;
  ep.grid = config.grid;
  ep.seed = seed;
  ep.frames.reserve(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    ep.frames.push_back(capture_frame(state, config, rng));
    state = step_world(std::move(state), config, rng);
  }
  return ep;
}

namespace {

/// Moves every object along its velocity without spawning, jitter or despawning.
void advance_scripted(WorldState& state, double dt) {
  for (auto& obj : state.objects) obj.body.center += obj.velocity * dt;
}

SceneObject scripted_object(std::uint64_t id, ObjectClass cls, Footprint body, const Eigen::Vector2d& velocity) {
  SceneObject obj;
  obj.id = id;
  obj.cls = cls;
  obj.body = body;
  obj.velocity = velocity;
  obj.path_heading = std::atan2(velocity.y(), velocity.x());
  obj.body.heading = body.kind == Footprint::Kind::rectangle ? obj.path_heading : 0.0;
  return obj;
}

}  // namespace

Episode scripted_scenario(std::string_view name, const SimConfig& config) {
  config.validate();
  constexpr int kFrames = 40;
  const double k = config.grid.half_extent() / 4.8;
  WorldState state;
  if (name == "occluded-crossing") {
    // Walks along +x behind the north wall at constant velocity.
    state.objects.push_back(scripted_object(0, ObjectClass::pedestrian, Footprint::disc({-4.4 * k, 2.3 * k}, 0.3),
                                            {1.8 * k, 0.0}));
  } else if (name == "static-only") {
    // nothing moves
  } else if (name == "mixed-traffic") {
    state.objects.push_back(
        scripted_object(0, ObjectClass::pedestrian, Footprint::disc({-3.0 * k, -3.2 * k}, 0.3), {1.2, 0.4}));
    state.objects.push_back(scripted_object(1, ObjectClass::car, Footprint::rectangle({-6.0 * k, 2.5 * k}, 4.2, 1.6),
                                            {6.0, 0.0}));
    state.objects.push_back(scripted_object(2, ObjectClass::cyclist, Footprint::rectangle({2.6 * k, -5.5 * k}, 1.8, 0.6),
                                            {0.0, 3.5}));
    state.objects.push_back(
        scripted_object(3, ObjectClass::pedestrian, Footprint::disc({-2.6 * k, 4.2 * k}, 0.25), {0.3, -1.0}));
  } else {
    throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
  }
  Rng rng(0x5EED);
  Episode ep;
  ep.grid = config.grid;
  ep.seed = 0;
  for (int t = 0; t < kFrames; ++t) {
    ep.frames.push_back(capture_frame(state, config, rng));
    advance_scripted(state, 1.0 / config.frame_rate);
  }
  return ep;
}

}  // namespace occtrack
