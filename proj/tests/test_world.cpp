#include <doctest.h>

#include "occtrack/world.hpp"
#include "test_util.hpp"

#include <cmath>
#include <map>
#include <set>

using namespace occtrack;

namespace {

SimConfig quiet_config(int m = 48) {
  SimConfig c = default_sim_config();
  c.grid = {m, 0.2};
  c.static_map.clear();
  for (auto& p : c.profiles) p.spawn_rate = 0;
  return c;
}

SceneObject object(ObjectClass cls, Footprint body, Eigen::Vector2d velocity) {
  SceneObject o;
  o.cls = cls;
  o.body = body;
  o.velocity = velocity;
  o.path_heading = std::atan2(velocity.y(), velocity.x());
  return o;
}

int count_centres_inside(const Footprint& f, const GridConfig& g) {
  int n = 0;
  for (int y = 0; y < g.size; ++y)
    for (int x = 0; x < g.size; ++x) n += f.contains(g.cell_center(x, y));
  return n;
}

ByteGrid dilate(const ByteGrid& g) {
  ByteGrid out = g;
  for (Eigen::Index y = 0; y < g.rows(); ++y)
    for (Eigen::Index x = 0; x < g.cols(); ++x)
      if (g(y, x))
        for (Eigen::Index dy = -1; dy <= 1; ++dy)
          for (Eigen::Index dx = -1; dx <= 1; ++dx) {
            const Eigen::Index yy = y + dy, xx = x + dx;
            if (yy >= 0 && xx >= 0 && yy < g.rows() && xx < g.cols()) out(yy, xx) = 1;
          }
  return out;
}

}  // namespace

TEST_CASE("disc rasterises to the cells whose centre lies inside") {
  SimConfig c = quiet_config(100);
  WorldState s;
  s.objects.push_back(object(ObjectClass::pedestrian, Footprint::disc({0, 0}, 0.3), {0, 0}));
  const auto gt = render_ground_truth(s, c);
  int expected = 0;
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x < 100; ++x) {
      const bool inside = c.grid.cell_center(x, y).norm() <= 0.3;
      expected += inside;
      CHECK(static_cast<bool>(gt.occupancy(y, x)) == inside);
      CHECK(gt.classes(y, x) == (inside ? 1 : kIgnoreLabel));
    }
  CHECK(expected > 0);
}

TEST_CASE("axis-aligned car rectangle matches the point-in-rectangle count") {
  SimConfig c = quiet_config(100);
  WorldState s;
  const Eigen::Vector2d centre(0.37, -1.13);
  s.objects.push_back(object(ObjectClass::car, Footprint::rectangle(centre, 4.0, 1.8), {0, 0}));
  const auto gt = render_ground_truth(s, c);
  int expected = 0;
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x < 100; ++x) {
      const Eigen::Vector2d d = c.grid.cell_center(x, y) - centre;
      expected += std::abs(d.x()) <= 2.0 && std::abs(d.y()) <= 0.9;
    }
  CHECK(gt.occupancy.cast<int>().sum() == expected);
  CHECK((gt.classes == 2).count() == expected);
}

TEST_CASE("rotated rectangles and discs agree with containment everywhere") {
  const GridConfig g{48, 0.2};
  const auto r = Footprint::rectangle({1.0, 0.5}, 3.0, 1.0, 0.7);
  CHECK(count_centres_inside(r, g) == doctest::Approx(3.0 * 1.0 / 0.04).epsilon(0.1));
  CHECK(r.contains({1.0, 0.5}));
  CHECK(r.distance({1.0, 0.5}) < 0);
  CHECK_FALSE(r.contains({3.0, 0.5}));
  const auto hit = r.intersect({-5.0, 0.5}, {1.0, 0.0});
  REQUIRE(hit.has_value());
  CHECK(r.contains(Eigen::Vector2d(-5.0 + *hit + 1e-6, 0.5)));
  CHECK_FALSE(r.contains(Eigen::Vector2d(-5.0 + *hit - 1e-6, 0.5)));
}

TEST_CASE("dynamic objects are drawn over static ones, later over earlier") {
  SimConfig c = quiet_config();
  c.static_map.push_back(Footprint::rectangle({0, 0}, 2.0, 2.0));
  WorldState s;
  s.objects.push_back(object(ObjectClass::car, Footprint::disc({0, 0}, 0.6), {0, 0}));
  s.objects.push_back(object(ObjectClass::cyclist, Footprint::disc({0.3, 0}, 0.3), {0, 0}));
  s.objects[0].id = 0;
  s.objects[1].id = 1;
  const auto gt = render_ground_truth(s, c);
  const auto cell = [&](double x, double y) { return *world_to_cell({x, y}, c.grid); };
  CHECK(gt.classes(cell(0.9, 0.9).y, cell(0.9, 0.9).x) == 0);
  CHECK(gt.classes(cell(-0.3, 0).y, cell(-0.3, 0).x) == 2);
  CHECK(gt.classes(cell(0.35, 0.05).y, cell(0.35, 0.05).x) == 3);
}

TEST_CASE("constant velocity advances half a cell per frame") {
  SimConfig c = quiet_config();
  WorldState s;
  s.objects.push_back(object(ObjectClass::car, Footprint::disc({0, 0}, 0.3), {0.8, 0}));
  Rng rng(1);
  for (int t = 1; t <= 6; ++t) {
    s = step_world(s, c, rng);
    REQUIRE(s.objects.size() == 1);
    CHECK(s.objects[0].body.center.x() / c.grid.cell_size == doctest::Approx(0.5 * t).epsilon(1e-12));
    CHECK(s.objects[0].body.center.y() == 0.0);
  }
}

TEST_CASE("an empty world stays empty and never returns a beam") {
  SimConfig c = quiet_config();
  WorldState s;
  Rng rng(3);
  for (int t = 0; t < 200; ++t) s = step_world(s, c, rng);
  CHECK(s.objects.empty());
  const auto gt = render_ground_truth(s, c);
  CHECK((gt.occupancy == 0).all());
  CHECK((gt.classes == kIgnoreLabel).all());
  const auto scan = synthesize_scan(s, c, rng);
  CHECK(scan.size() == static_cast<std::size_t>(c.beam_count));
  CHECK(std::all_of(scan.no_return.begin(), scan.no_return.end(), [](auto f) { return f == 1; }));
}

TEST_CASE("objects leave the world past the despawn margin") {
  SimConfig c = quiet_config();
  WorldState s;
  s.objects.push_back(object(ObjectClass::car, Footprint::disc({4.0, 0}, 0.3), {8.0, 0}));
  Rng rng(1);
  for (int t = 0; t < 3; ++t) s = step_world(s, c, rng);
  CHECK(s.objects.empty());
}

TEST_CASE("a wall at 3 m returns 3 m along +x and shadows a disc behind it") {
  SimConfig c = quiet_config();
  c.max_range = 15.0;
  c.static_map.push_back(Footprint::rectangle({3.2, 0}, 0.4, 2.0));
  WorldState s;
  s.objects.push_back(object(ObjectClass::pedestrian, Footprint::disc({4.2, 0}, 0.3), {0, 0}));
  Rng rng(5);
  const auto scan = synthesize_scan(s, c, rng);
  const auto angles = beam_angles(c);
  const auto zero = std::find(angles.begin(), angles.end(), 0.0f) - angles.begin();
  REQUIRE(zero < static_cast<long>(angles.size()));
  CHECK_FALSE(scan.no_return[zero]);
  CHECK(std::abs(scan.ranges[zero] - 3.0) < 5 * c.range_sigma);

  const auto obs = raytrace_scan(scan, c.grid);
  const auto gt = render_ground_truth(s, c);
  for (int y = 0; y < c.grid.size; ++y)
    for (int x = 0; x < c.grid.size; ++x)
      if (gt.classes(y, x) == 1) CHECK(obs.visibility(y, x) == 0);
}

TEST_CASE("generated frames respect the sensing invariants") {
  const SimConfig c = default_sim_config();
  const auto ep = generate_episode(c, 12, 21);
  const Eigen::Vector2d origin = c.grid.sensor_cell_coords();
  for (const auto& f : ep.frames) {
    CHECK(f.observation.consistent());
    // The outer ring is skipped: an object straddling the border can be hit
    // there while its tolerance neighbour lies outside the grid.
    const int m = c.grid.size;
    const auto hits = f.observation.occupancy.block(1, 1, m - 2, m - 2) != 0;
    CHECK((hits <= (dilate(f.occupancy).block(1, 1, m - 2, m - 2) != 0)).all());
    CHECK(((f.classes != kIgnoreLabel) == (f.occupancy != 0)).all());
    // every visible cell is touched by the observed part of some beam
    for (int y = 0; y < c.grid.size; ++y)
      for (int x = 0; x < c.grid.size; ++x) {
        if (!f.observation.visibility(y, x)) continue;
        bool touched = false;
        for (std::size_t b = 0; b < f.scan.size() && !touched; ++b) {
          const double a = f.scan.angles[b];
          const double len = f.scan.ranges[b] / c.grid.cell_size;
          touched = testutil::segment_touches_cell(origin, {std::cos(a), std::sin(a)}, len, x, y);
        }
        CHECK(touched);
      }
  }
}

TEST_CASE("episodes are deterministic in the seed") {
  const SimConfig c = default_sim_config();
  const auto a = generate_episode(c, 10, 7);
  const auto b = generate_episode(c, 10, 7);
  const auto other = generate_episode(c, 10, 8);
  CHECK(a == b);
  CHECK_FALSE(a.frames[0].scan == other.frames[0].scan);
  CHECK(generate_episode(c, 1, 3).length() == 1);
  CHECK_THROWS(generate_episode(c, 0, 3));
}

TEST_CASE("default world is busy enough to be interesting") {
  const SimConfig c = default_sim_config();
  int frames = 0, partly_hidden = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ep = generate_episode(c, 40, seed);
    for (const auto& f : ep.frames) {
      ++frames;
      const auto objects = (f.classes != kIgnoreLabel) && (f.classes != 0);
      partly_hidden += (objects && (f.observation.visibility == 0)).any();
    }
  }
  CHECK(partly_hidden >= 0.3 * frames);
}

TEST_CASE("equal spawn rates give balanced class counts") {
  SimConfig c = default_sim_config();
  WorldState s;
  Rng rng(11);
  std::map<ObjectClass, std::set<std::uint64_t>> seen;
  for (int t = 0; t < 20000; ++t) {
    s = step_world(s, c, rng);
    for (const auto& o : s.objects) seen[o.cls].insert(o.id);
  }
  const double ped = seen[ObjectClass::pedestrian].size(), car = seen[ObjectClass::car].size(),
               cyc = seen[ObjectClass::cyclist].size();
  const double mean = (ped + car + cyc) / 3;
  CHECK(mean > 100);
  for (double n : {ped, car, cyc}) CHECK(std::abs(n - mean) <= 0.2 * mean);
}

TEST_CASE("spawned objects keep to their class speed band and avoid the static map") {
  SimConfig c = default_sim_config();
  WorldState s;
  Rng rng(2);
  std::set<std::uint64_t> checked;
  for (int t = 0; t < 2000; ++t) {
    s = step_world(s, c, rng);
    for (const auto& o : s.objects) {
      const auto& p = c.profile(o.cls);
      const double speed = o.velocity.norm();
      CHECK(speed >= p.speed_min - 1e-9);
      CHECK(speed <= p.speed_max + 1e-9);
      if (checked.insert(o.id).second)
        for (const auto& wall : c.static_map) CHECK(wall.distance(o.body.center) > 0);
    }
  }
}

TEST_CASE("scripted scenarios") {
  const SimConfig c = default_sim_config();

  SUBCASE("occluded-crossing hides its walker for at least five consecutive frames") {
    const auto ep = scripted_scenario("occluded-crossing", c);
    int run = 0, longest = 0, first_hidden = -1, last_hidden = -1;
    for (int t = 0; t < ep.length(); ++t) {
      const auto& f = ep.frames[t];
      const auto walker = f.classes == 1;
      const bool present = walker.any();
      const bool hidden = present && !(walker && (f.observation.visibility != 0)).any();
      run = hidden ? run + 1 : 0;
      longest = std::max(longest, run);
      if (hidden && first_hidden < 0) first_hidden = t;
      if (hidden) last_hidden = t;
    }
    CHECK(longest >= 5);
    REQUIRE(first_hidden > 0);
    REQUIRE(last_hidden + 1 < ep.length());
    const auto seen = [&](int t) {
      const auto& f = ep.frames[t];
      return ((f.classes == 1) && (f.observation.occupancy != 0)).any();
    };
    CHECK(seen(first_hidden - 1));
    CHECK(seen(last_hidden + 1));
  }

  SUBCASE("static-only never changes its ground truth") {
    const auto ep = scripted_scenario("static-only", c);
    for (const auto& f : ep.frames) {
      CHECK((f.occupancy == ep.frames[0].occupancy).all());
      CHECK((f.classes == ep.frames[0].classes).all());
    }
    CHECK(ep.frames[0].occupancy.any());
  }

  SUBCASE("mixed-traffic shows every class") {
    const auto ep = scripted_scenario("mixed-traffic", c);
    for (int cls = 1; cls <= 3; ++cls) CHECK((ep.frames[0].classes == cls).any());
  }

  CHECK(scripted_scenario("mixed-traffic", c) == scripted_scenario("mixed-traffic", c));
  CHECK_THROWS_AS(scripted_scenario("rush-hour", c), std::invalid_argument);
}

TEST_CASE("config validation and digest") {
  SimConfig c = default_sim_config();
  CHECK_NOTHROW(c.validate());
  const auto d = c.digest();
  c.frame_rate = 10;
  CHECK(c.digest() != d);
  c.frame_rate = 0;
  CHECK_THROWS(c.validate());
  c = default_sim_config();
  c.profile(ObjectClass::car).spawn_rate = -1;
  CHECK_THROWS(c.validate());
}
