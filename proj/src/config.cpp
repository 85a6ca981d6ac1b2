#include "occtrack/config.hpp"

#include "occtrack/binary_io.hpp"

#include <charconv>
#include <functional>
#include <sstream>

namespace occtrack {
namespace {

struct Entry {
  std::string key;
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  double v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw std::invalid_argument("expected a number, got '" + s + "'");
  return v;
}

template <typename Int>
Int parse_int(const std::string& s) {
  Int v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw std::invalid_argument("expected an integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

template <typename Field>
Entry real(std::string key, std::string doc, Field field) {
  return {std::move(key), std::move(doc), [field](const RunConfig& c) { return fmt_double(field(const_cast<RunConfig&>(c))); },
          [field](RunConfig& c, const std::string& v) { field(c) = parse_double(v); }};
}

template <typename Field>
Entry integer(std::string key, std::string doc, Field field) {
  return {std::move(key), std::move(doc),
          [field](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); },
          [field](RunConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(field(c))>;
            field(c) = parse_int<T>(v);
          }};
}

template <typename Field>
Entry boolean(std::string key, std::string doc, Field field) {
  return {std::move(key), std::move(doc),
          [field](const RunConfig& c) { return std::string(field(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [field](RunConfig& c, const std::string& v) { field(c) = parse_bool(v); }};
}

void add_profile(std::vector<Entry>& e, ObjectClass cls, const std::string& name) {
  auto p = [cls](RunConfig& c) -> ClassProfile& { return c.sim.profile(cls); };
  const std::string k = "sim." + name + ".";
  e.push_back(real(k + "spawn_rate", "spawns per second", [p](RunConfig& c) -> double& { return p(c).spawn_rate; }));
  e.push_back(real(k + "speed_min", "m/s", [p](RunConfig& c) -> double& { return p(c).speed_min; }));
  e.push_back(real(k + "speed_max", "m/s", [p](RunConfig& c) -> double& { return p(c).speed_max; }));
  e.push_back(real(k + "size_min", "disc radius or rectangle length, m", [p](RunConfig& c) -> double& { return p(c).size_min; }));
  e.push_back(real(k + "size_max", "disc radius or rectangle length, m", [p](RunConfig& c) -> double& { return p(c).size_max; }));
  e.push_back(real(k + "width_min", "rectangle width, m", [p](RunConfig& c) -> double& { return p(c).width_min; }));
  e.push_back(real(k + "width_max", "rectangle width, m", [p](RunConfig& c) -> double& { return p(c).width_max; }));
  e.push_back(real(k + "heading_jitter", "max heading change per frame, rad", [p](RunConfig& c) -> double& { return p(c).heading_jitter; }));
  e.push_back(real(k + "path_spread", "max path deviation from the edge normal, rad", [p](RunConfig& c) -> double& { return p(c).path_spread; }));
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> e;
    e.push_back(integer("grid.size", "cells per side (even, >= 8)", [](RunConfig& c) -> int& { return c.sim.grid.size; }));
    e.push_back(real("grid.cell_size", "metres per cell", [](RunConfig& c) -> double& { return c.sim.grid.cell_size; }));
    e.push_back(real("sim.frame_rate", "Hz", [](RunConfig& c) -> double& { return c.sim.frame_rate; }));
    e.push_back(integer("sim.beam_count", "beams per scan", [](RunConfig& c) -> int& { return c.sim.beam_count; }));
    e.push_back(real("sim.angular_span", "scan span, rad", [](RunConfig& c) -> double& { return c.sim.angular_span; }));
    e.push_back(real("sim.max_range", "m", [](RunConfig& c) -> double& { return c.sim.max_range; }));
    e.push_back(real("sim.range_sigma", "range noise, m", [](RunConfig& c) -> double& { return c.sim.range_sigma; }));
    e.push_back(integer("sim.warmup_frames", "frames simulated before recording", [](RunConfig& c) -> int& { return c.sim.warmup_frames; }));
    e.push_back(real("sim.keep_out_radius", "clearance around the sensor, m", [](RunConfig& c) -> double& { return c.sim.keep_out_radius; }));
    e.push_back(real("sim.despawn_margin", "m beyond the grid edge", [](RunConfig& c) -> double& { return c.sim.despawn_margin; }));
    e.push_back({"sim.static_map", "intersection | none", [](const RunConfig& c) { return c.static_map_preset; },
                 [](RunConfig& c, const std::string& v) {
                   if (v != "intersection" && v != "none") throw std::invalid_argument("expected intersection or none");
                   c.static_map_preset = v;
                 }});
    add_profile(e, ObjectClass::pedestrian, "pedestrian");
    add_profile(e, ObjectClass::car, "car");
    add_profile(e, ObjectClass::cyclist, "cyclist");
    e.push_back(integer("net.layers", "L", [](RunConfig& c) -> int& { return c.layers; }));
    e.push_back(integer("net.channels", "C", [](RunConfig& c) -> int& { return c.channels; }));
    e.push_back(integer("net.init_seed", "parameter initialisation seed", [](RunConfig& c) -> std::uint64_t& { return c.init_seed; }));
    e.push_back(integer("train.minibatch_length", "frames per minibatch", [](RunConfig& c) -> int& { return c.train.schedule.minibatch_length; }));
    e.push_back(integer("train.show", "frames shown per cycle", [](RunConfig& c) -> int& { return c.train.schedule.show; }));
    e.push_back(integer("train.predict", "frames predicted per cycle", [](RunConfig& c) -> int& { return c.train.schedule.predict; }));
    e.push_back(real("train.learning_rate", "optimizer step size", [](RunConfig& c) -> double& { return c.train.learning_rate; }));
    e.push_back({"train.optimizer", "adam | sgd",
                 [](const RunConfig& c) { return std::string(c.train.optimizer == OptimizerKind::adam ? "adam" : "sgd"); },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "adam") c.train.optimizer = OptimizerKind::adam;
                   else if (v == "sgd") c.train.optimizer = OptimizerKind::sgd;
                   else throw std::invalid_argument("expected adam or sgd");
                 }});
    e.push_back(integer("train.epochs", "passes over the training minibatches", [](RunConfig& c) -> int& { return c.train.epochs; }));
    e.push_back(real("train.clip_norm", "global gradient norm limit, <= 0 disables", [](RunConfig& c) -> double& { return c.train.clip_norm; }));
    e.push_back(integer("train.seed", "minibatch order seed", [](RunConfig& c) -> std::uint64_t& { return c.train.seed; }));
    e.push_back(real("semantic.labeled_fraction", "share of training episodes with labels", [](RunConfig& c) -> double& { return c.semantic.labeled_fraction; }));
    e.push_back(boolean("semantic.freeze_recurrent", "train only the semantic decoder", [](RunConfig& c) -> bool& { return c.semantic.freeze_recurrent; }));
    e.push_back(boolean("semantic.loss_on_show_frames", "also supervise show frames", [](RunConfig& c) -> bool& { return c.semantic.loss_on_show_frames; }));
    e.push_back(real("semantic.learning_rate", "optimizer step size (Adam)", [](RunConfig& c) -> double& { return c.semantic.learning_rate; }));
    e.push_back(integer("semantic.epochs", "passes over the labeled minibatches", [](RunConfig& c) -> int& { return c.semantic.epochs; }));
    e.push_back(real("semantic.clip_norm", "global gradient norm limit, <= 0 disables", [](RunConfig& c) -> double& { return c.semantic.clip_norm; }));
    e.push_back(integer("semantic.seed", "labeled subset and order seed", [](RunConfig& c) -> std::uint64_t& { return c.semantic.seed; }));
    e.push_back(integer("oneshot.channels", "channels of the one-shot classifier", [](RunConfig& c) -> int& { return c.one_shot.channels; }));
    e.push_back(integer("oneshot.epochs", "passes over the labeled frames", [](RunConfig& c) -> int& { return c.one_shot.epochs; }));
    e.push_back(real("oneshot.learning_rate", "optimizer step size (Adam)", [](RunConfig& c) -> double& { return c.one_shot.learning_rate; }));
    e.push_back(integer("oneshot.seed", "initialisation and order seed", [](RunConfig& c) -> std::uint64_t& { return c.one_shot.seed; }));
    e.push_back(integer("eval.horizon", "N", [](RunConfig& c) -> int& { return c.eval.horizon; }));
    e.push_back(real("eval.threshold", "occupancy decision threshold", [](RunConfig& c) -> double& { return c.eval.threshold; }));
    e.push_back(integer("eval.anchor_spacing", "frames between forecast anchors", [](RunConfig& c) -> int& { return c.eval.anchor_spacing; }));
    e.push_back(integer("eval.occluded_horizon", "horizons for occluded scoring", [](RunConfig& c) -> int& { return c.eval.occluded_horizon; }));
    return e;
  }();
  return table;
}

const Entry* find_entry(const std::string& key) {
  for (const auto& e : entries())
    if (e.key == key) return &e;
  return nullptr;
}

constexpr std::string_view kShapePrefix = "sim.static_shape.";

Footprint parse_shape(const std::string& value) {
  std::istringstream in(value);
  std::string kind;
  in >> kind;
  std::vector<double> v;
  std::string tok;
  while (in >> tok) v.push_back(parse_double(tok));
  if (kind == "disc" && v.size() == 3) return Footprint::disc({v[0], v[1]}, v[2]);
  if (kind == "rect" && v.size() == 5) return Footprint::rectangle({v[0], v[1]}, v[2], v[3], v[4]);
  throw std::invalid_argument("expected 'disc x y radius' or 'rect x y length width heading'");
}

std::string shape_text(const Footprint& s) {
  if (s.kind == Footprint::Kind::disc)
    return "disc " + fmt_double(s.center.x()) + " " + fmt_double(s.center.y()) + " " + fmt_double(s.radius);
  return "rect " + fmt_double(s.center.x()) + " " + fmt_double(s.center.y()) + " " + fmt_double(s.length) + " " +
         fmt_double(s.width) + " " + fmt_double(s.heading);
}

}  // namespace

void RunConfig::resolve() {
  try {
    sim.static_map = static_map_preset == "intersection" ? intersection_static_map(sim.grid) : std::vector<Footprint>{};
  } catch (const std::invalid_argument& e) {
    throw ConfigError("grid.size", e.what());
  }
  for (const auto& [n, s] : extra_shapes) {
    if ((s.kind == Footprint::Kind::disc && !(s.radius > 0)) || (s.kind == Footprint::Kind::rectangle && !(s.length > 0 && s.width > 0)))
      throw ConfigError(std::string(kShapePrefix) + std::to_string(n), "shape dimensions must be positive");
    sim.static_map.push_back(s);
  }
  auto check = [](const char* key, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, e.what());
    }
  };
  check("sim", [&] { sim.validate(); });
  check("net", [&] { network().validate(); });
  check("train", [&] { train.validate(); });
  check("semantic", [&] { semantic.validate(); });
  if (one_shot.channels < 1) throw ConfigError("oneshot.channels", "must be >= 1");
  if (one_shot.epochs < 0) throw ConfigError("oneshot.epochs", "must be >= 0");
  if (eval.horizon < 1) throw ConfigError("eval.horizon", "must be >= 1");
  if (eval.anchor_spacing < 1) throw ConfigError("eval.anchor_spacing", "must be >= 1");
  if (eval.occluded_horizon < 1 || eval.occluded_horizon > eval.horizon)
    throw ConfigError("eval.occluded_horizon", "must be in 1..eval.horizon");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

std::string config_doc(const std::string& key) {
  const auto* e = find_entry(key);
  if (!e) throw ConfigError(key, "unknown key");
  return e->doc;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  if (key.rfind(kShapePrefix, 0) == 0) {
    try {
      const int n = parse_int<int>(key.substr(kShapePrefix.size()));
      config.extra_shapes[n] = parse_shape(value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, e.what());
    }
    return;
  }
  const auto* e = find_entry(key);
  if (!e) throw ConfigError(key, "unknown key");
  try {
    e->set(config, value);
  } catch (const std::invalid_argument& err) {
    throw ConfigError(key, err.what());
  }
}

std::string get_config_value(const RunConfig& config, const std::string& key) {
  const auto* e = find_entry(key);
  if (!e) throw ConfigError(key, "unknown key");
  return e->get(config);
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("", "line " + std::to_string(number) + ": expected key = value");
    set_config_value(config, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
  config.resolve();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_run_config({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

std::string to_text(const RunConfig& config) {
  std::string s;
  for (const auto& e : entries()) s += e.key + " = " + e.get(config) + "\n";
  for (const auto& [n, shape] : config.extra_shapes)
    s += std::string(kShapePrefix) + std::to_string(n) + " = " + shape_text(shape) + "\n";
  return s;
}

}  // namespace occtrack
