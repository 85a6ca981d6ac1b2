#pragma once

#include "occtrack/evaluation.hpp"
#include "occtrack/network.hpp"
#include "occtrack/training.hpp"
#include "occtrack/world.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace occtrack {

/// Bad key, bad value or failed validation; names the offending key when known.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error(key.empty() ? what : "config key '" + key + "': " + what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Everything a run needs. Text form is one `key = value` per line with `#` comments.
///
/// Static obstacles come from `sim.static_map` (intersection | none) plus any
/// number of `sim.static_shape.<n>` entries, written `disc x y radius` or
/// `rect x y length width heading`, in metres and radians.
struct RunConfig {
  SimConfig sim = default_sim_config();
  std::string static_map_preset = "intersection";
  std::map<int, Footprint> extra_shapes;

  int layers = 3;
  int channels = 8;
  std::uint64_t init_seed = 7;

  TrainConfig train;
  SemanticTrainConfig semantic;
  OneShotConfig one_shot;
  EvalSettings eval;

  NetworkConfig network() const { return {layers, channels, sim.grid.size, kNumClasses}; }

  /// Rebuilds sim.static_map from the preset and the extra shapes, then validates everything.
  void resolve();
};

/// Documented keys in output order.
const std::vector<std::string>& config_keys();
std::string config_doc(const std::string& key);

void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

/// Parses text on top of the defaults and resolves the result.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// The fully resolved configuration, every key listed; parse_run_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& config);

}  // namespace occtrack
