#include "cli.hpp"

#include "occtrack/checkpoint.hpp"
#include "occtrack/config.hpp"
#include "occtrack/episode_io.hpp"
#include "occtrack/evaluation.hpp"
#include "occtrack/render.hpp"
#include "occtrack/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace occtrack::cli {
namespace {

namespace fs = std::filesystem;

/// A failure that maps directly to an exit code.
struct Exit {
  int code;
  std::string message;
};

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

RunConfig load_config(const Common& c) {
  std::string text;
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw IoError("cannot open config '" + c.config_path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  for (const auto& o : c.overrides) text += "\n" + o;
  return parse_run_config(text);
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

void echo_config(const fs::path& dir, const RunConfig& config) {
  write_text(dir / "resolved_config.txt", std::string("# ") + kVersion + "\n" + to_text(config));
}

std::vector<fs::path> episode_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("data directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".dtep") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<Episode> load_episodes(const fs::path& dir) {
  std::vector<Episode> eps;
  for (const auto& f : episode_files(dir)) eps.push_back(read_episode(f));
  return eps;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (i + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// --------------------------------------------------------------------------

struct SimulateArgs {
  Common common;
  std::string out;
  int episodes = 1;
  int frames = 40;
  std::uint64_t seed = 1;
  std::string scenario;
};

void cmd_simulate(const SimulateArgs& a) {
  const auto config = load_config(a.common);
  if (a.episodes < 1) throw Exit{kUsage, "--episodes must be >= 1"};
  if (a.frames < 1) throw Exit{kUsage, "--frames must be >= 1"};
  ensure_dir(a.out);
  std::string manifest = std::string("# ") + kVersion + "\nformat = DTEP " + std::to_string(kEpisodeFormatVersion) +
                         "\nconfig_digest = " + hex(config.sim.digest()) + "\n";
  if (!a.scenario.empty()) {
    Episode ep;
    try {
      ep = scripted_scenario(a.scenario, config.sim);
    } catch (const std::invalid_argument& e) {
      throw Exit{kUsage, e.what()};
    }
    const std::string name = "scenario_" + a.scenario + ".dtep";
    write_episode(fs::path(a.out) / name, ep);
    manifest += name + " seed=" + std::to_string(ep.seed) + " frames=" + std::to_string(ep.length()) + "\n";
  } else {
    for (int i = 0; i < a.episodes; ++i) {
      const auto s = mix_seed(a.seed, static_cast<std::uint64_t>(i));
      const auto ep = generate_episode(config.sim, a.frames, s);
      const std::string name = "ep_" + std::to_string(a.seed) + "_" + std::to_string(i) + ".dtep";
      write_episode(fs::path(a.out) / name, ep);
      manifest += name + " seed=" + std::to_string(s) + " frames=" + std::to_string(a.frames) + "\n";
    }
  }
  write_text(fs::path(a.out) / "manifest.txt", manifest);
  echo_config(a.out, config);
}

struct TrainArgs {
  Common common;
  std::string data;
  std::string out;
};

void cmd_train(const TrainArgs& a) {
  const auto config = load_config(a.common);
  const auto episodes = load_episodes(a.data);
  if (episodes.empty()) throw Exit{kUsage, "no episode files in '" + a.data + "'"};
  ensure_dir(a.out);
  echo_config(a.out, config);
  const auto net = config.network();
  const fs::path latest = fs::path(a.out) / "checkpoint_latest.dtck";

  ParameterStore<float> store;
  int first_epoch = 0;
  if (fs::exists(latest)) {
    auto ck = load_checkpoint(latest);
    if (!(ck.config == net)) throw Exit{kUsage, "existing checkpoint does not match the configured network"};
    store = std::move(ck.params);
    first_epoch = ck.progress ? ck.progress->epochs_done : 0;
    std::cout << "resuming from " << latest.string() << " after epoch " << first_epoch << "\n";
  } else {
    store = init_params<float>(net, config.init_seed);
  }

  const fs::path metrics = fs::path(a.out) / "metrics.csv";
  const bool fresh = !fs::exists(metrics);
  std::ofstream csv(metrics, std::ios::app);
  if (!csv) throw IoError("cannot open '" + metrics.string() + "'");
  if (fresh) csv << "epoch,minibatch,loss,grad_norm,wall_ms\n";

  TrainHooks hooks;
  hooks.on_minibatch = [&](const MinibatchRecord& r) {
    csv << r.epoch << "," << r.minibatch << "," << fmt(r.loss) << "," << fmt(r.grad_norm) << "," << fmt(r.wall_ms)
        << "\n";
    csv.flush();
  };
  hooks.on_epoch = [&](int epoch, const ParameterStore<float>& s) {
    save_checkpoint(fs::path(a.out) / ("checkpoint_epoch" + std::to_string(epoch + 1) + ".dtck"), net, s,
                    TrainingProgress{epoch + 1});
    save_checkpoint(latest, net, s, TrainingProgress{epoch + 1});
    std::cout << "epoch " << epoch + 1 << " done\n";
  };
  const auto curve = train_occupancy(net, store, episodes, config.train, hooks, first_epoch);
  for (std::size_t i = 0; i < curve.size(); ++i)
    std::cout << "epoch " << first_epoch + static_cast<int>(i) + 1 << " mean loss " << fmt(curve[i]) << "\n";
  save_checkpoint(fs::path(a.out) / "model.dtck", net, store);
}

struct SemanticArgs {
  Common common;
  std::string checkpoint;
  std::string labels;
  std::string out;
};

void cmd_train_semantic(const SemanticArgs& a) {
  const auto config = load_config(a.common);
  if (a.labels.empty() || !fs::is_directory(a.labels)) throw Exit{kUsage, "labels directory '" + a.labels + "' not found"};
  auto all = load_episodes(a.labels);
  if (all.empty()) throw Exit{kUsage, "no labeled episodes in '" + a.labels + "'"};
  auto ck = load_checkpoint(a.checkpoint);
  ensure_dir(a.out);
  echo_config(a.out, config);

  std::vector<Episode> labeled;
  std::string chosen;
  for (auto i : select_labeled_episodes(all.size(), config.semantic.labeled_fraction, config.semantic.seed)) {
    labeled.push_back(all[i]);
    chosen += std::to_string(i) + "\n";
  }
  write_text(fs::path(a.out) / "labeled_episodes.txt", chosen);
  const auto weights = inverse_frequency_weights(labeled, ck.config.classes);
  std::string wtext = "class,weight\n";
  for (std::size_t k = 0; k < weights.size(); ++k) wtext += std::to_string(k) + "," + fmt(weights[k]) + "\n";
  write_text(fs::path(a.out) / "class_weights.csv", wtext);

  std::ofstream csv(fs::path(a.out) / "metrics_semantic.csv");
  csv << "epoch,minibatch,loss,grad_norm,wall_ms\n";
  TrainHooks hooks;
  hooks.on_minibatch = [&](const MinibatchRecord& r) {
    csv << r.epoch << "," << r.minibatch << "," << fmt(r.loss) << "," << fmt(r.grad_norm) << "," << fmt(r.wall_ms)
        << "\n";
  };
  train_semantic(ck.config, ck.params, labeled, config.semantic, weights, hooks);

  OneShotConfig os = config.one_shot;
  os.classes = ck.config.classes;
  auto one_shot = init_one_shot(os, os.seed);
  train_one_shot_baseline(one_shot, labeled, os, weights);
  for (const auto& p : one_shot) ck.params.add(p.name(), p.value());
  save_checkpoint(fs::path(a.out) / "semantic.dtck", ck.config, ck.params);
}

ParameterStore<float> one_shot_part(const ParameterStore<float>& store) {
  ParameterStore<float> out;
  for (const auto& p : store)
    if (p.name().rfind("oneshot.", 0) == 0) out.add(p.name(), p.value());
  return out;
}

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string validation;
  bool oracle = false;
};

void cmd_eval(const EvalArgs& a) {
  const auto config = load_config(a.common);
  const auto episodes = load_episodes(a.data);
  if (episodes.empty()) throw Exit{kUsage, "no episode files in '" + a.data + "'"};
  for (const auto& ep : episodes)
    if (anchors(ep.length(), config.eval).empty())
      throw Exit{kUsage, "episodes are too short for eval.horizon " + std::to_string(config.eval.horizon)};
  ensure_dir(a.out);
  echo_config(a.out, config);
  const fs::path out(a.out);

  if (a.oracle) {
    const auto curve = f1_curve(oracle_predictor(), episodes, config.eval);
    write_f1_csv(out / "f1_curve.csv", curve);
    std::cout << "oracle F1@1 " << fmt(curve.horizons.front().f1()) << "\n";
    return;
  }
  if (a.checkpoint.empty()) throw Exit{kUsage, "--checkpoint is required unless --oracle is given"};
  const auto ck = load_checkpoint(a.checkpoint);
  const auto model = network_predictor(ck.config, ck.params);
  const auto curve = f1_curve(model, episodes, config.eval);
  write_f1_csv(out / "f1_curve.csv", curve);
  write_f1_csv(out / "f1_curve_baseline.csv", f1_curve(baseline_predictor(), episodes, config.eval));
  if (!a.validation.empty()) {
    std::vector<double> grid;
    for (int i = 1; i < 20; ++i) grid.push_back(0.05 * i);
    auto calibrated = config.eval;
    calibrated.threshold = calibrated_threshold(model, load_episodes(a.validation), config.eval, grid);
    write_f1_csv(out / "f1_curve_calibrated.csv", f1_curve(model, episodes, calibrated));
    write_text(out / "calibrated_threshold.txt", fmt(calibrated.threshold) + "\n");
  }
  write_confusion_csv(out / "confusion_visible.csv",
                      confusion_matrix(model, episodes, ConfusionVariant::visible, ck.config.classes, config.eval));
  write_confusion_csv(out / "confusion_occluded.csv",
                      confusion_matrix(model, episodes, ConfusionVariant::occluded, ck.config.classes, config.eval));
  const auto one_shot = one_shot_part(ck.params);
  if (one_shot.size() > 0)
    write_nll_csv(out / "nll.csv", nll_comparison(model, one_shot_predictor(one_shot), episodes, config.eval));
  std::cout << "F1@1 " << fmt(curve.horizons.front().f1()) << "\n";
}

void write_grid_csv(const fs::path& path, const Tensor<float>& grid, int m) {
  std::string s;
  for (int y = 0; y < m; ++y) {
    for (int x = 0; x < m; ++x) s += (x ? "," : "") + fmt(grid[static_cast<Eigen::Index>(y) * m + x]);
    s += "\n";
  }
  write_text(path, s);
}

void write_class_csv(const fs::path& path, const Tensor<float>& semantics) {
  const int k = semantics.dim(0), m = semantics.dim(1);
  std::string s;
  for (int y = 0; y < m; ++y) {
    for (int x = 0; x < m; ++x) {
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (semantics(c, y, x) > semantics(best, y, x)) best = c;
      s += (x ? "," : "") + std::to_string(best);
    }
    s += "\n";
  }
  write_text(path, s);
}

struct ProbeArgs {
  Common common;
  std::string checkpoint;
  std::string out;
  std::string data;
  int steps = 20;
};

void cmd_probe_static(const ProbeArgs& a) {
  const auto config = load_config(a.common);
  if (a.steps < 1) throw Exit{kUsage, "--steps must be >= 1"};
  const auto ck = load_checkpoint(a.checkpoint);
  ensure_dir(a.out);
  echo_config(a.out, config);
  const auto maps = static_memory_probe(ck.config, ck.params, a.steps);
  const int m = ck.config.grid;
  for (std::size_t t = 0; t < maps.size(); ++t)
    write_grid_csv(fs::path(a.out) / ("probe_" + std::to_string(t + 1) + ".csv"), maps[t], m);
  const Eigen::ArrayXXf last = Eigen::Map<const Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      maps.back().data(), m, m);
  write_file(fs::path(a.out) / "probe_final.pgm", render_pgm(last));
  if (!a.data.empty()) {
    const auto episodes = load_episodes(a.data);
    if (episodes.empty()) throw Exit{kUsage, "no episode files in '" + a.data + "'"};
    write_probe_csv(fs::path(a.out) / "probe_corr.csv",
                    compare_probe(maps.back(), mean_occupancy_map(episodes), persistent_cells(episodes)));
  }
}

struct PredictArgs {
  Common common;
  std::string checkpoint;
  std::string episode;
  int t = 10;
  int n = 10;
  std::string out;
};

void cmd_predict(const PredictArgs& a) {
  load_config(a.common);
  const auto ck = load_checkpoint(a.checkpoint);
  const auto ep = read_episode(a.episode);
  if (a.t < 1 || a.t > ep.length()) throw Exit{kUsage, "--t must be in 1.." + std::to_string(ep.length())};
  if (a.n < 0 || a.t + a.n > ep.length())
    throw Exit{kUsage, "horizon " + std::to_string(a.n) + " from anchor " + std::to_string(a.t) +
                           " exceeds the episode length " + std::to_string(ep.length())};
  ensure_dir(a.out);
  auto predictor = network_predictor(ck.config, ck.params)();
  predictor->begin(ep);
  Belief current;
  for (int i = 0; i < a.t; ++i) current = predictor->observe(i);
  std::vector<Belief> beliefs{current};
  for (auto& b : predictor->forecast(a.n)) beliefs.push_back(std::move(b));
  for (std::size_t h = 0; h < beliefs.size(); ++h) {
    write_grid_csv(fs::path(a.out) / ("occupancy_h" + std::to_string(h) + ".csv"), beliefs[h].occupancy, ck.config.grid);
    write_class_csv(fs::path(a.out) / ("classes_h" + std::to_string(h) + ".csv"), beliefs[h].semantics);
  }
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.size() != rows.front().size())
    throw Exit{kUsage, "'" + path.string() + "' is not a square grid"};
  for (const auto& r : rows)
    if (r.size() != rows.size()) throw Exit{kUsage, "'" + path.string() + "' is not a square grid"};
  return rows;
}

Eigen::ArrayXXf probability_csv(const fs::path& path) {
  const auto rows = read_csv(path);
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::ArrayXXf g(m, m);
  for (Eigen::Index y = 0; y < m; ++y)
    for (Eigen::Index x = 0; x < m; ++x) g(y, x) = std::stof(rows[y][x]);
  return g;
}

ByteGrid class_csv(const fs::path& path) {
  const auto rows = read_csv(path);
  const auto m = static_cast<Eigen::Index>(rows.size());
  ByteGrid g(m, m);
  for (Eigen::Index y = 0; y < m; ++y)
    for (Eigen::Index x = 0; x < m; ++x) g(y, x) = static_cast<std::uint8_t>(std::stoi(rows[y][x]));
  return g;
}

struct RenderArgs {
  std::string input;
  std::string probability;
  std::string out;
  std::string mode = "occupancy";
  int frame = 0;
};

void cmd_render(const RenderArgs& a) {
  RenderMode mode;
  try {
    mode = parse_render_mode(a.mode);
  } catch (const std::invalid_argument& e) {
    throw Exit{kUsage, e.what()};
  }
  ByteGrid classes;
  Eigen::ArrayXXf prob;
  if (fs::path(a.input).extension() == ".dtep") {
    const auto ep = read_episode(a.input);
    if (a.frame < 0 || a.frame >= ep.length()) throw Exit{kUsage, "--frame outside the episode"};
    const auto& f = ep.frames[static_cast<std::size_t>(a.frame)];
    classes = f.classes;
    prob = f.occupancy.cast<float>();
  } else if (mode == RenderMode::occupancy) {
    prob = probability_csv(a.input);
  } else {
    classes = class_csv(a.input);
    if (mode == RenderMode::composite) {
      if (a.probability.empty()) throw Exit{kUsage, "composite rendering of a CSV grid needs --probability"};
      prob = probability_csv(a.probability);
    }
  }
  std::vector<std::uint8_t> bytes;
  switch (mode) {
    case RenderMode::occupancy: bytes = render_pgm(prob); break;
    case RenderMode::classes: bytes = render_classes_ppm(classes); break;
    case RenderMode::composite: bytes = render_composite_ppm(classes, prob); break;
  }
  write_file(a.out, bytes);
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value configuration file");
  cmd->add_option("--set", c.overrides, "extra key=value settings applied after --config");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Recurrent occupancy tracking through occlusion"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "generate episode files");
  add_common(c_sim, sim.common);
  c_sim->add_option("--out", sim.out, "output directory")->required();
  c_sim->add_option("--episodes", sim.episodes, "number of episodes");
  c_sim->add_option("--frames", sim.frames, "frames per episode");
  c_sim->add_option("--seed", sim.seed, "base seed");
  c_sim->add_option("--scenario", sim.scenario, "scripted scenario instead of random episodes");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "unsupervised occupancy training");
  add_common(c_tr, tr.common);
  c_tr->add_option("--data", tr.data, "directory of training episodes")->required();
  c_tr->add_option("--out", tr.out, "output directory")->required();

  SemanticArgs se;
  auto* c_se = app.add_subcommand("train-semantic", "semantic transfer and one-shot classifier");
  add_common(c_se, se.common);
  c_se->add_option("--checkpoint", se.checkpoint, "occupancy checkpoint")->required();
  c_se->add_option("--labels", se.labels, "directory of labeled episodes");
  c_se->add_option("--out", se.out, "output directory")->required();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "F1 curves, confusion matrices and NLL");
  add_common(c_ev, ev.common);
  c_ev->add_option("--checkpoint", ev.checkpoint, "model checkpoint");
  c_ev->add_option("--data", ev.data, "directory of test episodes")->required();
  c_ev->add_option("--out", ev.out, "output directory")->required();
  c_ev->add_option("--validation", ev.validation, "episodes for threshold calibration");
  c_ev->add_flag("--oracle", ev.oracle, "score the ground-truth oracle instead of a model");

  ProbeArgs pr;
  auto* c_pr = app.add_subcommand("probe-static", "run the network on empty inputs only");
  add_common(c_pr, pr.common);
  c_pr->add_option("--checkpoint", pr.checkpoint, "model checkpoint")->required();
  c_pr->add_option("--out", pr.out, "output directory")->required();
  c_pr->add_option("--data", pr.data, "training episodes for the mean-occupancy comparison");
  c_pr->add_option("--steps", pr.steps, "number of empty steps");

  PredictArgs pd;
  auto* c_pd = app.add_subcommand("predict", "filtered estimate and forecasts from one anchor");
  add_common(c_pd, pd.common);
  c_pd->add_option("--checkpoint", pd.checkpoint, "model checkpoint")->required();
  c_pd->add_option("--episode", pd.episode, "episode file")->required();
  c_pd->add_option("--t", pd.t, "number of frames observed");
  c_pd->add_option("--n", pd.n, "forecast horizon");
  c_pd->add_option("--out", pd.out, "output directory")->required();

  RenderArgs rd;
  auto* c_rd = app.add_subcommand("render", "write PGM/PPM images");
  c_rd->add_option("--input", rd.input, "grid CSV or episode file")->required();
  c_rd->add_option("--probability", rd.probability, "occupancy CSV for composite rendering");
  c_rd->add_option("--out", rd.out, "output image")->required();
  c_rd->add_option("--mode", rd.mode, "occupancy | classes | composite");
  c_rd->add_option("--frame", rd.frame, "frame index when the input is an episode");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*c_sim) cmd_simulate(sim);
    else if (*c_tr) cmd_train(tr);
    else if (*c_se) cmd_train_semantic(se);
    else if (*c_ev) cmd_eval(ev);
    else if (*c_pr) cmd_probe_static(pr);
    else if (*c_pd) cmd_predict(pd);
    else if (*c_rd) cmd_render(rd);
    return kOk;
  } catch (const Exit& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "corrupt input: " << e.what() << "\n";
    return kCorrupt;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace occtrack::cli
