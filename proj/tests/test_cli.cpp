#include <doctest.h>

#include "../tools/cli.hpp"
#include "occtrack/checkpoint.hpp"
#include "occtrack/config.hpp"
#include "occtrack/episode_io.hpp"
#include "occtrack/render.hpp"
#include "test_util.hpp"

#include <fstream>
#include <sstream>

using namespace occtrack;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "occtrack");
  return cli::run(args);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// Small, fast settings shared by the command tests.
const std::vector<std::string> kSmall = {"--set", "grid.size=16",    "--set", "grid.cell_size=0.4",
                                         "--set", "net.layers=2",    "--set", "net.channels=2",
                                         "--set", "sim.beam_count=60"};

std::vector<std::string> with_small(std::vector<std::string> args) {
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  return args;
}

}  // namespace

TEST_CASE("config text round trip and key checking") {
  RunConfig c = parse_run_config("# comment\nnet.channels = 5\n\ngrid.size=32  # trailing\nsim.car.speed_max = 7.5\n");
  CHECK(c.channels == 5);
  CHECK(c.sim.grid.size == 32);
  CHECK(c.sim.profile(ObjectClass::car).speed_max == 7.5);
  const auto text = to_text(c);
  const auto back = parse_run_config(text);
  CHECK(to_text(back) == text);
  CHECK(back.sim.digest() == c.sim.digest());
  CHECK(back.network() == c.network());
  for (const auto& k : config_keys()) {
    CHECK_FALSE(config_doc(k).empty());
    CHECK(text.find(k + " = ") != std::string::npos);
  }

  try {
    parse_run_config("net.chanels = 4\n");
    FAIL("unknown key accepted");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "net.chanels");
  }
  CHECK_THROWS_AS(parse_run_config("net.channels = four\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("grid.size = 7\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("train.show = 15\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("no equals sign\n"), ConfigError);
}

TEST_CASE("config adds extra static shapes") {
  auto c = parse_run_config("sim.static_map = none\nsim.static_shape.1 = disc 1 2 0.5\nsim.static_shape.2 = rect 0 -3 2 1 0.3\n");
  REQUIRE(c.sim.static_map.size() == 2);
  CHECK(c.sim.static_map[0].kind == Footprint::Kind::disc);
  CHECK(c.sim.static_map[1].heading == doctest::Approx(0.3));
  CHECK(parse_run_config(to_text(c)).sim.digest() == c.sim.digest());
  CHECK_THROWS_AS(parse_run_config("sim.static_shape.1 = triangle 1 2\n"), ConfigError);
}

TEST_CASE("image encodings") {
  Eigen::ArrayXXf p = Eigen::ArrayXXf::Zero(4, 4);
  p(1, 2) = 1.0f;
  p(3, 0) = 0.5f;
  const auto pgm = render_pgm(p);
  const std::string head = "P5\n4 4\n255\n";
  REQUIRE(pgm.size() == head.size() + 16);
  CHECK(std::string(pgm.begin(), pgm.begin() + head.size()) == head);
  CHECK(pgm[head.size() + 1 * 4 + 2] == 255);
  CHECK(pgm[head.size() + 3 * 4 + 0] == 128);
  CHECK(pgm[head.size()] == 0);

  const int m = 6;
  const auto black = render_classes_ppm(ByteGrid::Constant(m, m, kIgnoreLabel));
  const std::string phead = "P6\n6 6\n255\n";
  REQUIRE(black.size() == phead.size() + 3 * m * m);
  for (std::size_t i = phead.size(); i < black.size(); ++i) CHECK(black[i] == 0);

  CHECK(class_color(0) == Rgb{128, 128, 128});
  CHECK(class_color(1) == Rgb{255, 0, 0});
  CHECK(class_color(2) == Rgb{0, 0, 255});
  CHECK(class_color(3) == Rgb{0, 200, 0});

  ByteGrid cls = ByteGrid::Constant(2, 2, 3);
  Eigen::ArrayXXf half = Eigen::ArrayXXf::Constant(2, 2, 0.5f);
  const auto comp = render_composite_ppm(cls, half);
  CHECK(comp[comp.size() - 2] == 100);
  CHECK_THROWS(render_composite_ppm(cls, Eigen::ArrayXXf::Zero(3, 3)));
  CHECK_THROWS_AS(parse_render_mode("heatmap"), std::invalid_argument);
}

TEST_CASE("rendered scripted frame matches the golden image") {
  const auto ep = scripted_scenario("mixed-traffic", default_sim_config());
  const auto bytes = render_classes_ppm(ep.frames[12].classes);
  const auto golden = slurp(fs::path(OCCTRACK_GOLDEN_DIR) / "mixed_traffic_frame12_classes.ppm");
  REQUIRE_FALSE(golden.empty());
  CHECK(std::string(bytes.begin(), bytes.end()) == golden);

  const auto dir = testutil::scratch_dir("cli_golden");
  CHECK(run({"simulate", "--out", (dir / "s").string(), "--scenario", "mixed-traffic"}) == 0);
  CHECK(run({"render", "--input", (dir / "s" / "scenario_mixed-traffic.dtep").string(), "--frame", "12", "--mode",
             "classes", "--out", (dir / "g.ppm").string()}) == 0);
  CHECK(slurp(dir / "g.ppm") == golden);
}

TEST_CASE("simulate is deterministic and validates its inputs") {
  const auto dir = testutil::scratch_dir("cli_sim");
  CHECK(run(with_small({"simulate", "--out", (dir / "a").string(), "--episodes", "2", "--frames", "40", "--seed", "5"})) == 0);
  CHECK(run(with_small({"simulate", "--out", (dir / "b").string(), "--episodes", "2", "--frames", "40", "--seed", "5"})) == 0);
  CHECK(fs::exists(dir / "a" / "ep_5_0.dtep"));
  CHECK(fs::exists(dir / "a" / "ep_5_1.dtep"));
  CHECK(slurp(dir / "a" / "manifest.txt") == slurp(dir / "b" / "manifest.txt"));
  CHECK(slurp(dir / "a" / "ep_5_1.dtep") == slurp(dir / "b" / "ep_5_1.dtep"));
  CHECK(slurp(dir / "a" / "ep_5_0.dtep") != slurp(dir / "a" / "ep_5_1.dtep"));
  const auto ep = read_episode(dir / "a" / "ep_5_0.dtep");
  CHECK(ep.length() == 40);
  CHECK(ep.grid.size == 16);
  CHECK(slurp(dir / "a" / "resolved_config.txt").find("occtrack") != std::string::npos);

  CHECK(run({"simulate", "--out", (dir / "c").string(), "--set", "net.chanels=3"}) == cli::kUsage);
  CHECK(run({"simulate", "--out", (dir / "c").string(), "--config", (dir / "missing.cfg").string()}) == cli::kIo);
  CHECK(run({"simulate", "--out", (dir / "c").string(), "--scenario", "rush-hour"}) == cli::kUsage);
  CHECK(run({"simulate"}) == cli::kUsage);
  CHECK(run({"frobnicate"}) == cli::kUsage);
  write(dir / "blocker", "x");
  CHECK(run({"simulate", "--out", (dir / "blocker" / "sub").string()}) == cli::kIo);
}

TEST_CASE("train, resume, evaluate and predict through the command line") {
  const auto dir = testutil::scratch_dir("cli_train");
  const auto data = (dir / "data").string(), test = (dir / "test").string();
  REQUIRE(run(with_small({"simulate", "--out", data, "--episodes", "2", "--frames", "40", "--seed", "1"})) == 0);
  REQUIRE(run(with_small({"simulate", "--out", test, "--episodes", "1", "--frames", "40", "--seed", "2"})) == 0);

  // two epochs straight through, versus one epoch then a resumed second
  const auto full = (dir / "full").string(), split = (dir / "split").string();
  REQUIRE(run(with_small({"train", "--data", data, "--out", full, "--set", "train.epochs=2"})) == 0);
  REQUIRE(run(with_small({"train", "--data", data, "--out", split, "--set", "train.epochs=1"})) == 0);
  REQUIRE(run(with_small({"train", "--data", data, "--out", split, "--set", "train.epochs=2"})) == 0);
  const auto a = load_checkpoint(fs::path(full) / "model.dtck");
  const auto b = load_checkpoint(fs::path(split) / "model.dtck");
  for (const auto& p : a.params) CHECK(p.value() == b.params.at(p.name()).value());
  CHECK(slurp(fs::path(full) / "checkpoint_latest.dtck") == slurp(fs::path(split) / "checkpoint_latest.dtck"));
  // metrics continue: 2 minibatches per epoch, header once
  const auto metrics = slurp(fs::path(split) / "metrics.csv");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 5);

  const auto model = (fs::path(full) / "model.dtck").string();
  const auto ev = (dir / "eval").string();
  CHECK(run(with_small({"eval", "--checkpoint", model, "--data", test, "--out", ev})) == 0);
  CHECK(fs::exists(fs::path(ev) / "f1_curve.csv"));
  CHECK(fs::exists(fs::path(ev) / "f1_curve_baseline.csv"));
  CHECK(fs::exists(fs::path(ev) / "confusion_visible.csv"));
  const auto ev2 = (dir / "eval2").string();
  CHECK(run(with_small({"eval", "--checkpoint", model, "--data", test, "--out", ev2})) == 0);
  CHECK(slurp(fs::path(ev) / "f1_curve.csv") == slurp(fs::path(ev2) / "f1_curve.csv"));
  CHECK(slurp(fs::path(ev) / "confusion_occluded.csv") == slurp(fs::path(ev2) / "confusion_occluded.csv"));
  CHECK(run(with_small({"eval", "--oracle", "--data", test, "--out", (dir / "oracle").string()})) == 0);
  CHECK(run(with_small({"eval", "--data", test, "--out", (dir / "nockpt").string()})) == cli::kUsage);
  CHECK(run(with_small({"eval", "--checkpoint", model, "--data", test, "--out", ev, "--set", "eval.horizon=35"})) ==
        cli::kUsage);

  const auto episode = (fs::path(test) / "ep_2_0.dtep").string();
  const auto pd = dir / "pred";
  CHECK(run({"predict", "--checkpoint", model, "--episode", episode, "--t", "10", "--n", "0", "--out", pd.string()}) == 0);
  CHECK(fs::exists(pd / "occupancy_h0.csv"));
  CHECK(fs::exists(pd / "classes_h0.csv"));
  CHECK_FALSE(fs::exists(pd / "occupancy_h1.csv"));
  CHECK(run({"predict", "--checkpoint", model, "--episode", episode, "--t", "35", "--n", "10", "--out", pd.string()}) ==
        cli::kUsage);

  // labels directory missing, then a real semantic stage that leaves the tracker untouched
  CHECK(run(with_small({"train-semantic", "--checkpoint", model, "--labels", (dir / "nolabels").string(), "--out",
                        (dir / "sem").string()})) == cli::kUsage);
  REQUIRE(run(with_small({"train-semantic", "--checkpoint", model, "--labels", data, "--out", (dir / "sem").string(),
                          "--set", "semantic.epochs=1", "--set", "oneshot.epochs=1"})) == 0);
  const auto sem = load_checkpoint(dir / "sem" / "semantic.dtck");
  for (const auto& p : a.params)
    if (!is_semantic_parameter(p.name())) CHECK(p.value() == sem.params.at(p.name()).value());
  CHECK(sem.params.contains("oneshot.head.w"));
}

TEST_CASE("probe on an untrained checkpoint is flat") {
  const auto dir = testutil::scratch_dir("cli_probe");
  const NetworkConfig net{2, 2, 16, kNumClasses};
  save_checkpoint(dir / "init.dtck", net, init_params<float>(net, 1));
  CHECK(run({"probe-static", "--checkpoint", (dir / "init.dtck").string(), "--out", (dir / "p").string(), "--steps", "3"}) == 0);
  const auto csv = slurp(dir / "p" / "probe_3.csv");
  CHECK(csv.find("0.500000") != std::string::npos);
  CHECK(csv.find_first_not_of("0.5,\n") == std::string::npos);
  const auto pgm = slurp(dir / "p" / "probe_final.pgm");
  CHECK(pgm.size() == std::string("P5\n16 16\n255\n").size() + 256);
  CHECK(static_cast<unsigned char>(pgm.back()) == 128);
}

TEST_CASE("corrupt and missing inputs map to exit codes") {
  const auto dir = testutil::scratch_dir("cli_corrupt");
  const NetworkConfig net{1, 2, 16, kNumClasses};
  save_checkpoint(dir / "ok.dtck", net, init_params<float>(net, 1));
  auto bytes = slurp(dir / "ok.dtck");
  bytes[bytes.size() / 2] ^= 0x10;
  write(dir / "bad.dtck", bytes);
  CHECK(run({"probe-static", "--checkpoint", (dir / "bad.dtck").string(), "--out", (dir / "p").string()}) == cli::kCorrupt);
  CHECK(run({"probe-static", "--checkpoint", (dir / "none.dtck").string(), "--out", (dir / "p").string()}) == cli::kIo);

  REQUIRE(run(with_small({"simulate", "--out", (dir / "d").string(), "--episodes", "1"})) == 0);
  auto ep = slurp(dir / "d" / "ep_1_0.dtep");
  ep[20] ^= 0x01;
  write(dir / "d" / "ep_1_0.dtep", ep);
  CHECK(run(with_small({"train", "--data", (dir / "d").string(), "--out", (dir / "t").string()})) == cli::kCorrupt);
  CHECK(run({"render", "--input", (dir / "d" / "ep_1_0.dtep").string(), "--out", (dir / "x.pgm").string()}) ==
        cli::kCorrupt);
  CHECK(run({"train", "--data", (dir / "empty").string(), "--out", (dir / "t").string()}) == cli::kIo);

  write(dir / "grid.csv", "0,1\n0.5,0\n");
  CHECK(run({"render", "--input", (dir / "grid.csv").string(), "--mode", "sparkle", "--out", (dir / "x").string()}) ==
        cli::kUsage);
  CHECK(run({"render", "--input", (dir / "grid.csv").string(), "--out", (dir / "x.pgm").string()}) == 0);
  const auto pgm = slurp(dir / "x.pgm");
  CHECK(static_cast<unsigned char>(pgm[pgm.size() - 3]) == 255);
  write(dir / "ragged.csv", "0,1\n0\n");
  CHECK(run({"render", "--input", (dir / "ragged.csv").string(), "--out", (dir / "y.pgm").string()}) == cli::kUsage);
}
