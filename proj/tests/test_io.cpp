#include <doctest.h>

#include "occtrack/binary_io.hpp"
#include "occtrack/checkpoint.hpp"
#include "occtrack/episode_io.hpp"
#include "occtrack/network.hpp"
#include "test_util.hpp"

#include <cstring>

using namespace occtrack;

namespace {

/// Rewrites the trailing CRC so only the intended corruption remains.
void reseal(std::vector<std::uint8_t>& bytes) {
  bytes.resize(bytes.size() - 4);
  const auto c = crc32(bytes);
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(c >> (8 * i)));
}

template <typename Fn>
std::uint64_t format_error_offset(Fn&& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.offset();
  }
  FAIL("expected FormatError");
  return 0;
}

}  // namespace

TEST_CASE("crc32 matches the standard check value") {
  const std::string s = "123456789";
  CHECK(crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}) == 0xCBF43926u);
}

TEST_CASE("byte reader and writer are little-endian and bounds-checked") {
  ByteWriter w;
  w.u16(0x0102);
  w.u32(0x03040506);
  w.f32(1.5f);
  w.u64(0x1122334455667788ull);
  CHECK(w.bytes()[0] == 0x02);
  CHECK(w.bytes()[1] == 0x01);
  ByteReader r(w.bytes());
  CHECK(r.u16() == 0x0102);
  CHECK(r.u32() == 0x03040506);
  CHECK(r.f32() == 1.5f);
  CHECK(r.u64() == 0x1122334455667788ull);
  CHECK(r.remaining() == 0);
  CHECK(format_error_offset([&] { r.u8(); }) == 18);
}

TEST_CASE("episode round trip is exact") {
  const auto ep = generate_episode(default_sim_config(), 6, 42);
  const auto bytes = encode_episode(ep);
  CHECK(std::memcmp(bytes.data(), "DTEP", 4) == 0);
  const auto back = decode_episode(bytes);
  CHECK(back == ep);
  CHECK(back.frames[0].scan.max_range == ep.frames[0].scan.max_range);
  CHECK(encode_episode(back) == bytes);

  const auto dir = testutil::scratch_dir("episode_io");
  write_episode(dir / "ep.dtep", ep);
  CHECK(read_episode(dir / "ep.dtep") == ep);
  CHECK(read_file(dir / "ep.dtep") == bytes);

  const auto single = generate_episode(default_sim_config(), 1, 1);
  CHECK(decode_episode(encode_episode(single)) == single);
}

TEST_CASE("corrupt episodes are rejected with byte offsets") {
  const auto ep = generate_episode(default_sim_config(), 2, 5);
  const auto good = encode_episode(ep);

  auto flipped = good;
  flipped[100] ^= 0x40;
  CHECK(format_error_offset([&] { decode_episode(flipped); }) == good.size() - 4);

  auto magic = good;
  magic[0] = 'X';
  reseal(magic);
  CHECK(format_error_offset([&] { decode_episode(magic); }) == 0);

  auto version = good;
  version[4] = 9;
  reseal(version);
  CHECK(format_error_offset([&] { decode_episode(version); }) == 4);

  // dropping the last frame byte keeps a valid CRC but breaks the declared length
  auto short_payload = good;
  short_payload.erase(short_payload.end() - 5);
  reseal(short_payload);
  CHECK_THROWS_AS(decode_episode(short_payload), FormatError);

  auto truncated = good;
  truncated.resize(good.size() / 2);
  CHECK_THROWS_AS(decode_episode(truncated), FormatError);
  CHECK_THROWS_AS(decode_episode(std::vector<std::uint8_t>{'D', 'T'}), FormatError);

  CHECK_THROWS_AS(read_episode("/nonexistent/dir/ep.dtep"), IoError);
}

TEST_CASE("checkpoint round trip keeps parameters, moments and progress") {
  const NetworkConfig cfg{2, 3, 8, 4};
  auto store = init_params<float>(cfg, 3);
  for (auto& p : store) {
    p.grads().setConstant(0.01f);
  }
  optimizer_step(store, 1e-3, OptimizerKind::adam);

  const auto dir = testutil::scratch_dir("checkpoint_io");
  save_checkpoint(dir / "a.dtck", cfg, store, TrainingProgress{7});
  const auto loaded = load_checkpoint(dir / "a.dtck");
  CHECK(loaded.config == cfg);
  REQUIRE(loaded.progress.has_value());
  CHECK(loaded.progress->epochs_done == 7);
  REQUIRE(loaded.params.size() == store.size());
  for (const auto& p : store) {
    const auto& q = loaded.params.at(p.name());
    CHECK(q.value() == p.value());
    CHECK(q.first_moment() == p.first_moment());
    CHECK(q.second_moment() == p.second_moment());
    CHECK(q.steps() == p.steps());
  }

  // saving the loaded store again gives identical bytes
  save_checkpoint(dir / "b.dtck", loaded.config, loaded.params, loaded.progress);
  CHECK(read_file(dir / "a.dtck") == read_file(dir / "b.dtck"));

  save_checkpoint(dir / "c.dtck", cfg, store);
  CHECK_FALSE(load_checkpoint(dir / "c.dtck").progress.has_value());
}

TEST_CASE("corrupt checkpoints are rejected with byte offsets") {
  const NetworkConfig cfg{1, 2, 8, 4};
  CheckpointFile file{cfg, {}};
  for (const auto& p : init_params<float>(cfg, 1)) file.blocks.push_back({p.name(), p.value()});
  const auto good = encode_checkpoint(file);
  const auto back = decode_checkpoint(good);
  CHECK(back.config == cfg);
  REQUIRE(back.blocks.size() == file.blocks.size());
  CHECK(back.find("occupancy.w") != nullptr);
  CHECK(back.find("missing") == nullptr);

  auto flipped = good;
  flipped[40] ^= 1;
  CHECK(format_error_offset([&] { decode_checkpoint(flipped); }) == good.size() - 4);

  auto magic = good;
  magic[1] = 'Z';
  reseal(magic);
  CHECK(format_error_offset([&] { decode_checkpoint(magic); }) == 0);

  auto truncated = good;
  truncated.resize(30);
  reseal(truncated);
  CHECK(format_error_offset([&] { decode_checkpoint(truncated); }) >= 26);
}
