#include "occtrack/episode_io.hpp"

#include <algorithm>
#include <stdexcept>

namespace occtrack {
namespace {

constexpr char kMagic[4] = {'D', 'T', 'E', 'P'};

void put_grid(ByteWriter& w, const ByteGrid& g, int m) {
  if (g.rows() != m || g.cols() != m) throw ShapeError("episode frame grid does not match the episode grid size");
  w.raw({g.data(), static_cast<std::size_t>(g.size())});
}

ByteGrid get_grid(ByteReader& r, int m) {
  ByteGrid g(m, m);
  auto bytes = r.raw(static_cast<std::size_t>(m) * static_cast<std::size_t>(m));
  std::copy(bytes.begin(), bytes.end(), g.data());
  return g;
}

}  // namespace

std::vector<std::uint8_t> encode_episode(const Episode& episode) {
  if (episode.frames.empty()) throw std::invalid_argument("episode has no frames");
  const int m = episode.grid.size;
  const std::size_t beams = episode.frames.front().scan.size();

  ByteWriter w;
  w.raw({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
  w.u16(kEpisodeFormatVersion);
  w.u32(static_cast<std::uint32_t>(m));
  w.u32(static_cast<std::uint32_t>(episode.classes));
  w.u32(static_cast<std::uint32_t>(episode.frames.size()));
  w.u32(static_cast<std::uint32_t>(beams));
  w.f32(static_cast<float>(episode.grid.cell_size));
  w.u64(episode.seed);
  for (const auto& f : episode.frames) {
    put_grid(w, f.observation.visibility, m);
    put_grid(w, f.observation.occupancy, m);
    put_grid(w, f.occupancy, m);
    put_grid(w, f.classes, m);
    if (f.scan.size() != beams) throw std::invalid_argument("episode frames carry different beam counts");
    for (std::size_t i = 0; i < beams; ++i) {
      w.f32(f.scan.angles[i]);
      w.f32(f.scan.ranges[i]);
      w.u8(f.scan.no_return[i]);
    }
  }
  w.seal();
  return w.bytes();
}

Episode decode_episode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin()))
    throw FormatError("not an episode file (bad magic)", 0);
  r.check_crc();
  r.raw(4);
  const std::size_t version_at = r.offset();
  const auto version = r.u16();
  if (version != kEpisodeFormatVersion)
    throw FormatError("unsupported episode format version " + std::to_string(version), version_at);

  Episode ep;
  const std::size_t dims_at = r.offset();
  const auto m = r.u32();
  const auto k = r.u32();
  const auto t = r.u32();
  const auto beams = r.u32();
  ep.grid.cell_size = r.f32();
  ep.seed = r.u64();
  if (m == 0 || m > 1u << 15 || t == 0 || k == 0 || k > 255)
    throw FormatError("implausible episode header (M=" + std::to_string(m) + ", K=" + std::to_string(k) +
                          ", T=" + std::to_string(t) + ")",
                      dims_at);
  ep.grid.size = static_cast<int>(m);
  ep.classes = static_cast<int>(k);

  const std::uint64_t frame_bytes = 4ull * m * m + 9ull * beams;
  if (frame_bytes * t + r.offset() + 4 != bytes.size())
    throw FormatError("episode payload length does not match header", r.offset());

  const int mi = static_cast<int>(m);
  ep.frames.reserve(t);
  for (std::uint32_t i = 0; i < t; ++i) {
    Frame f;
    f.observation.visibility = get_grid(r, mi);
    f.observation.occupancy = get_grid(r, mi);
    f.occupancy = get_grid(r, mi);
    f.classes = get_grid(r, mi);
    f.scan.angles.resize(beams);
    f.scan.ranges.resize(beams);
    f.scan.no_return.resize(beams);
    float no_return_range = 0, any_range = 0;
    for (std::uint32_t b = 0; b < beams; ++b) {
      f.scan.angles[b] = r.f32();
      f.scan.ranges[b] = r.f32();
      f.scan.no_return[b] = r.u8();
      any_range = std::max(any_range, f.scan.ranges[b]);
      if (f.scan.no_return[b]) no_return_range = std::max(no_return_range, f.scan.ranges[b]);
    }
    f.scan.max_range = no_return_range > 0 ? no_return_range : any_range;
    ep.frames.push_back(std::move(f));
  }
  return ep;
}

void write_episode(const std::filesystem::path& path, const Episode& episode) {
  write_file(path, encode_episode(episode));
}

Episode read_episode(const std::filesystem::path& path) { return decode_episode(read_file(path)); }

}  // namespace occtrack
