#pragma once

#include "occtrack/binary_io.hpp"
#include "occtrack/world.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace occtrack {

inline constexpr std::uint16_t kEpisodeFormatVersion = 1;

/// Serialises an episode to the little-endian "DTEP" layout:
///
///   "DTEP" u16 version, u32 M, u32 K, u32 T, u32 beams, f32 cell_size, u64 seed
///   per frame: visibility, observed occupancy, y_true, c_true (M*M bytes each),
///              then per beam f32 angle, f32 range, u8 no-return flag
///   u32 CRC32 of everything before it
///
/// Every frame must carry the same number of beams.
std::vector<std::uint8_t> encode_episode(const Episode& episode);

/// Inverse of encode_episode. Throws FormatError (with byte offset) on bad
/// magic, unsupported version, truncation, trailing bytes or CRC mismatch.
Episode decode_episode(std::span<const std::uint8_t> bytes);

void write_episode(const std::filesystem::path& path, const Episode& episode);
Episode read_episode(const std::filesystem::path& path);

}  // namespace occtrack
