#pragma once

#include "occtrack/binary_io.hpp"
#include "occtrack/network.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace occtrack {

inline constexpr std::uint16_t kCheckpointFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

/// Raw checkpoint contents:
///
///   "DTCK" u16 version, u32 L, u32 C, u32 M, u32 K, u32 block count
///   per block: u32 name length, name bytes, u32 rank, u32 dims..., f32 data (row-major)
///   u32 CRC32 of everything before it
struct CheckpointFile {
  NetworkConfig config;
  std::vector<NamedTensor> blocks;

  const NamedTensor* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const CheckpointFile& file);
/// Throws FormatError with the byte offset of the first problem.
CheckpointFile decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Optimizer state and progress stored next to the parameters so training can resume.
struct TrainingProgress {
  int epochs_done = 0;
};

/// Reserved block-name prefixes: "opt/m/", "opt/v/", "opt/t/" for adaptive-moment
/// state and "train/" for progress counters. Everything else is a parameter.
void save_checkpoint(const std::filesystem::path& path, const NetworkConfig& config,
                     const ParameterStore<float>& store, const std::optional<TrainingProgress>& progress = {});

struct LoadedCheckpoint {
  NetworkConfig config;
  ParameterStore<float> params;  // with optimizer moments restored when present
  std::optional<TrainingProgress> progress;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace occtrack
