#include "occtrack/checkpoint.hpp"

#include <algorithm>

namespace occtrack {
namespace {

constexpr char kMagic[4] = {'D', 'T', 'C', 'K'};
const std::string kFirstMoment = "opt/m/";
const std::string kSecondMoment = "opt/v/";
const std::string kStepCount = "opt/t/";
const std::string kEpochs = "train/epochs_done";

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

bool reserved(const std::string& name) { return starts_with(name, "opt/") || starts_with(name, "train/"); }

}  // namespace

const NamedTensor* CheckpointFile::find(const std::string& name) const {
  auto it = std::find_if(blocks.begin(), blocks.end(), [&](const NamedTensor& b) { return b.name == name; });
  return it == blocks.end() ? nullptr : &*it;
}

std::vector<std::uint8_t> encode_checkpoint(const CheckpointFile& file) {
  ByteWriter w;
  w.raw({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
  w.u16(kCheckpointFormatVersion);
  w.u32(static_cast<std::uint32_t>(file.config.layers));
  w.u32(static_cast<std::uint32_t>(file.config.channels));
  w.u32(static_cast<std::uint32_t>(file.config.grid));
  w.u32(static_cast<std::uint32_t>(file.config.classes));
  w.u32(static_cast<std::uint32_t>(file.blocks.size()));
  for (const auto& b : file.blocks) {
    w.u32(static_cast<std::uint32_t>(b.name.size()));
    w.text(b.name);
    w.u32(static_cast<std::uint32_t>(b.value.rank()));
    for (int d : b.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (Eigen::Index i = 0; i < b.value.size(); ++i) w.f32(b.value[i]);
  }
  w.seal();
  return w.bytes();
}

CheckpointFile decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin()))
    throw FormatError("not a checkpoint file (bad magic)", 0);
  ByteReader r(bytes);
  r.check_crc();
  r.raw(4);
  const std::size_t version_at = r.offset();
  const auto version = r.u16();
  if (version != kCheckpointFormatVersion)
    throw FormatError("unsupported checkpoint format version " + std::to_string(version), version_at);

  CheckpointFile file;
  const std::size_t config_at = r.offset();
  file.config.layers = static_cast<int>(r.u32());
  file.config.channels = static_cast<int>(r.u32());
  file.config.grid = static_cast<int>(r.u32());
  file.config.classes = static_cast<int>(r.u32());
  try {
    file.config.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid network config: ") + e.what(), config_at);
  }
  const auto count = r.u32();
  const std::size_t body_end = bytes.size() - 4;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t block_at = r.offset();
    const auto name_len = r.u32();
    if (name_len > body_end - r.offset()) throw FormatError("block name runs past end of data", block_at);
    NamedTensor b;
    b.name = r.text(name_len);
    const auto rank = r.u32();
    if (rank < 1 || rank > 4) throw FormatError("block '" + b.name + "' has invalid rank", block_at);
    Shape shape;
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<int>(r.u32()));
      n *= static_cast<std::uint64_t>(shape.back());
    }
    if (n * 4 > body_end - r.offset()) throw FormatError("block '" + b.name + "' runs past end of data", block_at);
    b.value = Tensor<float>(shape);
    for (Eigen::Index k = 0; k < b.value.size(); ++k) b.value[k] = r.f32();
    file.blocks.push_back(std::move(b));
  }
  if (r.offset() != body_end) throw FormatError("unexpected trailing data", r.offset());
  return file;
}

void save_checkpoint(const std::filesystem::path& path, const NetworkConfig& config,
                     const ParameterStore<float>& store, const std::optional<TrainingProgress>& progress) {
  CheckpointFile file{config, {}};
  for (const auto& p : store) file.blocks.push_back({p.name(), p.value()});
  if (progress) {
    for (const auto& p : store) {
      file.blocks.push_back({kFirstMoment + p.name(), p.first_moment()});
      file.blocks.push_back({kSecondMoment + p.name(), p.second_moment()});
      file.blocks.push_back({kStepCount + p.name(), Tensor<float>::scalar(static_cast<float>(p.steps()))});
    }
    file.blocks.push_back({kEpochs, Tensor<float>::scalar(static_cast<float>(progress->epochs_done))});
  }
  write_file(path, encode_checkpoint(file));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  auto file = decode_checkpoint(read_file(path));
  LoadedCheckpoint out{file.config, {}, std::nullopt};
  for (auto& b : file.blocks)
    if (!reserved(b.name)) out.params.add(b.name, std::move(b.value));
  for (const auto& b : file.blocks) {
    if (starts_with(b.name, kFirstMoment)) {
      const auto name = b.name.substr(kFirstMoment.size());
      const auto* v = file.find(kSecondMoment + name);
      const auto* t = file.find(kStepCount + name);
      if (!v || !t || !out.params.contains(name))
        throw FormatError("incomplete optimizer state for '" + name + "'", 0);
      auto& p = out.params.at(name);
      p.assign_moments(b.value, v->value);
      p.set_steps(static_cast<std::int64_t>(t->value.item()));
    }
  }
  if (const auto* e = file.find(kEpochs)) out.progress = TrainingProgress{static_cast<int>(e->value.item())};
  return out;
}

}  // namespace occtrack
