#pragma once

// File layout:
//   line 1  "xumx-checkpoint <version>"
//   line 2  one-line JSON header (configs, source names, normalisation
//           statistics, layer names and shapes)
//   rest    little-endian float32 arrays in header order

#include <filesystem>
#include <string>
#include <vector>

#include "xumx/model.hpp"
#include "xumx/train_config.hpp"

namespace xumx {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  NetConfig net;
  StftConfig stft;
  int sample_rate = 44100;
  std::vector<std::string> source_names;
  NormStats stats;
  TrainConfig train;
  ModelParams params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
std::string encode_checkpoint(const Checkpoint& ckpt);

/// Throws CheckpointError on version mismatch, a malformed header, or array
/// data that does not match the declared shapes.
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint decode_checkpoint(const std::string& bytes);

/// As above, and also requires the stored network wiring to equal `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const NetConfig& expected);

}  // namespace xumx
