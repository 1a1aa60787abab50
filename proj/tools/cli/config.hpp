#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "xumx/data.hpp"
#include "xumx/train_config.hpp"

namespace xumx::cli {

struct DatasetConfig {
  /// "synthetic" or "musdb"
  std::string source = "synthetic";
  std::filesystem::path path;
  std::size_t tracks = 20;
  double duration_seconds = 10.0;
  int sample_rate = 8000;
  std::size_t sources = 4;
  std::uint64_t seed = 0;
  std::size_t valid_tracks = 3;
  std::size_t test_tracks = 3;
};

struct RunConfig {
  DatasetConfig dataset;
  TrainConfig train;
};

/// Sectioned key = value text: [dataset], [stft], [model], [train], [variant].
/// Unknown sections or keys and malformed values throw ConfigError naming
/// the key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Builds or loads the tracks and splits them (seeded by dataset.seed).
DatasetSplit load_dataset(const DatasetConfig& cfg);

}  // namespace xumx::cli
