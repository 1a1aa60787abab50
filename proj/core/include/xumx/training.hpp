#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xumx/checkpoint.hpp"
#include "xumx/data.hpp"
#include "xumx/train_config.hpp"

namespace xumx {

/// Improvements smaller than this do not count for scheduling or stopping.
inline constexpr double kMinDelta = 1e-6;
/// Loss magnitudes beyond this are treated as divergence.
inline constexpr double kDivergenceLimit = 1e15;

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_loss = 0.0;
  /// Learning rate used during the epoch.
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  /// 0-based index of the first epoch with the smallest validation loss.
  std::size_t best_index() const;
  std::vector<double> valid_losses() const;
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Learning rate after the latest epoch. Replays the history: the counter
/// grows on every epoch that fails to beat the best loss so far by
/// kMinDelta, resets on improvement and after each drop, and the rate is
/// multiplied by `factor` when the counter reaches `patience` at the last
/// epoch.
double reduce_on_plateau(std::span<const double> valid_losses, int patience, double factor,
                         double current_lr);

/// True once `patience` epochs have passed without a new minimum.
bool early_stop(std::span<const double> valid_losses, int patience);

/// Index of the first minimum.
std::size_t best_epoch(std::span<const double> valid_losses);

struct TrainResult {
  Checkpoint checkpoint;
  TrainHistory history;
};

/// Called after each epoch; useful for progress output.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Joint training of all source paths with shared scheduling and early
/// stopping. The returned checkpoint holds the best-validation parameters.
/// Throws TrainingAbort when a batch loss is non-finite or diverges.
TrainResult train(const TrainConfig& cfg, const DatasetSplit& split,
                  const EpochCallback& on_epoch = {});

/// The variant's training loss averaged over full tracks.
double validation_loss(const Checkpoint& ckpt, std::span<const Track> tracks);

/// Loss of one (mixture, stems) example for the given variant, recorded on
/// `tape` with the bound parameters.
LossReport example_loss(const ParamBinding& params, const NetConfig& net,
                        const NormStats& stats, const TrainConfig& cfg,
                        const Waveform& mixture, std::span<const Waveform> stems);

}  // namespace xumx
