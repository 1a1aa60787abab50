#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "xumx/dsp.hpp"
#include "xumx/losses.hpp"

namespace xumx {

/// The three ablation switches.
struct VariantConfig {
  bool use_mdl = true;
  bool use_cl = true;
  bool use_bridging = true;

  /// C1..C7 or P for the eight switch settings.
  std::string name() const;
  /// Throws ConfigError on an unknown name.
  static VariantConfig from_name(std::string_view name);
  /// Canonical order: C1, C2, ..., C7, P.
  static const std::vector<std::string>& names();

  bool operator==(const VariantConfig&) const = default;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// L2 penalty added to the gradient.
  double weight_decay = 1e-5;

  bool operator==(const AdamConfig&) const = default;
};

struct TrainConfig {
  VariantConfig variant;
  double alpha = kDefaultAlpha;
  AdamConfig optimizer;
  int epochs = 200;
  std::size_t batch_size = 8;
  std::size_t batches_per_epoch = 8;
  double excerpt_seconds = 1.0;
  /// Reduce-on-plateau patience and factor.
  int plateau_patience = 8;
  double lr_decay = 0.3;
  int early_stop_patience = 14;
  /// Global gradient-norm clip; 0 disables it.
  double max_grad_norm = 0.0;
  std::size_t hidden_size = 32;
  std::size_t recurrent_layers = 1;
  StftConfig stft = StftConfig::desk();
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

}  // namespace xumx
