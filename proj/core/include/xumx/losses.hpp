#pragma once

// Training objectives: spectral MSE, time-domain weighted SDR, their
// multi-domain sum, and the combination loss over source subsets.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "xumx/dsp.hpp"
#include "xumx/tensor.hpp"

namespace xumx {

/// Default time-domain weight of the multi-domain loss.
inline constexpr double kDefaultAlpha = 10.0;

/// A nonempty proper subset of source indices (0-based, ascending).
struct Combination {
  std::vector<std::size_t> sources;
  bool operator==(const Combination&) const = default;
};

/// All nonempty proper subsets of {0..J-1}, ordered by size and then
/// lexicographically. There are 2^J - 2 of them.
std::vector<Combination> enumerate_combinations(std::size_t sources);

/// sum_{t,f} (|X| - |X_hat|)^2 for one target.
Var mse_loss(const Var& est_mag, const Var& ref_mag);

/// Weighted SDR loss in [-1, 1]:
///   -rho cos(ref, est) - (1 - rho) cos(mix - ref, mix - est),
///   rho = |ref|^2 / (|ref|^2 + |mix - ref|^2).
/// rho is computed from values and treated as a constant. A silent reference
/// gives rho = 0 and drops the first term; ref == mix gives rho = 1 and drops
/// the second.
Var wsdr_loss(const Var& est, const Var& ref, const Var& mix);
double wsdr_loss(std::span<const double> est, std::span<const double> ref,
                 std::span<const double> mix);

/// mse_loss + alpha * wsdr_loss
Var mdl(const Var& est_mag, const Var& ref_mag, const Var& est_wave, const Var& ref_wave,
        const Var& mix_wave, double alpha);

struct LossOptions {
  double alpha = kDefaultAlpha;
  /// When false every term is the spectral MSE alone (no ISTFT is built).
  bool use_mdl = true;
  StftConfig stft = StftConfig::desk();
};

struct CombinationTerm {
  Combination combination;
  double mse = 0.0;
  std::optional<double> wsdr;
  /// mse + alpha * wsdr, or mse alone without the time-domain term.
  double mdl = 0.0;
};

struct LossReport {
  Var total;
  std::vector<CombinationTerm> terms;
  double alpha = kDefaultAlpha;
};

/// Average over every combination S of the (multi-domain) loss between the
/// estimate from mask sum_{j in S} M_j applied to Y and the reference
/// sum_{j in S} x_j. `masks` are [T, F]; `y_spec` is the mixture STFT
/// [T, F, 2]; refs and mix share one length.
LossReport combination_loss(std::span<const Var> masks, const Var& y_spec,
                            std::span<const Waveform> refs, const Waveform& mix,
                            const LossOptions& opts);

/// Mean over single sources only (the joint-training baseline).
LossReport plain_loss(std::span<const Var> masks, const Var& y_spec,
                      std::span<const Waveform> refs, const Waveform& mix,
                      const LossOptions& opts);

}  // namespace xumx
