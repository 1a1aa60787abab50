#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xumx/checkpoint.hpp"
#include "xumx/dsp.hpp"

namespace xumx {

struct SeparationResult {
  std::vector<std::string> source_names;
  std::vector<Waveform> stems;
  /// |mixture - sum of stems|^2 / |mixture|^2. Masks need not sum to one,
  /// so this is a diagnostic rather than an invariant.
  double residual_ratio = 0.0;
};

struct SeparateOptions {
  double chunk_seconds = 30.0;
  double crossfade_seconds = 1.0;
};

/// Mask prediction over the whole spectrogram in overlapping chunks. Each
/// chunk starts from a fresh recurrent state; overlaps are linearly
/// crossfaded.
std::vector<Mask> chunked_masks(const Checkpoint& ckpt, const MagnitudeSpectrogram& y_mag,
                                const SeparateOptions& opts = {});

/// x_j = istft(M_j o stft(mixture)), trimmed to the mixture length.
SeparationResult apply_masks(const Waveform& mixture, const ComplexSpectrogram& y,
                             std::span<const Mask> masks, const std::vector<std::string>& names);

/// Throws ConfigError on a sample-rate mismatch, NumericError on
/// non-finite output.
SeparationResult separate(const Checkpoint& ckpt, const Waveform& mixture,
                          const SeparateOptions& opts = {});

/// Writes <outdir>/<track>/<source>.wav as float32.
void write_stems(const SeparationResult& result, const std::filesystem::path& outdir,
                 const std::string& track);

}  // namespace xumx
