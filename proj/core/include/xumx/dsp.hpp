#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "xumx/tensor.hpp"

namespace xumx {

/// Hann-windowed STFT parameters. The synthesis side uses the same window
/// with overlap-add normalised by the summed squared window, so any valid
/// config reconstructs exactly.
struct StftConfig {
  std::size_t fft_size = 4096;
  std::size_t hop_size = 1024;
  /// Pad fft_size/2 zeros on both ends so frame t is centred on sample t*hop.
  bool center = true;

  /// Fast configuration used by the synthetic desk-scale experiments.
  static StftConfig desk() { return {512, 128, true}; }

  std::size_t bins() const { return fft_size / 2 + 1; }
  /// Throws ConfigError unless fft_size is a power of two (>= 4), hop divides
  /// fft_size, and hop <= fft_size / 2.
  void validate() const;
  /// Number of frames produced for a signal of `length` samples.
  std::size_t frame_count(std::size_t length) const;
  /// Signal length implied by `frames` frames (before trimming).
  std::size_t natural_length(std::size_t frames) const;

  bool operator==(const StftConfig&) const = default;
};

/// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

/// In-place radix-2 complex FFT with cached twiddles.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);
  std::size_t size() const { return n_; }
  void forward(std::span<std::complex<double>> data) const;
  /// Unnormalised inverse (no 1/n factor).
  void inverse(std::span<std::complex<double>> data) const;

 private:
  void transform(std::span<std::complex<double>> data, bool inverse) const;
  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::complex<double>> twiddles_;
};

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 44100;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  bool all_finite() const;
  double energy() const;
};

/// T x F bins, stored as a [T, F, 2] tensor of (real, imag) pairs.
struct ComplexSpectrogram {
  Tensor data;
  StftConfig config;
  int sample_rate = 44100;

  std::size_t frames() const { return data.dim(0); }
  std::size_t bins() const { return data.dim(1); }
  double re(std::size_t t, std::size_t f) const { return data[(t * bins() + f) * 2]; }
  double im(std::size_t t, std::size_t f) const { return data[(t * bins() + f) * 2 + 1]; }
};

/// T x F magnitudes as a [T, F] tensor.
struct MagnitudeSpectrogram {
  Tensor data;
  std::size_t frames() const { return data.dim(0); }
  std::size_t bins() const { return data.dim(1); }
};

/// Nonnegative T x F gains as a [T, F] tensor.
struct Mask {
  Tensor data;
  std::size_t frames() const { return data.dim(0); }
  std::size_t bins() const { return data.dim(1); }
  /// Throws NumericError on negative or non-finite entries.
  void validate() const;
};

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg);
/// Overlap-add inverse. `out_len` may differ from the natural length implied
/// by the frame count by at most one hop.
Waveform istft(const ComplexSpectrogram& s, const StftConfig& cfg, std::size_t out_len);
ComplexSpectrogram apply_mask(const Mask& m, const ComplexSpectrogram& y_spec);
MagnitudeSpectrogram magnitude(const ComplexSpectrogram& s);

// Differentiable counterparts. Signals are rank-1 [L], spectra [T, F, 2],
// masks and magnitudes [T, F].

Var stft(const Var& signal, const StftConfig& cfg);
Var istft(const Var& spec, const StftConfig& cfg, std::size_t out_len);
Var apply_mask(const Var& mask, const Var& spec);
/// sqrt(re^2 + im^2); the gradient at an exact zero is taken as 0.
Var magnitude(const Var& spec);

/// Averages interleaved channels down to mono.
std::vector<double> downmix(std::span<const double> interleaved, std::size_t channels);

}  // namespace xumx
