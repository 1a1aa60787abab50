#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xumx/dsp.hpp"
#include "xumx/random.hpp"

namespace xumx {

// ---------------------------------------------------------------------------
// WAV I/O

enum class SampleFormat { Pcm16, Float32 };

/// Reads RIFF/WAVE PCM16 or IEEE float32 (plain or WAVE_FORMAT_EXTENSIBLE).
/// Multichannel input is averaged down to mono. Throws WavError with the
/// failing byte offset.
Waveform load_wav(const std::filesystem::path& path);
Waveform parse_wav(std::span<const std::uint8_t> bytes);

void save_wav(const std::filesystem::path& path, const Waveform& w,
              SampleFormat format = SampleFormat::Float32);
std::vector<std::uint8_t> encode_wav(const Waveform& w, SampleFormat format);

// ---------------------------------------------------------------------------
// Tracks

std::vector<std::string> default_source_names(std::size_t sources = 4);

struct Track {
  std::string name;
  Waveform mixture;
  std::vector<std::string> source_names;
  std::vector<Waveform> stems;
  /// Problems tolerated at load time, e.g. a mixture that is not the stem sum.
  std::vector<std::string> warnings;

  std::size_t length() const { return mixture.size(); }
  /// max_i |mixture[i] - sum_j stems[j][i]|
  double mixture_error() const;
  /// Throws DatasetError on stem count, length or sample-rate inconsistencies.
  void validate() const;
};

struct DatasetSplit {
  std::vector<Track> train;
  std::vector<Track> valid;
  std::vector<Track> test;
};

/// Seeded disjoint split; each part keeps the input order.
DatasetSplit split_tracks(std::vector<Track> tracks, std::size_t valid_count,
                          std::size_t test_count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic band-separated multitrack data

struct SynthSpec {
  std::size_t num_tracks = 20;
  double duration_s = 10.0;
  int sample_rate = 8000;
  std::size_t sources = 4;
  std::uint64_t seed = 0;
};

struct FrequencyBand {
  double low_hz;
  double high_hz;
};

/// Contiguous bands partitioning [0, Nyquist]; source j's content lies in
/// the interior of band j.
std::vector<FrequencyBand> synth_bands(std::size_t sources, int sample_rate);

/// Each stem is band-limited noise plus a harmonic tone, both confined to
/// the stem's band and shaped by slow random amplitude envelopes. The
/// mixture is the exact sample sum. Deterministic in `spec.seed`.
std::vector<Track> synth_dataset(const SynthSpec& spec);

/// Binary masks selecting the STFT bins whose centre frequency falls in
/// each band (the masks partition unity).
std::vector<Mask> band_masks(std::span<const FrequencyBand> bands, const StftConfig& cfg,
                             int sample_rate, std::size_t frames);

/// Ideal band-pass separation of a mixture: istft(band mask o stft(mixture)).
std::vector<Waveform> band_oracle_separation(const Waveform& mixture,
                                             std::span<const FrequencyBand> bands,
                                             const StftConfig& cfg);

// ---------------------------------------------------------------------------
// MUSDB18-style folders: <root>/<track>/{mixture,<source>...}.wav

inline constexpr double kMusdbMixtureTolerance = 1e-3;

std::vector<Track> load_musdb_layout(const std::filesystem::path& root,
                                     const std::vector<std::string>& source_names =
                                         default_source_names());

// ---------------------------------------------------------------------------
// Excerpt sampling

struct Excerpt {
  std::size_t track = 0;
  std::size_t offset = 0;
  Waveform mixture;
  std::vector<Waveform> stems;
};

/// Draws uniformly random (track, offset) excerpts aligned across mixture and
/// stems. The draw sequence is fixed by the seed.
class ExcerptSampler {
 public:
  ExcerptSampler(const std::vector<Track>& tracks, std::size_t excerpt_len,
                 std::uint64_t seed);
  Excerpt next();
  std::vector<Excerpt> next_batch(std::size_t batch);

 private:
  const std::vector<Track>* tracks_;
  std::size_t excerpt_len_;
  Rng rng_;
};

std::vector<std::vector<Excerpt>> sample_excerpts(const std::vector<Track>& tracks,
                                                  std::size_t excerpt_len,
                                                  std::size_t batch,
                                                  std::size_t num_batches,
                                                  std::uint64_t seed);

}  // namespace xumx
