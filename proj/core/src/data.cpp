#include "xumx/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "xumx/error.hpp"

namespace xumx {

std::vector<std::string> default_source_names(std::size_t sources) {
  if (sources == 4) return {"bass", "drums", "other", "vocals"};
  std::vector<std::string> names;
  for (std::size_t j = 0; j < sources; ++j) names.push_back("source" + std::to_string(j));
  return names;
}

double Track::mixture_error() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < mixture.size(); ++i) {
    double s = 0.0;
    for (const auto& stem : stems) s += stem.samples[i];
    worst = std::max(worst, std::abs(mixture.samples[i] - s));
  }
  return worst;
}

void Track::validate() const {
  if (stems.size() < 2) throw DatasetError(name + ": fewer than 2 stems");
  if (!source_names.empty() && source_names.size() != stems.size()) {
    throw DatasetError(name + ": stem names do not match stem count");
  }
  for (std::size_t j = 0; j < stems.size(); ++j) {
    if (stems[j].size() != mixture.size()) {
      throw DatasetError(name + ": stem " + std::to_string(j) + " has " +
                         std::to_string(stems[j].size()) + " samples, mixture has " +
                         std::to_string(mixture.size()));
    }
    if (stems[j].sample_rate != mixture.sample_rate) {
      throw DatasetError(name + ": stem " + std::to_string(j) + " sample rate differs");
    }
  }
}

DatasetSplit split_tracks(std::vector<Track> tracks, std::size_t valid_count,
                          std::size_t test_count, std::uint64_t seed) {
  if (valid_count + test_count >= tracks.size()) {
    throw DatasetError("split: " + std::to_string(tracks.size()) + " tracks cannot fill " +
                       std::to_string(valid_count) + " valid + " +
                       std::to_string(test_count) + " test and leave training data");
  }
  std::vector<std::size_t> order(tracks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[uniform_index(rng, i)]);
  }
  std::vector<int> role(tracks.size(), 0);  // 0 train, 1 valid, 2 test
  for (std::size_t i = 0; i < test_count; ++i) role[order[i]] = 2;
  for (std::size_t i = test_count; i < test_count + valid_count; ++i) role[order[i]] = 1;
  DatasetSplit split;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    auto& dst = role[i] == 0 ? split.train : role[i] == 1 ? split.valid : split.test;
    dst.push_back(std::move(tracks[i]));
  }
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

constexpr double kContentLow = 0.02;   // fraction of the sample rate
constexpr double kContentHigh = 0.45;

struct ContentRange {
  double low;
  double high;
};

ContentRange content_range(std::size_t j, std::size_t sources, int sample_rate) {
  const double lo = kContentLow * sample_rate, hi = kContentHigh * sample_rate;
  const double width = (hi - lo) / static_cast<double>(sources);
  return {lo + width * static_cast<double>(j), lo + width * static_cast<double>(j + 1)};
}

std::vector<double> envelope(Rng& rng, std::size_t n, int sample_rate) {
  const double r1 = uniform(rng, 0.1, 0.5), r2 = uniform(rng, 0.5, 1.5);
  const double p1 = uniform(rng, 0.0, 2 * std::numbers::pi);
  const double p2 = uniform(rng, 0.0, 2 * std::numbers::pi);
  std::vector<double> env(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    env[i] = 0.6 + 0.25 * std::sin(2 * std::numbers::pi * r1 * t + p1) +
             0.15 * std::sin(2 * std::numbers::pi * r2 * t + p2);
  }
  return env;
}

// White noise filtered to [low, high] Hz by zeroing STFT bins outside it.
std::vector<double> band_noise(Rng& rng, std::size_t n, int sample_rate, double low,
                               double high) {
  const StftConfig cfg{1024, 256, true};
  Waveform white{std::vector<double>(n), sample_rate};
  for (double& v : white.samples) v = normal(rng);
  ComplexSpectrogram spec = stft(white, cfg);
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(cfg.fft_size);
  for (std::size_t t = 0; t < spec.frames(); ++t)
    for (std::size_t f = 0; f < spec.bins(); ++f) {
      const double hz = static_cast<double>(f) * bin_hz;
      if (hz < low || hz > high) {
        spec.data[(t * spec.bins() + f) * 2] = 0.0;
        spec.data[(t * spec.bins() + f) * 2 + 1] = 0.0;
      }
    }
  return istft(spec, cfg, n).samples;
}

std::vector<double> harmonic_tone(Rng& rng, std::size_t n, int sample_rate, double low,
                                  double high) {
  const double f0 = uniform(rng, low, low + (high - low) / 3.0);
  std::vector<double> out(n, 0.0);
  for (int h = 1; h * f0 <= high; ++h) {
    const double freq = h * f0;
    const double phase = uniform(rng, 0.0, 2 * std::numbers::pi);
    const double amp = 1.0 / h;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] += amp * std::sin(2 * std::numbers::pi * freq * static_cast<double>(i) /
                                   sample_rate +
                               phase);
    }
  }
  return out;
}

void normalize_rms(std::vector<double>& x, double target) {
  double e = 0.0;
  for (double v : x) e += v * v;
  const double rms = std::sqrt(e / static_cast<double>(std::max<std::size_t>(x.size(), 1)));
  if (rms == 0.0) return;
  for (double& v : x) v *= target / rms;
}

}  // namespace

std::vector<FrequencyBand> synth_bands(std::size_t sources, int sample_rate) {
  if (sources < 2 || sources > 8) throw ConfigError("synthetic data: sources must be in [2, 8]");
  std::vector<FrequencyBand> bands;
  for (std::size_t j = 0; j < sources; ++j) {
    const ContentRange c = content_range(j, sources, sample_rate);
    bands.push_back({j == 0 ? 0.0 : c.low, j + 1 == sources ? sample_rate / 2.0 : c.high});
  }
  return bands;
}

std::vector<Track> synth_dataset(const SynthSpec& spec) {
  if (spec.sources < 2 || spec.sources > 8)
    throw ConfigError("synthetic data: sources must be in [2, 8]");
  if (spec.sample_rate <= 0 || spec.duration_s <= 0.0)
    throw ConfigError("synthetic data: sample rate and duration must be positive");
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate));
  const auto names = default_source_names(spec.sources);
  std::vector<Track> tracks;
  for (std::size_t k = 0; k < spec.num_tracks; ++k) {
    Rng rng(derive_seed(spec.seed, k));
    Track track;
    track.name = "synth" + std::to_string(k);
    track.source_names = names;
    track.mixture = Waveform{std::vector<double>(n, 0.0), spec.sample_rate};
    for (std::size_t j = 0; j < spec.sources; ++j) {
      const ContentRange band = content_range(j, spec.sources, spec.sample_rate);
      auto noise = band_noise(rng, n, spec.sample_rate, band.low, band.high);
      auto tone = harmonic_tone(rng, n, spec.sample_rate, band.low, band.high);
      normalize_rms(noise, 1.0);
      normalize_rms(tone, 1.0);
      const auto env_noise = envelope(rng, n, spec.sample_rate);
      const auto env_tone = envelope(rng, n, spec.sample_rate);
      const double mix_weight = uniform(rng, 0.3, 0.7);
      std::vector<double> stem(n);
      for (std::size_t i = 0; i < n; ++i) {
        stem[i] = mix_weight * env_noise[i] * noise[i] + (1.0 - mix_weight) * env_tone[i] * tone[i];
      }
      normalize_rms(stem, uniform(rng, 0.05, 0.12));
      for (std::size_t i = 0; i < n; ++i) track.mixture.samples[i] += stem[i];
      track.stems.push_back(Waveform{std::move(stem), spec.sample_rate});
    }
    tracks.push_back(std::move(track));
  }
  return tracks;
}

std::vector<Mask> band_masks(std::span<const FrequencyBand> bands, const StftConfig& cfg,
                             int sample_rate, std::size_t frames) {
  const std::size_t bins = cfg.bins();
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(cfg.fft_size);
  std::vector<Mask> masks;
  for (std::size_t j = 0; j < bands.size(); ++j) {
    Tensor m(Shape{frames, bins});
    const bool last = j + 1 == bands.size();
    for (std::size_t f = 0; f < bins; ++f) {
      const double hz = static_cast<double>(f) * bin_hz;
      const bool inside = hz >= bands[j].low_hz && (hz < bands[j].high_hz || (last && hz <= bands[j].high_hz));
      if (!inside) continue;
      for (std::size_t t = 0; t < frames; ++t) m.at(t, f) = 1.0;
    }
    masks.push_back(Mask{std::move(m)});
  }
  return masks;
}

std::vector<Waveform> band_oracle_separation(const Waveform& mixture,
                                             std::span<const FrequencyBand> bands,
                                             const StftConfig& cfg) {
  const ComplexSpectrogram y = stft(mixture, cfg);
  std::vector<Waveform> out;
  for (const Mask& m : band_masks(bands, cfg, mixture.sample_rate, y.frames())) {
    out.push_back(istft(apply_mask(m, y), cfg, mixture.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// MUSDB layout

std::vector<Track> load_musdb_layout(const std::filesystem::path& root,
                                     const std::vector<std::string>& source_names) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DatasetError("not a directory: " + root.string());
  std::vector<fs::path> folders;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) folders.push_back(entry.path());
  std::sort(folders.begin(), folders.end());

  std::vector<Track> tracks;
  for (const auto& folder : folders) {
    auto require = [&](const std::string& stem) {
      fs::path p = folder / (stem + ".wav");
      if (!fs::exists(p)) throw DatasetError("missing stem file " + p.string());
      return p;
    };
    Track track;
    track.name = folder.filename().string();
    track.source_names = source_names;
    track.mixture = load_wav(require("mixture"));
    for (const auto& name : source_names) track.stems.push_back(load_wav(require(name)));
    track.validate();
    const double err = track.mixture_error();
    if (err > kMusdbMixtureTolerance) {
      track.warnings.push_back("mixture differs from the stem sum by up to " +
                               std::to_string(err));
    }
    tracks.push_back(std::move(track));
  }
  return tracks;
}

// ---------------------------------------------------------------------------
// Excerpts

ExcerptSampler::ExcerptSampler(const std::vector<Track>& tracks, std::size_t excerpt_len,
                               std::uint64_t seed)
    : tracks_(&tracks), excerpt_len_(excerpt_len), rng_(seed) {
  if (tracks.empty()) throw DatasetError("excerpt sampler: no tracks");
  if (excerpt_len == 0) throw DatasetError("excerpt sampler: zero excerpt length");
  for (const auto& t : tracks) {
    if (t.length() < excerpt_len) {
      throw DatasetError("excerpt of " + std::to_string(excerpt_len) +
                         " samples is longer than track '" + t.name + "' (" +
                         std::to_string(t.length()) + ")");
    }
  }
}

Excerpt ExcerptSampler::next() {
  Excerpt ex;
  ex.track = uniform_index(rng_, tracks_->size());
  const Track& t = (*tracks_)[ex.track];
  ex.offset = uniform_index(rng_, t.length() - excerpt_len_ + 1);
  auto cut = [&](const Waveform& w) {
    const auto b = w.samples.begin() + static_cast<std::ptrdiff_t>(ex.offset);
    return Waveform{std::vector<double>(b, b + static_cast<std::ptrdiff_t>(excerpt_len_)),
                    w.sample_rate};
  };
  ex.mixture = cut(t.mixture);
  for (const auto& s : t.stems) ex.stems.push_back(cut(s));
  return ex;
}

std::vector<Excerpt> ExcerptSampler::next_batch(std::size_t batch) {
  std::vector<Excerpt> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) out.push_back(next());
  return out;
}

std::vector<std::vector<Excerpt>> sample_excerpts(const std::vector<Track>& tracks,
                                                  std::size_t excerpt_len,
                                                  std::size_t batch,
                                                  std::size_t num_batches,
                                                  std::uint64_t seed) {
  ExcerptSampler sampler(tracks, excerpt_len, seed);
  std::vector<std::vector<Excerpt>> out;
  for (std::size_t b = 0; b < num_batches; ++b) out.push_back(sampler.next_batch(batch));
  return out;
}

}  // namespace xumx
