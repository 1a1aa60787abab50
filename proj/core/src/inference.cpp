#include "xumx/inference.hpp"

#include <algorithm>
#include <cmath>

#include "xumx/data.hpp"
#include "xumx/error.hpp"
#include "xumx/model.hpp"

namespace xumx {

namespace {

std::size_t seconds_to_frames(double seconds, const Checkpoint& ckpt) {
  return static_cast<std::size_t>(
      std::llround(seconds * ckpt.sample_rate / static_cast<double>(ckpt.stft.hop_size)));
}

}  // namespace

std::vector<Mask> chunked_masks(const Checkpoint& ckpt, const MagnitudeSpectrogram& y_mag,
                                const SeparateOptions& opts) {
  if (!(opts.chunk_seconds > 0.0) || !(opts.crossfade_seconds >= 0.0))
    throw ConfigError("separate: chunk and crossfade lengths must be positive");
  const std::size_t T = y_mag.frames(), F = y_mag.bins();
  const std::size_t chunk = std::max<std::size_t>(seconds_to_frames(opts.chunk_seconds, ckpt), 1);
  const std::size_t fade = std::min(seconds_to_frames(opts.crossfade_seconds, ckpt), chunk / 2);
  const std::size_t step = chunk - fade;

  std::vector<Mask> out(ckpt.net.sources, Mask{Tensor(Shape{T, F})});
  std::vector<double> weight_sum(T, 0.0);
  for (std::size_t start = 0;; start += step) {
    const std::size_t end = std::min(start + chunk, T);
    const bool first = start == 0, last = end == T;
    Tensor part(Shape{end - start, F});
    std::copy(y_mag.data.values().begin() + static_cast<std::ptrdiff_t>(start * F),
              y_mag.data.values().begin() + static_cast<std::ptrdiff_t>(end * F),
              part.values().begin());
    const auto masks = predict_masks(ckpt.params, ckpt.net, ckpt.stats, MagnitudeSpectrogram{part});
    for (std::size_t t = start; t < end; ++t) {
      double w = 1.0;
      const std::size_t in = t - start, left = end - 1 - t;
      if (!first && in < fade) w = (static_cast<double>(in) + 0.5) / static_cast<double>(fade);
      if (!last && left < fade) w = (static_cast<double>(left) + 0.5) / static_cast<double>(fade);
      weight_sum[t] += w;
      for (std::size_t j = 0; j < masks.size(); ++j)
        for (std::size_t f = 0; f < F; ++f) out[j].data.at(t, f) += w * masks[j].data.at(t - start, f);
    }
    if (last) break;
  }
  for (auto& m : out)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t f = 0; f < F; ++f) m.data.at(t, f) /= weight_sum[t];
  return out;
}

SeparationResult apply_masks(const Waveform& mixture, const ComplexSpectrogram& y,
                             std::span<const Mask> masks, const std::vector<std::string>& names) {
  if (names.size() != masks.size()) throw ShapeError("separate: names do not match masks");
  SeparationResult result;
  result.source_names = names;
  std::vector<double> residual = mixture.samples;
  for (const Mask& m : masks) {
    Waveform stem = istft(apply_mask(m, y), y.config, mixture.size());
    stem.sample_rate = mixture.sample_rate;
    if (!stem.all_finite()) throw NumericError("separate: non-finite output");
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= stem.samples[i];
    result.stems.push_back(std::move(stem));
  }
  const double e = mixture.energy();
  double r = 0.0;
  for (double v : residual) r += v * v;
  result.residual_ratio = e > 0.0 ? r / e : 0.0;
  return result;
}

SeparationResult separate(const Checkpoint& ckpt, const Waveform& mixture,
                          const SeparateOptions& opts) {
  if (mixture.empty()) throw ConfigError("separate: empty mixture");
  if (mixture.sample_rate != ckpt.sample_rate) {
    throw ConfigError("separate: input is " + std::to_string(mixture.sample_rate) +
                      " Hz but the model expects " + std::to_string(ckpt.sample_rate) + " Hz");
  }
  if (!mixture.all_finite()) throw NumericError("separate: non-finite input");
  const ComplexSpectrogram y = stft(mixture, ckpt.stft);
  const auto masks = chunked_masks(ckpt, magnitude(y), opts);
  return apply_masks(mixture, y, masks, ckpt.source_names);
}

void write_stems(const SeparationResult& result, const std::filesystem::path& outdir,
                 const std::string& track) {
  const auto dir = outdir / track;
  std::filesystem::create_directories(dir);
  for (std::size_t j = 0; j < result.stems.size(); ++j)
    save_wav(dir / (result.source_names[j] + ".wav"), result.stems[j], SampleFormat::Float32);
}

}  // namespace xumx
