#include "xumx/dsp.hpp"

#include <cmath>
#include <memory>
#include <numbers>

#include "xumx/error.hpp"

namespace xumx {

void StftConfig::validate() const {
  if (fft_size < 4 || (fft_size & (fft_size - 1)) != 0) {
    throw ConfigError("stft: fft_size must be a power of two >= 4, got " +
                      std::to_string(fft_size));
  }
  if (hop_size == 0 || fft_size % hop_size != 0 || hop_size > fft_size / 2) {
    throw ConfigError("stft: hop_size " + std::to_string(hop_size) +
                      " must divide fft_size " + std::to_string(fft_size) +
                      " and be at most fft_size/2");
  }
}

std::size_t StftConfig::frame_count(std::size_t length) const {
  if (length == 0) throw ShapeError("stft: empty waveform");
  if (center) return 1 + length / hop_size;
  if (length < fft_size) {
    throw ShapeError("stft: waveform of " + std::to_string(length) +
                     " samples is shorter than one frame (" + std::to_string(fft_size) +
                     ")");
  }
  return 1 + (length - fft_size) / hop_size;
}

std::size_t StftConfig::natural_length(std::size_t frames) const {
  if (frames == 0) return 0;
  return center ? (frames - 1) * hop_size : (frames - 1) * hop_size + fft_size;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

FftPlan::FftPlan(std::size_t n) : n_(n), bitrev_(n), twiddles_(n / 2) {
  if (n == 0 || (n & (n - 1)) != 0) {
    throw ConfigError("FftPlan: size must be a power of two, got " + std::to_string(n));
  }
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
    bitrev_[i] = r;
  }
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(n);
    twiddles_[k] = {std::cos(angle), std::sin(angle)};
  }
}

void FftPlan::forward(std::span<std::complex<double>> data) const { transform(data, false); }
void FftPlan::inverse(std::span<std::complex<double>> data) const { transform(data, true); }

void FftPlan::transform(std::span<std::complex<double>> data, bool inverse) const {
  if (data.size() != n_) throw ShapeError("FftPlan: buffer size mismatch");
  for (std::size_t i = 0; i < n_; ++i) {
    if (i < bitrev_[i]) std::swap(data[i], data[bitrev_[i]]);
  }
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        // Written out by hand: std::complex operator* carries NaN recovery
        // code that dominates the transform.
        const double wr = twiddles_[k * stride].real();
        const double wi = inverse ? -twiddles_[k * stride].imag() : twiddles_[k * stride].imag();
        const std::complex<double> a = data[start + k];
        const std::complex<double> x = data[start + k + half];
        const std::complex<double> b{x.real() * wr - x.imag() * wi, x.real() * wi + x.imag() * wr};
        data[start + k] = a + b;
        data[start + k + half] = a - b;
      }
    }
  }
}

bool Waveform::all_finite() const {
  for (double v : samples)
    if (!std::isfinite(v)) return false;
  return true;
}

double Waveform::energy() const {
  double e = 0.0;
  for (double v : samples) e += v * v;
  return e;
}

void Mask::validate() const {
  for (double v : data.values()) {
    if (!std::isfinite(v) || v < 0.0) {
      throw NumericError("mask entries must be finite and nonnegative");
    }
  }
}

std::vector<double> downmix(std::span<const double> interleaved, std::size_t channels) {
  if (channels == 0) throw ShapeError("downmix: zero channels");
  if (interleaved.size() % channels != 0) {
    throw ShapeError("downmix: sample count is not a multiple of the channel count");
  }
  const std::size_t frames = interleaved.size() / channels;
  std::vector<double> mono(frames, 0.0);
  const double inv = 1.0 / static_cast<double>(channels);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) acc += interleaved[i * channels + c];
    mono[i] = acc * inv;
  }
  return mono;
}

namespace {

// Shared kernels. Frame t covers samples [t*hop - offset, t*hop - offset + N).
struct Framing {
  StftConfig cfg;
  std::vector<double> window;
  FftPlan plan;
  std::ptrdiff_t offset;

  explicit Framing(const StftConfig& c)
      : cfg(c),
        window(hann_window(c.fft_size)),
        plan(c.fft_size),
        offset(c.center ? static_cast<std::ptrdiff_t>(c.fft_size / 2) : 0) {}

  std::ptrdiff_t start(std::size_t t) const {
    return static_cast<std::ptrdiff_t>(t * cfg.hop_size) - offset;
  }
};

// signal[L] -> spec[T,F,2]
// Two real length-n sequences share one complex FFT: a goes in the real
// part, b in the imaginary part, and the spectra are separated afterwards
// using the conjugate symmetry of real-input transforms.
void forward_real_pair(const FftPlan& plan, std::vector<std::complex<double>>& buf,
                       std::complex<double>* spec_a, std::complex<double>* spec_b) {
  plan.forward(buf);
  const std::size_t n = buf.size();
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const std::complex<double> z = buf[k], zc = std::conj(buf[(n - k) % n]);
    spec_a[k] = 0.5 * (z + zc);
    const std::complex<double> d = z - zc;
    spec_b[k] = {0.5 * d.imag(), -0.5 * d.real()};
  }
}

// Inverse of two Hermitian spectra given by their bins 0..n/2 (imaginary
// parts of DC and Nyquist ignored); a ends up in the real part of buf, b in
// the imaginary part. Unnormalised.
void inverse_hermitian_pair(const FftPlan& plan, std::vector<std::complex<double>>& buf,
                            const std::complex<double>* spec_a,
                            const std::complex<double>* spec_b) {
  const std::size_t n = buf.size();
  buf[0] = {spec_a[0].real(), spec_b[0].real()};
  buf[n / 2] = {spec_a[n / 2].real(), spec_b[n / 2].real()};
  for (std::size_t k = 1; k < n / 2; ++k) {
    const std::complex<double> a = spec_a[k], b = spec_b[k];
    buf[k] = {a.real() - b.imag(), a.imag() + b.real()};
    buf[n - k] = {a.real() + b.imag(), b.real() - a.imag()};
  }
  plan.inverse(buf);
}

Tensor stft_kernel(std::span<const double> x, const Framing& fr) {
  const std::size_t n = fr.cfg.fft_size, bins = fr.cfg.bins();
  const std::size_t frames = fr.cfg.frame_count(x.size());
  const auto len = static_cast<std::ptrdiff_t>(x.size());
  Tensor out(Shape{frames, bins, 2});
  std::vector<std::complex<double>> buf(n);
  std::vector<std::complex<double>> spec(2 * bins);
  auto sample = [&](std::size_t t, std::size_t i) {
    const std::ptrdiff_t j = fr.start(t) + static_cast<std::ptrdiff_t>(i);
    return (t < frames && j >= 0 && j < len) ? fr.window[i] * x[static_cast<std::size_t>(j)] : 0.0;
  };
  for (std::size_t t = 0; t < frames; t += 2) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = {sample(t, i), sample(t + 1, i)};
    forward_real_pair(fr.plan, buf, spec.data(), spec.data() + bins);
    for (std::size_t p = 0; p < 2 && t + p < frames; ++p) {
      double* row = out.data() + (t + p) * bins * 2;
      const std::complex<double>* z = spec.data() + p * bins;
      for (std::size_t k = 0; k < bins; ++k) {
        row[2 * k] = z[k].real();
        row[2 * k + 1] = z[k].imag();
      }
    }
  }
  return out;
}

// Adjoint of stft_kernel: grad spec[T,F,2] -> grad signal[L] (accumulated).
// Per frame this is the window times the real part of the inverse transform
// of the half spectrum, which is the inverse transform of its Hermitian part.
void stft_adjoint(const Tensor& grad, std::span<double> gx, const Framing& fr) {
  const std::size_t n = fr.cfg.fft_size, bins = fr.cfg.bins();
  const std::size_t frames = grad.dim(0);
  const auto len = static_cast<std::ptrdiff_t>(gx.size());
  std::vector<std::complex<double>> buf(n);
  std::vector<std::complex<double>> spec(2 * bins);
  for (std::size_t t = 0; t < frames; t += 2) {
    for (std::size_t p = 0; p < 2; ++p) {
      std::complex<double>* h = spec.data() + p * bins;
      if (t + p >= frames) {
        std::fill(h, h + bins, 0.0);
        continue;
      }
      const double* row = grad.data() + (t + p) * bins * 2;
      for (std::size_t k = 0; k < bins; ++k) {
        const double scale = (k == 0 || k == n / 2) ? 1.0 : 0.5;
        h[k] = {scale * row[2 * k], scale * row[2 * k + 1]};
      }
    }
    inverse_hermitian_pair(fr.plan, buf, spec.data(), spec.data() + bins);
    for (std::size_t p = 0; p < 2 && t + p < frames; ++p) {
      const std::ptrdiff_t s = fr.start(t + p);
      for (std::size_t i = 0; i < n; ++i) {
        const std::ptrdiff_t j = s + static_cast<std::ptrdiff_t>(i);
        const double v = p == 0 ? buf[i].real() : buf[i].imag();
        if (j >= 0 && j < len) gx[static_cast<std::size_t>(j)] += fr.window[i] * v;
      }
    }
  }
}

std::vector<double> window_power(std::size_t frames, std::size_t out_len,
                                 const Framing& fr) {
  std::vector<double> wsum(out_len, 0.0);
  const auto len = static_cast<std::ptrdiff_t>(out_len);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::ptrdiff_t s = fr.start(t);
    for (std::size_t i = 0; i < fr.cfg.fft_size; ++i) {
      const std::ptrdiff_t j = s + static_cast<std::ptrdiff_t>(i);
      if (j >= 0 && j < len) wsum[static_cast<std::size_t>(j)] += fr.window[i] * fr.window[i];
    }
  }
  // Samples with (numerically) no window support are left at zero.
  for (double& w : wsum) w = w > 1e-10 ? 1.0 / w : 0.0;
  return wsum;
}

void check_istft_shape(const Tensor& spec, const StftConfig& cfg, std::size_t out_len) {
  if (spec.rank() != 3 || spec.dim(2) != 2 || spec.dim(1) != cfg.bins()) {
    throw ShapeError("istft: spectrum of shape " + to_string(spec.shape()) +
                     " does not match fft_size " + std::to_string(cfg.fft_size));
  }
  const std::size_t natural = cfg.natural_length(spec.dim(0));
  const std::size_t diff = natural > out_len ? natural - out_len : out_len - natural;
  if (spec.dim(0) == 0 || diff > cfg.hop_size) {
    throw ShapeError("istft: out_len " + std::to_string(out_len) +
                     " is inconsistent with " + std::to_string(spec.dim(0)) +
                     " frames (natural length " + std::to_string(natural) + ")");
  }
}

// spec[T,F,2] -> signal[out_len]
std::vector<double> istft_kernel(const Tensor& spec, std::size_t out_len,
                                 const std::vector<double>& inv_wsum, const Framing& fr) {
  const std::size_t n = fr.cfg.fft_size, bins = fr.cfg.bins();
  const std::size_t frames = spec.dim(0);
  const auto len = static_cast<std::ptrdiff_t>(out_len);
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> out(out_len, 0.0);
  std::vector<std::complex<double>> buf(n);
  std::vector<std::complex<double>> half(2 * bins);
  for (std::size_t t = 0; t < frames; t += 2) {
    for (std::size_t p = 0; p < 2; ++p) {
      std::complex<double>* h = half.data() + p * bins;
      if (t + p >= frames) {
        std::fill(h, h + bins, 0.0);
        continue;
      }
      const double* row = spec.data() + (t + p) * bins * 2;
      for (std::size_t k = 0; k < bins; ++k) h[k] = {row[2 * k], row[2 * k + 1]};
    }
    inverse_hermitian_pair(fr.plan, buf, half.data(), half.data() + bins);
    for (std::size_t p = 0; p < 2 && t + p < frames; ++p) {
      const std::ptrdiff_t s = fr.start(t + p);
      for (std::size_t i = 0; i < n; ++i) {
        const std::ptrdiff_t j = s + static_cast<std::ptrdiff_t>(i);
        const double v = p == 0 ? buf[i].real() : buf[i].imag();
        if (j >= 0 && j < len) out[static_cast<std::size_t>(j)] += fr.window[i] * v * inv_n;
      }
    }
  }
  for (std::size_t i = 0; i < out_len; ++i) out[i] *= inv_wsum[i];
  return out;
}

// Adjoint of istft_kernel: grad signal[out_len] -> grad spec[T,F,2].
void istft_adjoint(std::span<const double> g, Tensor& gspec,
                   const std::vector<double>& inv_wsum, const Framing& fr) {
  const std::size_t n = fr.cfg.fft_size, bins = fr.cfg.bins();
  const std::size_t frames = gspec.dim(0);
  const auto len = static_cast<std::ptrdiff_t>(g.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<std::complex<double>> buf(n);
  std::vector<std::complex<double>> spec(2 * bins);
  auto sample = [&](std::size_t t, std::size_t i) {
    const std::ptrdiff_t j = fr.start(t) + static_cast<std::ptrdiff_t>(i);
    if (t >= frames || j < 0 || j >= len) return 0.0;
    return fr.window[i] * g[static_cast<std::size_t>(j)] * inv_wsum[static_cast<std::size_t>(j)];
  };
  for (std::size_t t = 0; t < frames; t += 2) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = {sample(t, i), sample(t + 1, i)};
    forward_real_pair(fr.plan, buf, spec.data(), spec.data() + bins);
    for (std::size_t p = 0; p < 2 && t + p < frames; ++p) {
      double* row = gspec.data() + (t + p) * bins * 2;
      const std::complex<double>* z = spec.data() + p * bins;
      for (std::size_t k = 0; k < bins; ++k) {
        const double weight = (k == 0 || k == n / 2) ? inv_n : 2.0 * inv_n;
        row[2 * k] += weight * z[k].real();
        // The imaginary parts of DC and Nyquist do not reach the output.
        if (k != 0 && k != n / 2) row[2 * k + 1] += weight * z[k].imag();
      }
    }
  }
}

void check_mask_shape(const Tensor& mask, const Tensor& spec) {
  if (mask.rank() != 2 || spec.rank() != 3 || spec.dim(2) != 2 ||
      mask.dim(0) != spec.dim(0) || mask.dim(1) != spec.dim(1)) {
    throw ShapeError("apply_mask: mask " + to_string(mask.shape()) +
                     " does not match spectrum " + to_string(spec.shape()));
  }
}

Tensor mask_kernel(const Tensor& mask, const Tensor& spec) {
  check_mask_shape(mask, spec);
  Tensor out = spec;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    out[2 * i] *= mask[i];
    out[2 * i + 1] *= mask[i];
  }
  return out;
}

Tensor magnitude_kernel(const Tensor& spec) {
  if (spec.rank() != 3 || spec.dim(2) != 2) {
    throw ShapeError("magnitude: expected [T,F,2], got " + to_string(spec.shape()));
  }
  Tensor out(Shape{spec.dim(0), spec.dim(1)});
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::hypot(spec[2 * i], spec[2 * i + 1]);
  }
  return out;
}

}  // namespace

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  cfg.validate();
  Framing fr(cfg);
  return ComplexSpectrogram{stft_kernel(w.samples, fr), cfg, w.sample_rate};
}

Waveform istft(const ComplexSpectrogram& s, const StftConfig& cfg, std::size_t out_len) {
  cfg.validate();
  check_istft_shape(s.data, cfg, out_len);
  Framing fr(cfg);
  auto inv_wsum = window_power(s.frames(), out_len, fr);
  return Waveform{istft_kernel(s.data, out_len, inv_wsum, fr), s.sample_rate};
}

ComplexSpectrogram apply_mask(const Mask& m, const ComplexSpectrogram& y_spec) {
  return ComplexSpectrogram{mask_kernel(m.data, y_spec.data), y_spec.config,
                            y_spec.sample_rate};
}

MagnitudeSpectrogram magnitude(const ComplexSpectrogram& s) {
  return MagnitudeSpectrogram{magnitude_kernel(s.data)};
}

Var stft(const Var& signal, const StftConfig& cfg) {
  cfg.validate();
  require_rank(signal.value(), 1, "stft");
  auto fr = std::make_shared<Framing>(cfg);
  Tensor out = stft_kernel(signal.value().values(), *fr);
  return signal.tape()->record(std::move(out), {signal}, [fr](const BackwardArgs& args) {
    if (Tensor* g = args.input_grads[0]) stft_adjoint(args.grad, g->values(), *fr);
  });
}

Var istft(const Var& spec, const StftConfig& cfg, std::size_t out_len) {
  cfg.validate();
  check_istft_shape(spec.value(), cfg, out_len);
  auto fr = std::make_shared<Framing>(cfg);
  auto inv_wsum =
      std::make_shared<std::vector<double>>(window_power(spec.value().dim(0), out_len, *fr));
  Tensor out = Tensor::vector(istft_kernel(spec.value(), out_len, *inv_wsum, *fr));
  return spec.tape()->record(std::move(out), {spec}, [fr, inv_wsum](const BackwardArgs& args) {
    if (Tensor* g = args.input_grads[0]) istft_adjoint(args.grad.values(), *g, *inv_wsum, *fr);
  });
}

Var apply_mask(const Var& mask, const Var& spec) {
  if (mask.tape() != spec.tape()) throw Error("apply_mask: inputs live on different tapes");
  Tensor out = mask_kernel(mask.value(), spec.value());
  return mask.tape()->record(std::move(out), {mask, spec}, [](const BackwardArgs& args) {
    const Tensor& m = *args.inputs[0];
    const Tensor& s = *args.inputs[1];
    const Tensor& g = args.grad;
    if (Tensor* gm = args.input_grads[0]) {
      for (std::size_t i = 0; i < m.size(); ++i)
        (*gm)[i] += g[2 * i] * s[2 * i] + g[2 * i + 1] * s[2 * i + 1];
    }
    if (Tensor* gs = args.input_grads[1]) {
      for (std::size_t i = 0; i < m.size(); ++i) {
        (*gs)[2 * i] += g[2 * i] * m[i];
        (*gs)[2 * i + 1] += g[2 * i + 1] * m[i];
      }
    }
  });
}

Var magnitude(const Var& spec) {
  Tensor out = magnitude_kernel(spec.value());
  return spec.tape()->record(std::move(out), {spec}, [](const BackwardArgs& args) {
    Tensor* gs = args.input_grads[0];
    if (!gs) return;
    const Tensor& s = *args.inputs[0];
    for (std::size_t i = 0; i < args.output.size(); ++i) {
      const double m = args.output[i];
      if (m == 0.0) continue;
      (*gs)[2 * i] += args.grad[i] * s[2 * i] / m;
      (*gs)[2 * i + 1] += args.grad[i] * s[2 * i + 1] / m;
    }
  });
}

}  // namespace xumx
