#include "xumx/losses.hpp"

#include "xumx/error.hpp"

namespace xumx {

std::vector<Combination> enumerate_combinations(std::size_t sources) {
  if (sources < 2) throw Error("enumerate_combinations: need at least 2 sources");
  if (sources > 20) throw Error("enumerate_combinations: too many sources");
  std::vector<Combination> out;
  out.reserve((std::size_t{1} << sources) - 2);
  // For each size k, walk k-subsets in lexicographic order.
  for (std::size_t k = 1; k < sources; ++k) {
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    while (true) {
      out.push_back(Combination{idx});
      std::size_t i = k;
      while (i > 0 && idx[i - 1] == sources - k + (i - 1)) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t m = i; m < k; ++m) idx[m] = idx[m - 1] + 1;
    }
  }
  return out;
}

Var mse_loss(const Var& est_mag, const Var& ref_mag) {
  return sum_squared_difference(est_mag, ref_mag);
}

namespace {

struct WsdrWeights {
  double rho;
  bool use_target;
  bool use_residual;
};

WsdrWeights wsdr_weights(std::span<const double> ref, std::span<const double> mix) {
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    target += ref[i] * ref[i];
    const double d = mix[i] - ref[i];
    residual += d * d;
  }
  if (target == 0.0) return {0.0, false, residual != 0.0};
  if (residual == 0.0) return {1.0, true, false};
  return {target / (target + residual), true, true};
}

void check_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string("wsdr_loss: non-finite ") + what);
}

}  // namespace

Var wsdr_loss(const Var& est, const Var& ref, const Var& mix) {
  require_same_shape(est.value(), ref.value(), "wsdr_loss");
  require_same_shape(est.value(), mix.value(), "wsdr_loss");
  check_finite(est.value(), "estimate");
  check_finite(ref.value(), "reference");
  check_finite(mix.value(), "mixture");
  const WsdrWeights w = wsdr_weights(ref.value().values(), mix.value().values());
  Tape& tape = *est.tape();
  Var loss = tape.constant(Tensor::scalar(0.0));
  if (w.use_target) loss = add(loss, scale(cosine_similarity(ref, est), -w.rho));
  if (w.use_residual) {
    loss = add(loss, scale(cosine_similarity(sub(mix, ref), sub(mix, est)), -(1.0 - w.rho)));
  }
  return loss;
}

double wsdr_loss(std::span<const double> est, std::span<const double> ref,
                 std::span<const double> mix) {
  Tape tape;
  auto as_var = [&tape](std::span<const double> v) {
    return tape.constant(Tensor::vector(std::vector<double>(v.begin(), v.end())));
  };
  return wsdr_loss(as_var(est), as_var(ref), as_var(mix)).item();
}

Var mdl(const Var& est_mag, const Var& ref_mag, const Var& est_wave, const Var& ref_wave,
        const Var& mix_wave, double alpha) {
  return add(mse_loss(est_mag, ref_mag), scale(wsdr_loss(est_wave, ref_wave, mix_wave), alpha));
}

namespace {

LossReport subset_loss(std::span<const Var> masks, const Var& y_spec,
                       std::span<const Waveform> refs, const Waveform& mix,
                       const LossOptions& opts, const std::vector<Combination>& combos) {
  const std::size_t J = masks.size();
  if (J < 2) throw Error("combination_loss: need at least 2 sources");
  if (refs.size() != J) {
    throw ShapeError("combination_loss: " + std::to_string(J) + " masks but " +
                     std::to_string(refs.size()) + " references");
  }
  if (opts.alpha < 0.0) throw ConfigError("combination_loss: alpha must be >= 0");
  opts.stft.validate();
  Tape& tape = *masks.front().tape();
  const Tensor& Y = y_spec.value();
  if (Y.rank() != 3 || Y.dim(2) != 2 || Y.dim(1) != opts.stft.bins() ||
      Y.dim(0) != opts.stft.frame_count(mix.size())) {
    throw ShapeError("combination_loss: mixture spectrum " + to_string(Y.shape()) +
                     " does not match a " + std::to_string(mix.size()) + "-sample mixture");
  }
  for (const Var& m : masks) {
    if (m.tape() != &tape) throw Error("combination_loss: masks live on different tapes");
    if (m.value().rank() != 2 || m.value().dim(0) != Y.dim(0) || m.value().dim(1) != Y.dim(1))
      throw ShapeError("combination_loss: mask shape " + to_string(m.shape()) +
                       " does not match spectrum " + to_string(Y.shape()));
  }
  for (const Waveform& r : refs) {
    if (r.size() != mix.size()) throw ShapeError("combination_loss: reference length mismatch");
  }

  // The mixture spectrum and all references are data: no gradient reaches them.
  const Var y_mag = tape.constant(magnitude(ComplexSpectrogram{Y, opts.stft}).data);
  std::vector<Tensor> ref_specs;
  ref_specs.reserve(J);
  for (const Waveform& r : refs) ref_specs.push_back(stft(r, opts.stft).data);
  const Var mix_wave = tape.constant(Tensor::vector(mix.samples));

  // The ISTFT is linear, so the time-domain estimate of a combination is the
  // sum of the per-source estimates; each source goes through it once.
  std::vector<Var> est_waves;
  if (opts.use_mdl) {
    est_waves.reserve(J);
    for (const Var& m : masks) est_waves.push_back(istft(apply_mask(m, y_spec), opts.stft, mix.size()));
  }

  LossReport report;
  report.alpha = opts.alpha;
  std::vector<Var> terms;
  terms.reserve(combos.size());
  for (const Combination& c : combos) {
    Var mask = masks[c.sources.front()];
    Tensor ref_spec = ref_specs[c.sources.front()];
    std::vector<double> ref_wave = refs[c.sources.front()].samples;
    for (std::size_t i = 1; i < c.sources.size(); ++i) {
      const std::size_t j = c.sources[i];
      mask = add(mask, masks[j]);
      const Tensor& s = ref_specs[j];
      for (std::size_t k = 0; k < ref_spec.size(); ++k) ref_spec[k] += s[k];
      const auto& w = refs[j].samples;
      for (std::size_t k = 0; k < ref_wave.size(); ++k) ref_wave[k] += w[k];
    }
    const Var ref_mag =
        tape.constant(magnitude(ComplexSpectrogram{std::move(ref_spec), opts.stft}).data);
    // |M o Y| = M |Y| for a real nonnegative mask.
    Var term = mse_loss(mul(mask, y_mag), ref_mag);
    CombinationTerm entry{c, term.item(), std::nullopt, 0.0};
    if (opts.use_mdl) {
      Var est_wave = est_waves[c.sources.front()];
      for (std::size_t i = 1; i < c.sources.size(); ++i) est_wave = add(est_wave, est_waves[c.sources[i]]);
      const Var wsdr =
          wsdr_loss(est_wave, tape.constant(Tensor::vector(std::move(ref_wave))), mix_wave);
      entry.wsdr = wsdr.item();
      term = add(term, scale(wsdr, opts.alpha));
    }
    entry.mdl = term.item();
    report.terms.push_back(std::move(entry));
    terms.push_back(term);
  }
  report.total = mean(terms);
  return report;
}

}  // namespace

LossReport combination_loss(std::span<const Var> masks, const Var& y_spec,
                            std::span<const Waveform> refs, const Waveform& mix,
                            const LossOptions& opts) {
  return subset_loss(masks, y_spec, refs, mix, opts, enumerate_combinations(masks.size()));
}

LossReport plain_loss(std::span<const Var> masks, const Var& y_spec,
                      std::span<const Waveform> refs, const Waveform& mix,
                      const LossOptions& opts) {
  std::vector<Combination> singles;
  for (std::size_t j = 0; j < masks.size(); ++j) singles.push_back(Combination{{j}});
  return subset_loss(masks, y_spec, refs, mix, opts, singles);
}

}  // namespace xumx
