#include <benchmark/benchmark.h>

#include <complex>

#include "xumx/data.hpp"
#include "xumx/losses.hpp"
#include "xumx/metrics.hpp"
#include "xumx/model.hpp"

using namespace xumx;

namespace {

Waveform noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Waveform w{std::vector<double>(n), 8000};
  for (double& v : w.samples) v = normal(rng);
  return w;
}

void BM_Fft(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const FftPlan fft(n);
  std::vector<std::complex<double>> data(n);
  Rng rng(1);
  for (auto& c : data) c = {normal(rng), normal(rng)};
  for (auto _ : state) {
    fft.forward(data);
    benchmark::DoNotOptimize(data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Fft)->RangeMultiplier(4)->Range(256, 4096);

void BM_StftRoundTrip(benchmark::State& state) {
  const StftConfig cfg = StftConfig::desk();
  const Waveform w = noise(80000, 2);
  for (auto _ : state) {
    const Waveform back = istft(stft(w, cfg), cfg, w.size());
    benchmark::DoNotOptimize(back.samples.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.size()));
}
BENCHMARK(BM_StftRoundTrip)->Unit(benchmark::kMillisecond);

// One training example: forward through the bridged network and the
// combination loss, then backward.
void BM_TrainStep(benchmark::State& state) {
  const StftConfig cfg = StftConfig::desk();
  const bool use_cl = state.range(0) != 0;
  const std::size_t J = 4;
  std::vector<Waveform> stems;
  Waveform mix{std::vector<double>(8000, 0.0), 8000};
  for (std::size_t j = 0; j < J; ++j) {
    stems.push_back(noise(8000, 10 + j));
    for (std::size_t i = 0; i < mix.size(); ++i) mix.samples[i] += stems.back().samples[i];
  }
  const ComplexSpectrogram y = stft(mix, cfg);
  const MagnitudeSpectrogram mag = magnitude(y);
  const NetConfig net{J, 32, 1, cfg.bins(), true};
  const ModelParams params = init_params(net, 3);
  const Tensor input = normalize_input(mag.data, NormStats::identity(cfg.bins()));
  for (auto _ : state) {
    Tape tape;
    const ParamBinding bound(tape, params);
    const auto masks = forward(bound, net, tape.constant(input));
    const LossOptions opts{kDefaultAlpha, true, cfg};
    const Var loss = use_cl ? combination_loss(masks, tape.constant(y.data), stems, mix, opts).total
                            : plain_loss(masks, tape.constant(y.data), stems, mix, opts).total;
    const Gradients g = backward(tape, loss);
    benchmark::DoNotOptimize(g[bound.vars().front()].data());
  }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->ArgNames({"cl"})->Unit(benchmark::kMillisecond);

void BM_PredictMasks(benchmark::State& state) {
  const StftConfig cfg = StftConfig::desk();
  const MagnitudeSpectrogram mag = magnitude(stft(noise(80000, 4), cfg));
  const NetConfig net{4, 32, 1, cfg.bins(), true};
  const ModelParams params = init_params(net, 5);
  const NormStats stats = NormStats::identity(cfg.bins());
  for (auto _ : state) {
    const auto masks = predict_masks(params, net, stats, mag);
    benchmark::DoNotOptimize(masks.front().data.data());
  }
}
BENCHMARK(BM_PredictMasks)->Unit(benchmark::kMillisecond);

void BM_EvaluateTrack(benchmark::State& state) {
  std::vector<Waveform> refs, ests;
  for (std::uint64_t j = 0; j < 4; ++j) {
    refs.push_back(noise(80000, 20 + j));
    ests.push_back(noise(80000, 30 + j));
  }
  for (auto _ : state) {
    const auto ev = evaluate_track(refs, ests, 8000);
    benchmark::DoNotOptimize(ev.data());
  }
}
BENCHMARK(BM_EvaluateTrack)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
