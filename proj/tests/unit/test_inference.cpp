#include <gtest/gtest.h>

#include <filesystem>

#include "../test_util.hpp"
#include "xumx/data.hpp"
#include "xumx/error.hpp"
#include "xumx/inference.hpp"

using namespace xumx;

namespace {

Checkpoint random_checkpoint(bool bridging = false) {
  Checkpoint c;
  c.stft = StftConfig{256, 64, true};
  c.net = NetConfig{2, 8, 1, c.stft.bins(), bridging};
  c.sample_rate = 8000;
  c.source_names = {"low", "high"};
  c.stats = NormStats::identity(c.stft.bins());
  c.params = init_params(c.net, 3);
  return c;
}

}  // namespace

TEST(ApplyMasks, UnitMaskReturnsMixture) {
  Rng rng(1);
  const Waveform mix = test::random_wave(rng, 3000);
  const StftConfig cfg{256, 64, true};
  const ComplexSpectrogram y = stft(mix, cfg);
  const std::vector<Mask> ones{Mask{Tensor(Shape{y.frames(), y.bins()}, 1.0)}};
  const SeparationResult r = apply_masks(mix, y, ones, {"all"});
  ASSERT_EQ(r.stems.size(), 1u);
  EXPECT_LE(test::max_abs_diff(r.stems[0].samples, mix.samples), 1e-10);
  EXPECT_LE(r.residual_ratio, 1e-20);
  EXPECT_THROW(apply_masks(mix, y, ones, {"a", "b"}), ShapeError);
}

TEST(ApplyMasks, ComplementaryMasksSumToMixture) {
  Rng rng(2);
  const Waveform mix = test::random_wave(rng, 2000);
  const StftConfig cfg{256, 64, true};
  const ComplexSpectrogram y = stft(mix, cfg);
  Tensor a(Shape{y.frames(), y.bins()}), b(Shape{y.frames(), y.bins()});
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = uniform01(rng);
    b[i] = 1.0 - a[i];
  }
  const std::vector<Mask> masks{Mask{a}, Mask{b}};
  const SeparationResult r = apply_masks(mix, y, masks, {"a", "b"});
  for (std::size_t i = 0; i < mix.size(); ++i)
    EXPECT_NEAR(r.stems[0].samples[i] + r.stems[1].samples[i], mix.samples[i], 1e-10);
}

TEST(Chunking, SingleChunkMatchesDirectPrediction) {
  const Checkpoint c = random_checkpoint(true);
  Rng rng(3);
  const auto mag = magnitude(stft(test::random_wave(rng, 8000), c.stft));
  const auto direct = predict_masks(c.params, c.net, c.stats, mag);
  const auto chunked = chunked_masks(c, mag, SeparateOptions{30.0, 1.0});
  for (std::size_t j = 0; j < 2; ++j)
    EXPECT_LE(test::max_abs_diff(direct[j].data.values(), chunked[j].data.values()), 1e-12);
}

TEST(Chunking, CrossfadeBlendsIndependentChunks) {
  const Checkpoint c = random_checkpoint();
  Rng rng(4);
  const auto mag = magnitude(stft(test::random_wave(rng, 4 * 8000), c.stft));
  const std::size_t T = mag.frames(), F = mag.bins();
  // 1 s chunks are 125 frames, the 0.25 s crossfade is 31 frames.
  const auto chunked = chunked_masks(c, mag, SeparateOptions{1.0, 0.25});
  Tensor head(Shape{125, F});
  std::copy_n(mag.data.values().begin(), 125 * F, head.values().begin());
  const auto first = predict_masks(c.params, c.net, c.stats, MagnitudeSpectrogram{head});
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t t = 0; t < 94; ++t)
      for (std::size_t f = 0; f < F; ++f)
        EXPECT_NEAR(chunked[j].data.at(t, f), first[j].data.at(t, f), 1e-12);
    for (double v : chunked[j].data.values()) EXPECT_GE(v, 0.0);
  }
  EXPECT_EQ(chunked[0].frames(), T);
  EXPECT_THROW(chunked_masks(c, mag, SeparateOptions{0.0, 1.0}), ConfigError);
}

TEST(Separate, DeterministicAndChecksSampleRate) {
  const Checkpoint c = random_checkpoint();
  Rng rng(5);
  Waveform mix = test::random_wave(rng, 5000);
  const SeparationResult a = separate(c, mix), b = separate(c, mix);
  ASSERT_EQ(a.stems.size(), 2u);
  EXPECT_EQ(a.source_names, c.source_names);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(a.stems[j].samples, b.stems[j].samples);
    EXPECT_EQ(a.stems[j].size(), mix.size());
  }
  mix.sample_rate = 16000;
  EXPECT_THROW(separate(c, mix), ConfigError);
  EXPECT_THROW(separate(c, Waveform{{}, 8000}), ConfigError);
}

TEST(Separate, WritesStems) {
  const Checkpoint c = random_checkpoint();
  Rng rng(6);
  const SeparationResult r = separate(c, test::random_wave(rng, 1000));
  const auto dir = std::filesystem::temp_directory_path() / "xumx_test_stems";
  std::filesystem::remove_all(dir);
  write_stems(r, dir, "song");
  for (std::size_t j = 0; j < 2; ++j) {
    const Waveform w = load_wav(dir / "song" / (c.source_names[j] + ".wav"));
    EXPECT_LE(test::max_abs_diff(w.samples, r.stems[j].samples), 1e-6);
  }
  std::filesystem::remove_all(dir);
}
