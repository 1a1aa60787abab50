#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "../test_util.hpp"
#include "xumx/data.hpp"
#include "xumx/error.hpp"
#include "xumx/metrics.hpp"

using namespace xumx;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("xumx_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Track make_track(const std::string& name, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Track t;
  t.name = name;
  t.source_names = {"a", "b"};
  t.stems = {test::random_wave(rng, n), test::random_wave(rng, n)};
  t.mixture = Waveform{std::vector<double>(n), 8000};
  for (std::size_t i = 0; i < n; ++i)
    t.mixture.samples[i] = t.stems[0].samples[i] + t.stems[1].samples[i];
  return t;
}

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xFF));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void puttag(std::vector<std::uint8_t>& b, const char* t) { b.insert(b.end(), t, t + 4); }

}  // namespace

TEST(Wav, Float32RoundTripIsExactForFloatValues) {
  Rng rng(1);
  Waveform w = test::random_wave(rng, 1001, 22050);
  for (double& v : w.samples) v = static_cast<float>(0.3 * v);
  const Waveform back = parse_wav(encode_wav(w, SampleFormat::Float32));
  EXPECT_EQ(back.sample_rate, 22050);
  EXPECT_EQ(back.samples, w.samples);
}

TEST(Wav, Pcm16RoundTripWithinOneStep) {
  Rng rng(2);
  Waveform w{std::vector<double>(777), 8000};
  for (double& v : w.samples) v = uniform(rng, -0.99, 0.99);
  const Waveform back = parse_wav(encode_wav(w, SampleFormat::Pcm16));
  ASSERT_EQ(back.size(), w.size());
  EXPECT_LE(test::max_abs_diff(back.samples, w.samples), 1.0 / 32768.0);
}

TEST(Wav, FileRoundTrip) {
  const fs::path dir = fresh_dir("wav_file");
  Rng rng(3);
  Waveform w = test::random_wave(rng, 50);
  for (double& v : w.samples) v = static_cast<float>(v);
  save_wav(dir / "x.wav", w);
  EXPECT_EQ(load_wav(dir / "x.wav").samples, w.samples);
  EXPECT_THROW(load_wav(dir / "missing.wav"), WavError);
  fs::remove_all(dir);
}

TEST(Wav, TruncatedFileReportsOffset) {
  Waveform w{std::vector<double>(10, 0.25), 8000};
  auto bytes = encode_wav(w, SampleFormat::Float32);
  ASSERT_EQ(bytes.size(), 84u);
  bytes.resize(60);
  try {
    parse_wav(bytes);
    FAIL() << "expected WavError";
  } catch (const WavError& e) {
    EXPECT_EQ(e.offset(), 44u);
  }
  bytes.resize(10);
  try {
    parse_wav(bytes);
    FAIL() << "expected WavError";
  } catch (const WavError& e) {
    EXPECT_EQ(e.offset(), 8u);
  }
}

TEST(Wav, RejectsUnsupportedCodec) {
  auto bytes = encode_wav(Waveform{std::vector<double>(4, 0.0), 8000}, SampleFormat::Pcm16);
  bytes[34] = 24;  // bits per sample
  EXPECT_THROW(parse_wav(bytes), WavError);
  bytes = encode_wav(Waveform{std::vector<double>(4, 0.0), 8000}, SampleFormat::Pcm16);
  bytes[0] = 'X';
  EXPECT_THROW(parse_wav(bytes), WavError);
}

TEST(Wav, StereoPcmIsDownmixedAndUnknownChunksSkipped) {
  std::vector<std::uint8_t> b;
  puttag(b, "RIFF");
  put32(b, 0);
  puttag(b, "WAVE");
  puttag(b, "LIST");
  put32(b, 3);
  b.insert(b.end(), {1, 2, 3, 0});
  puttag(b, "fmt ");
  put32(b, 16);
  put16(b, 1);
  put16(b, 2);
  put32(b, 16000);
  put32(b, 64000);
  put16(b, 4);
  put16(b, 16);
  puttag(b, "data");
  put32(b, 8);
  put16(b, 16384);
  put16(b, 0);
  put16(b, static_cast<std::uint16_t>(-8192));
  put16(b, static_cast<std::uint16_t>(-8192));
  const Waveform w = parse_wav(b);
  EXPECT_EQ(w.sample_rate, 16000);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_DOUBLE_EQ(w.samples[0], 0.25);
  EXPECT_DOUBLE_EQ(w.samples[1], -0.25);
}

TEST(Split, DisjointCoveringAndDeterministic) {
  std::vector<Track> tracks;
  for (int i = 0; i < 12; ++i) tracks.push_back(make_track("t" + std::to_string(i), 8, i));
  const auto a = split_tracks(tracks, 3, 2, 5);
  const auto b = split_tracks(tracks, 3, 2, 5);
  EXPECT_EQ(a.train.size(), 7u);
  EXPECT_EQ(a.valid.size(), 3u);
  EXPECT_EQ(a.test.size(), 2u);
  std::set<std::string> seen;
  for (const auto* part : {&a.train, &a.valid, &a.test})
    for (const auto& t : *part) EXPECT_TRUE(seen.insert(t.name).second);
  EXPECT_EQ(seen.size(), 12u);
  for (std::size_t i = 0; i < a.valid.size(); ++i) EXPECT_EQ(a.valid[i].name, b.valid[i].name);
  EXPECT_THROW(split_tracks(tracks, 6, 6, 0), DatasetError);
}

TEST(Synthetic, DeterministicAndMixtureIsStemSum) {
  SynthSpec spec;
  spec.num_tracks = 3;
  spec.duration_s = 1.5;
  spec.seed = 11;
  const auto a = synth_dataset(spec), b = synth_dataset(spec);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].mixture.samples, b[k].mixture.samples);
    EXPECT_EQ(a[k].length(), 12000u);
    EXPECT_EQ(a[k].stems.size(), 4u);
    EXPECT_LE(a[k].mixture_error(), 1e-12);
    EXPECT_NO_THROW(a[k].validate());
  }
  EXPECT_NE(a[0].mixture.samples, a[1].mixture.samples);
  spec.seed = 12;
  EXPECT_NE(synth_dataset(spec)[0].mixture.samples, a[0].mixture.samples);
}

TEST(Synthetic, BandsPartitionSpectrum) {
  for (std::size_t J : {2u, 3u, 4u, 8u}) {
    const auto bands = synth_bands(J, 8000);
    ASSERT_EQ(bands.size(), J);
    EXPECT_EQ(bands.front().low_hz, 0.0);
    EXPECT_EQ(bands.back().high_hz, 4000.0);
    for (std::size_t j = 1; j < J; ++j) EXPECT_EQ(bands[j].low_hz, bands[j - 1].high_hz);
    const auto masks = band_masks(bands, StftConfig::desk(), 8000, 3);
    for (std::size_t i = 0; i < masks[0].data.values().size(); ++i) {
      double s = 0.0;
      for (const auto& m : masks) s += m.data.values()[i];
      EXPECT_EQ(s, 1.0);
    }
  }
  EXPECT_THROW(synth_bands(1, 8000), ConfigError);
}

TEST(Synthetic, BandOracleSeparatesWell) {
  SynthSpec spec;
  spec.num_tracks = 2;
  spec.duration_s = 3.0;
  spec.seed = 3;
  const auto tracks = synth_dataset(spec);
  const auto bands = synth_bands(spec.sources, spec.sample_rate);
  std::vector<std::vector<FrameScores>> per_source(spec.sources);
  for (const auto& t : tracks) {
    const auto est = band_oracle_separation(t.mixture, bands, StftConfig::desk());
    for (std::size_t j = 0; j < spec.sources; ++j)
      per_source[j].push_back(sdr_frames(t.stems[j].samples, est[j].samples, 8000));
  }
  for (const auto& s : per_source) EXPECT_GE(aggregate(s), 15.0);
}

TEST(Musdb, LoadsFoldersInSortedOrder) {
  const fs::path root = fresh_dir("musdb_ok");
  for (const char* name : {"b_track", "a_track"}) {
    const Track t = make_track(name, 64, name[0]);
    fs::create_directories(root / name);
    save_wav(root / name / "mixture.wav", t.mixture);
    save_wav(root / name / "x.wav", t.stems[0]);
    save_wav(root / name / "y.wav", t.stems[1]);
  }
  const auto tracks = load_musdb_layout(root, {"x", "y"});
  ASSERT_EQ(tracks.size(), 2u);
  EXPECT_EQ(tracks[0].name, "a_track");
  EXPECT_LE(tracks[0].mixture_error(), 1e-6);
  EXPECT_TRUE(tracks[0].warnings.empty());
  fs::remove_all(root);
}

TEST(Musdb, MissingStemNamesFile) {
  const fs::path root = fresh_dir("musdb_missing");
  fs::create_directories(root / "song");
  const Waveform w{std::vector<double>(32, 0.0), 8000};
  for (const char* s : {"mixture", "bass", "drums", "other"}) save_wav(root / "song" / (std::string(s) + ".wav"), w);
  try {
    load_musdb_layout(root);
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("vocals.wav"), std::string::npos);
  }
  fs::remove_all(root);
}

TEST(Musdb, InconsistentMixtureLoadsWithWarning) {
  const fs::path root = fresh_dir("musdb_warn");
  fs::create_directories(root / "song");
  Track t = make_track("song", 64, 9);
  for (double& v : t.mixture.samples) v *= 0.5;
  save_wav(root / "song" / "mixture.wav", t.mixture);
  save_wav(root / "song" / "x.wav", t.stems[0]);
  save_wav(root / "song" / "y.wav", t.stems[1]);
  const auto tracks = load_musdb_layout(root, {"x", "y"});
  ASSERT_EQ(tracks.size(), 1u);
  EXPECT_EQ(tracks[0].warnings.size(), 1u);
  fs::remove_all(root);
  EXPECT_THROW(load_musdb_layout(root), DatasetError);
}

TEST(Sampler, DeterministicAlignedAndSumPreserving) {
  std::vector<Track> tracks{make_track("a", 500, 1), make_track("b", 300, 2)};
  const auto a = sample_excerpts(tracks, 100, 4, 5, 42);
  const auto b = sample_excerpts(tracks, 100, 4, 5, 42);
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].size(), 4u);
    for (std::size_t k = 0; k < 4; ++k) {
      const Excerpt& e = a[i][k];
      EXPECT_EQ(e.track, b[i][k].track);
      EXPECT_EQ(e.offset, b[i][k].offset);
      EXPECT_LE(e.offset + 100, tracks[e.track].length());
      for (std::size_t n = 0; n < 100; ++n) {
        EXPECT_EQ(e.mixture.samples[n], tracks[e.track].mixture.samples[e.offset + n]);
        EXPECT_NEAR(e.mixture.samples[n], e.stems[0].samples[n] + e.stems[1].samples[n], 1e-12);
      }
    }
  }
  EXPECT_THROW(ExcerptSampler(tracks, 301, 0), DatasetError);
  EXPECT_THROW(ExcerptSampler({}, 10, 0), DatasetError);
}

TEST(Sampler, OffsetsAreUniform) {
  const std::vector<Track> tracks{make_track("a", 1099, 1)};
  ExcerptSampler sampler(tracks, 100, 7);
  constexpr int kBins = 10, kDraws = 20000;
  std::vector<int> counts(kBins, 0);
  for (int i = 0; i < kDraws; ++i) ++counts[sampler.next().offset / 100];
  double chi2 = 0.0;
  const double expected = static_cast<double>(kDraws) / kBins;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 27.88);  // 9 degrees of freedom, p = 0.001
}
