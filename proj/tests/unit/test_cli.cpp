#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "../test_util.hpp"
#include "commands.hpp"
#include "config.hpp"
#include "xumx/checkpoint.hpp"
#include "xumx/error.hpp"

using namespace xumx;
using namespace xumx::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("xumx_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kTinyConfig = R"([dataset]
tracks = 4
duration = 1.5
sources = 2
valid_tracks = 1
test_tracks = 1

[stft]
fft_size = 256
hop_size = 64

[model]
hidden_size = 4

[train]
epochs = 2
batch_size = 2
batches_per_epoch = 1
excerpt_seconds = 0.5
)";

std::string expect_config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  ADD_FAILURE() << "no ConfigError for:\n" << text;
  return {};
}

}  // namespace

TEST(Config, ParsesAllSections) {
  const RunConfig c = parse_config(std::string(kTinyConfig) +
                                   "lr = 0.002\nseed = 5\n[variant]\nname = C3\n");
  EXPECT_EQ(c.dataset.tracks, 4u);
  EXPECT_DOUBLE_EQ(c.dataset.duration_seconds, 1.5);
  EXPECT_EQ(c.train.stft.fft_size, 256u);
  EXPECT_EQ(c.train.hidden_size, 4u);
  EXPECT_DOUBLE_EQ(c.train.optimizer.lr, 0.002);
  EXPECT_EQ(c.train.seed, 5u);
  EXPECT_EQ(c.train.variant.name(), "C3");
  const RunConfig d = parse_config("");
  EXPECT_EQ(d.train, TrainConfig{});
}

TEST(Config, ErrorsNameTheKey) {
  EXPECT_NE(expect_config_error("[train]\nlearning_rate = 1\n").find("train.learning_rate"),
            std::string::npos);
  EXPECT_NE(expect_config_error("[train]\nepochs = many\n").find("train.epochs"), std::string::npos);
  EXPECT_NE(expect_config_error("[train]\nepochs = 0\n").find("train.epochs"), std::string::npos);
  EXPECT_NE(expect_config_error("[dataset]\nsource = musdb\n").find("dataset.path"),
            std::string::npos);
  expect_config_error("[variant]\nname = Q\n");
  expect_config_error("[bogus]\nx = 1\n");
}

TEST(Config, MissingDatasetPathIsDatasetError) {
  DatasetConfig d;
  d.source = "musdb";
  d.path = "/nonexistent/xumx";
  EXPECT_THROW(load_dataset(d), DatasetError);
}

TEST(Seed, FlagBeatsEnvironmentBeatsConfig) {
  unsetenv("XUMX_SEED");
  EXPECT_EQ(resolve_seed(std::nullopt, 3), 3u);
  setenv("XUMX_SEED", "17", 1);
  EXPECT_EQ(resolve_seed(std::nullopt, 3), 17u);
  EXPECT_EQ(resolve_seed(21, 3), 21u);
  setenv("XUMX_SEED", "abc", 1);
  EXPECT_THROW(resolve_seed(std::nullopt, 3), ConfigError);
  unsetenv("XUMX_SEED");
}

TEST(Variants, CanonicalOrderWithoutDuplicates) {
  EXPECT_EQ(parse_variants("P,C1,C1"), (std::vector<std::string>{"C1", "P"}));
  EXPECT_EQ(parse_variants("C7, C2"), (std::vector<std::string>{"C2", "C7"}));
  EXPECT_THROW(parse_variants("C1,X"), ConfigError);
  EXPECT_THROW(parse_variants(""), ConfigError);
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), kExitUsage);
  EXPECT_EQ(exit_code_for(DatasetError("x")), kExitUsage);
  EXPECT_EQ(exit_code_for(WavError("x", 0)), kExitUsage);
  EXPECT_EQ(exit_code_for(CheckpointError("x")), kExitUsage);
  EXPECT_EQ(exit_code_for(TrainingAbort("x", 1, 1)), kExitRuntime);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), kExitRuntime);
}

TEST(Commands, TrainMissingDatasetPathExitsWithUsageCode) {
  const fs::path dir = fresh_dir("missing_path");
  write_file(dir / "run.ini", "[dataset]\nsource = musdb\npath = /nonexistent/xumx\n");
  std::ostringstream log, err;
  EXPECT_EQ(cmd_train({dir / "run.ini", dir / "out", std::nullopt}, log, err), kExitUsage);
  EXPECT_NE(err.str().find("dataset.path"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Commands, TrainDivergenceExitsWithRuntimeCode) {
  const fs::path dir = fresh_dir("diverge");
  write_file(dir / "run.ini", std::string(kTinyConfig) + "epochs = 20\nlr = 1e6\nearly_stop_patience = 100\n");
  std::ostringstream log, err;
  EXPECT_EQ(cmd_train({dir / "run.ini", dir / "out", std::nullopt}, log, err), kExitRuntime);
  EXPECT_NE(err.str().find("training aborted at epoch"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Commands, TrainThenSeparate) {
  const fs::path dir = fresh_dir("train_sep");
  write_file(dir / "run.ini", kTinyConfig);
  std::ostringstream log, err;
  ASSERT_EQ(cmd_train({dir / "run.ini", dir / "out", 1}, log, err), kExitOk) << err.str();
  EXPECT_TRUE(fs::exists(dir / "out" / "checkpoint.xumx"));
  const std::string history = read_file(dir / "out" / "history.csv");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 3);
  const Checkpoint ckpt = load_checkpoint(dir / "out" / "checkpoint.xumx");
  EXPECT_EQ(ckpt.train.seed, 1u);

  Rng rng(1);
  fs::create_directories(dir / "in" / "song");
  save_wav(dir / "in" / "song" / "mixture.wav", test::random_wave(rng, 4000));
  save_wav(dir / "in" / "clip.wav", test::random_wave(rng, 3000));
  ASSERT_EQ(cmd_separate({dir / "out" / "checkpoint.xumx", dir / "in", dir / "sep", 30.0}, log, err),
            kExitOk)
      << err.str();
  for (const char* track : {"song", "clip"})
    for (const auto& s : ckpt.source_names) EXPECT_TRUE(fs::exists(dir / "sep" / track / (s + ".wav")));

  save_wav(dir / "in" / "fast.wav", test::random_wave(rng, 3000, 16000));
  EXPECT_EQ(cmd_separate({dir / "out" / "checkpoint.xumx", dir / "in" / "fast.wav", dir / "sep", 30.0},
                         log, err),
            kExitUsage);
  EXPECT_EQ(cmd_separate({dir / "nothing.xumx", dir / "in", dir / "sep", 30.0}, log, err), kExitUsage);
  fs::remove_all(dir);
}

TEST(Commands, EvalWritesFrameAndSummaryTables) {
  const fs::path dir = fresh_dir("eval");
  Rng rng(2);
  for (const char* track : {"t1", "t2"}) {
    fs::create_directories(dir / "refs" / track);
    fs::create_directories(dir / "ests" / track);
    const Waveform a = test::random_wave(rng, 2000), b = test::random_wave(rng, 2000);
    Waveform mix = a;
    for (std::size_t i = 0; i < mix.size(); ++i) mix.samples[i] += b.samples[i];
    save_wav(dir / "refs" / track / "mixture.wav", mix);
    save_wav(dir / "refs" / track / "a.wav", a);
    save_wav(dir / "refs" / track / "b.wav", b);
    save_wav(dir / "ests" / track / "a.wav", a);
    save_wav(dir / "ests" / track / "b.wav", mix);
  }
  std::ostringstream log, err;
  ASSERT_EQ(cmd_eval({dir / "refs", dir / "ests", dir / "scores.csv", 0.1}, log, err), kExitOk)
      << err.str();
  const std::string frames = read_file(dir / "scores.csv");
  EXPECT_EQ(frames.substr(0, frames.find('\n')), "track_id,source,metric,frame_index,value");
  // 2 tracks x 2 sources x 2 metrics x 3 frames of 800 samples
  EXPECT_EQ(std::count(frames.begin(), frames.end(), '\n'), 1 + 24);
  EXPECT_NE(frames.find("t1,a,SDR,0,100.000000\n"), std::string::npos);
  const std::string summary = read_file(dir / "scores.summary.csv");
  EXPECT_NE(summary.find("source,metric,value,tracks\na,SDR,100.000000,2\n"), std::string::npos);

  fs::remove(dir / "ests" / "t2" / "b.wav");
  EXPECT_EQ(cmd_eval({dir / "refs", dir / "ests", dir / "scores.csv", 1.0}, log, err), kExitUsage);
  EXPECT_NE(err.str().find("missing estimate"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Commands, AblateWritesTablesPerVariant) {
  const fs::path dir = fresh_dir("ablate");
  write_file(dir / "run.ini", kTinyConfig);
  std::ostringstream log, err;
  ASSERT_EQ(cmd_ablate({dir / "run.ini", "P,C1", dir / "out", 3}, log, err), kExitOk) << err.str();
  for (const char* v : {"C1", "P"}) {
    EXPECT_TRUE(fs::exists(dir / "out" / v / "checkpoint.xumx"));
    EXPECT_TRUE(fs::exists(dir / "out" / v / "history.csv"));
  }
  const std::string results = read_file(dir / "out" / "results.csv");
  EXPECT_EQ(std::count(results.begin(), results.end(), '\n'), 1 + 2 * 2 * 2);
  EXPECT_EQ(results.find("variant,source,metric,value\nC1,"), 0u);
  const std::string box = read_file(dir / "out" / "boxplot.csv");
  EXPECT_EQ(std::count(box.begin(), box.end(), '\n'), 1 + 2 * 2 * 2);
  EXPECT_EQ(cmd_ablate({dir / "run.ini", "C8", dir / "out", 3}, log, err), kExitUsage);
  fs::remove_all(dir);
}

TEST(Commands, RunParsesArguments) {
  std::vector<std::string> args{"xumx", "train", "--config"};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  testing::internal::CaptureStderr();
  testing::internal::CaptureStdout();
  EXPECT_EQ(run(static_cast<int>(argv.size()), argv.data()), kExitUsage);
  testing::internal::GetCapturedStdout();
  testing::internal::GetCapturedStderr();
}

TEST(Config, ShippedConfigParses) {
  const RunConfig c = load_config(fs::path(XUMX_CONFIG_DIR) / "synthetic.ini");
  EXPECT_EQ(c.dataset.tracks, 20u);
  EXPECT_EQ(c.train.variant.name(), "P");
  EXPECT_EQ(c.train.epochs, 200);
}
