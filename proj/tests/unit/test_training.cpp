#include <gtest/gtest.h>

#include <filesystem>

#include "xumx/checkpoint.hpp"
#include "xumx/error.hpp"
#include "xumx/training.hpp"

using namespace xumx;

namespace {

DatasetSplit toy_split(std::size_t sources = 2) {
  SynthSpec spec;
  spec.num_tracks = 5;
  spec.duration_s = 2.0;
  spec.sources = sources;
  spec.seed = 4;
  return split_tracks(synth_dataset(spec), 1, 1, 0);
}

TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.stft = StftConfig{256, 64, true};
  cfg.hidden_size = 8;
  cfg.batch_size = 2;
  cfg.batches_per_epoch = 2;
  cfg.excerpt_seconds = 0.5;
  cfg.epochs = 3;
  cfg.seed = 9;
  return cfg;
}

}  // namespace

TEST(Schedule, PlateauDropsOnlyWhenPatienceRunsOutAtLastEpoch) {
  const std::vector<double> a{1.0, 0.9, 0.95, 0.96};
  EXPECT_DOUBLE_EQ(reduce_on_plateau(a, 2, 0.5, 1e-3), 5e-4);
  EXPECT_DOUBLE_EQ(reduce_on_plateau(std::span(a).first(3), 2, 0.5, 1e-3), 1e-3);
  const std::vector<double> b{1.0, 0.9, 0.95, 0.96, 0.97};
  EXPECT_DOUBLE_EQ(reduce_on_plateau(b, 2, 0.5, 1e-3), 1e-3);
  const std::vector<double> c{1.0, 0.9, 0.95, 0.96, 0.97, 0.98};
  EXPECT_DOUBLE_EQ(reduce_on_plateau(c, 2, 0.5, 1e-3), 5e-4);
  const std::vector<double> tiny{1.0, 1.0 - 1e-7};
  EXPECT_DOUBLE_EQ(reduce_on_plateau(tiny, 1, 0.3, 1.0), 0.3);
  const std::vector<double> real{1.0, 0.5};
  EXPECT_DOUBLE_EQ(reduce_on_plateau(real, 1, 0.3, 1.0), 1.0);
}

TEST(Schedule, PlateauReferenceFixtures) {
  const std::vector<double> flat{1.0, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(reduce_on_plateau(std::span(flat).first(2), 2, 0.3, 1e-3), 1e-3);
  EXPECT_DOUBLE_EQ(reduce_on_plateau(flat, 2, 0.3, 1e-3), 3e-4);
  std::vector<double> falling;
  for (int i = 0; i < 30; ++i) {
    falling.push_back(10.0 - 0.25 * i);
    EXPECT_DOUBLE_EQ(reduce_on_plateau(falling, 1, 0.3, 1e-3), 1e-3);
  }
  const std::vector<double> reset{1.0, 1.0, 0.9, 0.95};
  EXPECT_DOUBLE_EQ(reduce_on_plateau(reset, 3, 0.3, 1e-3), 1e-3);
}

TEST(Schedule, EarlyStopReferenceFixtures) {
  const std::vector<double> a{3.0, 2.0, 1.0, 1.1, 1.2};
  EXPECT_FALSE(early_stop(std::span(a).first(4), 2));
  EXPECT_TRUE(early_stop(a, 2));
  EXPECT_EQ(best_epoch(a), 2u);
  std::vector<double> falling;
  for (int i = 0; i < 50; ++i) {
    falling.push_back(1.0 / (1.0 + i));
    EXPECT_FALSE(early_stop(falling, 1));
  }
}

TEST(Schedule, EarlyStopAndBestEpoch) {
  const std::vector<double> a{1.0, 0.9, 0.95, 0.96};
  EXPECT_TRUE(early_stop(a, 2));
  EXPECT_FALSE(early_stop(a, 3));
  EXPECT_FALSE(early_stop(std::span(a).first(1), 1));
  const std::vector<double> b{3.0, 1.0, 1.0, 2.0};
  EXPECT_EQ(best_epoch(b), 1u);
  EXPECT_THROW(best_epoch(std::span<const double>{}), Error);
}

TEST(History, CsvFormat) {
  TrainHistory h;
  h.epochs = {{1, 2.5, 3.0, 1e-3}, {2, 2.0, 1.5, 1e-3}, {3, 1.0, 1.5, 3e-4}};
  EXPECT_EQ(h.best_index(), 1u);
  const std::string csv = h.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_loss,valid_loss,lr");
  EXPECT_NE(csv.find("\n2,2,1.5,0.001"), std::string::npos);
}

TEST(Config, ValidationAndVariants) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.optimizer.lr = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr_decay = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  const auto names = VariantConfig::names();
  ASSERT_EQ(names.size(), 8u);
  for (const auto& n : names) EXPECT_EQ(VariantConfig::from_name(n).name(), n);
  EXPECT_EQ(VariantConfig::from_name("P").name(), "P");
  EXPECT_TRUE(VariantConfig::from_name("P").use_bridging);
  EXPECT_THROW(VariantConfig::from_name("C9"), ConfigError);
}

TEST(Train, ZeroLearningRateLeavesParamsUnchanged) {
  TrainConfig cfg = toy_config();
  cfg.epochs = 1;
  cfg.optimizer.lr = 0.0;
  const TrainResult r = train(cfg, toy_split());
  const ModelParams init = init_params(r.checkpoint.net, derive_seed(cfg.seed, 1));
  ASSERT_EQ(r.history.epochs.size(), 1u);
  for (std::size_t i = 0; i < init.layers().size(); ++i) {
    const auto a = init.layers()[i].value.values();
    const auto b = r.checkpoint.params.layers()[i].value.values();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin())) << init.layers()[i].name;
  }
}

TEST(Train, DeterministicForFixedSeed) {
  const auto split = toy_split();
  const TrainConfig cfg = toy_config();
  const TrainResult a = train(cfg, split), b = train(cfg, split);
  EXPECT_EQ(a.history.to_csv(), b.history.to_csv());
  EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
}

TEST(Train, LossDecreasesOnToyProblem) {
  TrainConfig cfg = toy_config();
  cfg.epochs = 50;
  cfg.optimizer.lr = 3e-3;
  cfg.early_stop_patience = 1000;
  const auto split = toy_split();
  int calls = 0;
  const TrainResult r = train(cfg, split, [&](const EpochRecord&) { ++calls; });
  ASSERT_EQ(r.history.epochs.size(), 50u);
  EXPECT_EQ(calls, 50);
  EXPECT_LT(r.history.epochs.back().train_loss, r.history.epochs.front().train_loss);
  const double best = r.history.epochs[r.history.best_index()].valid_loss;
  EXPECT_LT(best, r.history.epochs.front().valid_loss);

  // The returned parameters are the best-validation ones.
  EXPECT_NEAR(validation_loss(r.checkpoint, split.valid), best, 1e-6 * std::abs(best));
}

TEST(Train, EveryVariantRuns) {
  const auto split = toy_split(3);
  for (const auto& name : VariantConfig::names()) {
    TrainConfig cfg = toy_config();
    cfg.epochs = 1;
    cfg.batches_per_epoch = 1;
    cfg.variant = VariantConfig::from_name(name);
    const TrainResult r = train(cfg, split);
    EXPECT_TRUE(std::isfinite(r.history.epochs[0].valid_loss)) << name;
    EXPECT_EQ(r.checkpoint.net.bridging, cfg.variant.use_bridging) << name;
  }
}

TEST(Train, HugeLearningRateAborts) {
  TrainConfig cfg = toy_config();
  cfg.epochs = 20;
  cfg.optimizer.lr = 1e6;
  cfg.early_stop_patience = 1000;
  try {
    train(cfg, toy_split());
    FAIL() << "expected TrainingAbort";
  } catch (const TrainingAbort& e) {
    EXPECT_GE(e.epoch(), 1);
    EXPECT_NE(std::string(e.what()).find("training aborted at epoch"), std::string::npos);
  }
}

TEST(Train, RejectsBadInputs) {
  auto split = toy_split();
  TrainConfig cfg = toy_config();
  cfg.excerpt_seconds = 0.01;
  EXPECT_THROW(train(cfg, split), ConfigError);
  split.valid.clear();
  EXPECT_THROW(train(toy_config(), split), DatasetError);
}

class CheckpointTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    TrainConfig cfg = toy_config();
    cfg.epochs = 2;
    cfg.variant = VariantConfig::from_name("P");
    split_ = new DatasetSplit(toy_split());
    result_ = new TrainResult(train(cfg, *split_));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete split_;
  }
  static DatasetSplit* split_;
  static TrainResult* result_;
};
DatasetSplit* CheckpointTest::split_ = nullptr;
TrainResult* CheckpointTest::result_ = nullptr;

TEST_F(CheckpointTest, RoundTripPreservesEverything) {
  const Checkpoint& c = result_->checkpoint;
  const std::string bytes = encode_checkpoint(c);
  const Checkpoint d = decode_checkpoint(bytes);
  EXPECT_EQ(d.net, c.net);
  EXPECT_EQ(d.train, c.train);
  EXPECT_EQ(d.sample_rate, c.sample_rate);
  EXPECT_EQ(d.source_names, c.source_names);
  EXPECT_EQ(d.stats.mean, c.stats.mean);
  EXPECT_EQ(d.stats.std, c.stats.std);
  EXPECT_EQ(encode_checkpoint(d), bytes);
  const double best = result_->history.epochs[result_->history.best_index()].valid_loss;
  EXPECT_NEAR(validation_loss(d, split_->valid), best, 1e-6 * std::abs(best));
}

TEST_F(CheckpointTest, FileRoundTripAndWiringGuard) {
  const auto path = std::filesystem::temp_directory_path() / "xumx_test_ckpt.xumx";
  save_checkpoint(path, result_->checkpoint);
  NetConfig expected = result_->checkpoint.net;
  EXPECT_NO_THROW(load_checkpoint(path, expected));
  expected.bridging = !expected.bridging;
  try {
    load_checkpoint(path, expected);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("bridging"), std::string::npos);
  }
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

TEST_F(CheckpointTest, RejectsDamagedFiles) {
  const std::string bytes = encode_checkpoint(result_->checkpoint);
  const std::size_t eol = bytes.find('\n');
  const std::size_t eoh = bytes.find('\n', eol + 1);

  std::string version = bytes;
  version.replace(0, eol, "xumx-checkpoint 2");
  EXPECT_THROW(decode_checkpoint(version), CheckpointError);

  std::string header = bytes;
  header.replace(eol + 1, eoh - eol - 1, "{\"net\": [");
  EXPECT_THROW(decode_checkpoint(header), CheckpointError);

  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), CheckpointError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), CheckpointError);
  EXPECT_THROW(decode_checkpoint("garbage"), CheckpointError);
}
