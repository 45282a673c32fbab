#include <filesystem>

#include <gtest/gtest.h>

#include "vidseg/config.h"

namespace vidseg {
namespace {

TEST(Config, DefaultsMatchPublishedSettings) {
  const TrainConfig c;
  EXPECT_EQ(c.loss.contrastive, 2.0);
  EXPECT_EQ(c.loss.classification, 2.0);
  EXPECT_EQ(c.loss.dice, 5.0);
  EXPECT_EQ(c.loss.mask_ce, 5.0);
  EXPECT_EQ(c.tracker.block_count, 6u);
  EXPECT_EQ(c.refiner.block_count, 6u);
  EXPECT_EQ(c.tracker_stage.clip_length, 5u);
  EXPECT_EQ(c.refiner_stage.clip_length, 21u);
  EXPECT_EQ(c.tracker_stage.optimizer.decay_fraction, 0.7);
  EXPECT_EQ(c.tracker_stage.optimizer.decay_factor, 0.1);
  EXPECT_EQ(kNoiseProbabilityPresets[0], 0.5);
  EXPECT_EQ(kNoiseProbabilityPresets[1], 0.8);
  EXPECT_EQ(kBackgroundClassWeight, 0.1);
  EXPECT_NO_THROW(c.Validate());
}

TEST(Config, JsonRoundTrip) {
  TrainConfig c;
  c.seed = 42;
  c.noise = {NoiseStrategy::kCropConcat, 0.5};
  c.scene.occlusion_rate = 0.25;
  const auto back = TrainConfigFromJson(ToJson(c));
  EXPECT_EQ(ToJson(back), ToJson(c));
  EXPECT_EQ(ConfigHash(back), ConfigHash(c));
}

TEST(Config, FileRoundTrip) {
  TrainConfig c;
  c.video_count = 3;
  const auto path = (std::filesystem::temp_directory_path() / "vidseg_config_test.json").string();
  SaveTrainConfig(c, path);
  const auto back = LoadTrainConfig(path);
  std::filesystem::remove(path);
  EXPECT_EQ(ConfigHash(back), ConfigHash(c));
}

TEST(Config, MissingKeysKeepDefaults) {
  const auto c = TrainConfigFromJson({{"schema_version", kConfigSchemaVersion}, {"seed", 9}});
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.refiner_stage.clip_length, 21u);
}

TEST(Config, UnknownKeysAndSchemaRejected) {
  auto doc = ToJson(TrainConfig{});
  doc["tracker"]["depth"] = 3;
  EXPECT_ANY_THROW(TrainConfigFromJson(doc));
  doc = ToJson(TrainConfig{});
  doc["schema_version"] = kConfigSchemaVersion + 1;
  EXPECT_ANY_THROW(TrainConfigFromJson(doc));
}

TEST(Config, OverridesApplyTypedValues) {
  TrainConfig c;
  ApplyOverride(c, "noise.probability=0.5");
  ApplyOverride(c, "noise.strategy=shuffle");
  ApplyOverride(c, "tracker_stage.optimizer.learning_rate=0.001");
  ApplyOverride(c, "scene.permute_queries=false");
  EXPECT_EQ(c.noise.probability, 0.5);
  EXPECT_EQ(c.noise.strategy, NoiseStrategy::kShuffle);
  EXPECT_EQ(c.tracker_stage.optimizer.learning_rate, 0.001);
  EXPECT_FALSE(c.scene.permute_queries);
  EXPECT_THROW(ApplyOverride(c, "noise.rate=0.5"), std::invalid_argument);
  EXPECT_THROW(ApplyOverride(c, "noise.probability"), std::invalid_argument);
  EXPECT_ANY_THROW(ApplyOverride(c, "noise.probability=2.0"));
}

TEST(Config, ValidateCatchesWidthMismatch) {
  TrainConfig c;
  c.tracker.channels = c.scene.channels + 8;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
}

TEST(Config, HashChangesWithContent) {
  TrainConfig a, b;
  b.seed = 1;
  EXPECT_NE(ConfigHash(a), ConfigHash(b));
}

}  // namespace
}  // namespace vidseg
