#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "test_util.h"
#include "vidseg/harness.h"

namespace vidseg {
namespace {

namespace fs = std::filesystem;

fs::path TempDir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("vidseg_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PredictionFile GroundTruthPredictions(const SyntheticVideo& video) {
  PredictionFile p;
  p.mode = "online";
  p.frames = video.frame_count();
  p.height = video.config.height;
  p.width = video.config.width;
  p.tubes = GroundTruthTubes(video);
  for (std::size_t o = 0; o < p.tubes.size(); ++o) p.tubes[o].identity = static_cast<int>(o);
  return p;
}

TEST(Dataset, SeedsAreDistinctAndStable) {
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < 100; ++i) seen.insert(VideoSeed(7, i));
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_EQ(VideoSeed(7, 3), VideoSeed(7, 3));
  EXPECT_NE(VideoSeed(7, 3), VideoSeed(8, 3));
  EXPECT_EQ(VideoFileName(12), "video_0012.vsd");
}

TEST(Dataset, SaveLoadRoundTrip) {
  const auto config = testing::SmallTrainConfig(3);
  const auto videos = GenerateDataset(config);
  ASSERT_EQ(videos.size(), config.video_count);
  const auto dir = TempDir("dataset_test");
  SaveDataset(videos, dir.string());
  const auto back = LoadDataset(dir.string());
  fs::remove_all(dir);
  ASSERT_EQ(back.size(), videos.size());
  for (std::size_t i = 0; i < videos.size(); ++i) EXPECT_EQ(EncodeVideo(back[i]), EncodeVideo(videos[i]));
  const auto again = GenerateDataset(config);
  for (std::size_t i = 0; i < videos.size(); ++i) EXPECT_EQ(EncodeVideo(again[i]), EncodeVideo(videos[i]));
}

TEST(Checkpoints, TrackerRoundTripAndRefinerBinding) {
  const auto config = testing::SmallTrainConfig(4);
  auto tracker = ReferringTracker::Create(config.tracker, 1);
  Rng rng(2);
  testing::Randomize(tracker.params(), rng);
  const auto restored = TrackerFromCheckpoint(DecodeCheckpoint(
      EncodeCheckpoint(MakeTrackerCheckpoint(tracker, config, 10))));
  EXPECT_EQ(restored.params().Hash(), tracker.params().Hash());

  auto refiner = TemporalRefiner::Create(config.refiner, 3);
  testing::Randomize(refiner.params(), rng);
  const auto ck = MakeRefinerCheckpoint(refiner, tracker, config, 5);
  EXPECT_EQ(RefinerFromCheckpoint(ck, tracker).params().Hash(), refiner.params().Hash());
  const auto other = ReferringTracker::Create(config.tracker, 9);
  EXPECT_ANY_THROW(RefinerFromCheckpoint(ck, other));
}

TEST(Predictions, SlotMasksFollowIdentities) {
  const auto video = GenerateVideo(testing::TinyScene(5));
  const auto p = GroundTruthPredictions(video);
  const auto slots = SlotMasks(DecodePredictions(EncodePredictions(p)));
  ASSERT_EQ(slots.size(), video.frame_count());
  for (std::size_t t = 0; t < slots.size(); ++t)
    for (std::size_t o = 0; o < video.object_count(); ++o) EXPECT_EQ(slots[t][o], video.masks[t][o]);
}

TEST(Evaluate, GroundTruthScoresOne) {
  const auto videos = GenerateDataset(testing::SmallTrainConfig(6));
  std::vector<PredictionFile> preds;
  for (const auto& v : videos) preds.push_back(GroundTruthPredictions(v));
  const auto reports = Evaluate(preds, videos, kMetricNames);
  ASSERT_EQ(reports.size(), kMetricNames.size());
  for (const auto& r : reports) {
    EXPECT_EQ(r.metric, kMetricNames[&r - &reports[0]]);
    EXPECT_DOUBLE_EQ(r.value, 1.0) << r.metric;
  }
}

TEST(Evaluate, EmptyPredictionsScoreZero) {
  const auto videos = GenerateDataset(testing::SmallTrainConfig(7));
  std::vector<PredictionFile> preds;
  for (const auto& v : videos) {
    auto p = GroundTruthPredictions(v);
    p.tubes.clear();
    preds.push_back(p);
  }
  for (const auto& r : Evaluate(preds, videos, {"video_ap", "vpq", "tube_miou"})) {
    EXPECT_EQ(r.value, 0.0) << r.metric;
  }
}

TEST(Evaluate, RejectsMismatchesAndUnknownMetrics) {
  const auto videos = GenerateDataset(testing::SmallTrainConfig(8));
  std::vector<PredictionFile> preds;
  for (const auto& v : videos) preds.push_back(GroundTruthPredictions(v));
  EXPECT_THROW(Evaluate(preds, videos, {"accuracy"}), std::invalid_argument);
  preds.pop_back();
  EXPECT_THROW(Evaluate(preds, videos, {"vpq"}), std::invalid_argument);
  preds.push_back(GroundTruthPredictions(videos.back()));
  preds.back().frames += 1;
  EXPECT_ANY_THROW(Evaluate(preds, videos, {"vpq"}));
}

TEST(Evaluate, PerVideoBreakdownAveragesToValue) {
  const auto videos = GenerateDataset(testing::SmallTrainConfig(9));
  std::vector<PredictionFile> preds;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    auto p = GroundTruthPredictions(videos[i]);
    if (i % 2) p.tubes.pop_back();
    preds.push_back(p);
  }
  for (const auto& r : Evaluate(preds, videos, {"vpq", "miou", "tube_miou"})) {
    ASSERT_EQ(r.breakdown.size(), videos.size()) << r.metric;
    double mean = 0;
    for (const auto& [k, v] : r.breakdown) mean += v / static_cast<double>(videos.size());
    EXPECT_NEAR(mean, r.value, 1e-12) << r.metric;
  }
}

}  // namespace
}  // namespace vidseg
