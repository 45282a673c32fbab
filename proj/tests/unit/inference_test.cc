#include <gtest/gtest.h>

#include "test_util.h"
#include "vidseg/association.h"
#include "vidseg/inference.h"

namespace vidseg {
namespace {

using testing::ToVector;

TEST(AssembleVideo, PixelsGoToStrongestKeptSlot) {
  // Three slots, four pixels; slot 2 is background.
  const Tensor logits = Tensor::FromData({3, 4}, {2, -1, 0.5, 3,   //
                                                  1, 1, 0.7, -2,  //
                                                  9, 9, 9, 9});
  const std::vector<std::vector<double>> probs{{0.7, 0.2, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}};
  const auto r = AssembleVideo({logits}, probs);
  ASSERT_EQ(r.slot_masks.size(), 1u);
  EXPECT_EQ(r.slot_masks[0][0], (BinaryMask{1, 0, 0, 1}));
  EXPECT_EQ(r.slot_masks[0][1], (BinaryMask{0, 1, 1, 0}));
  EXPECT_EQ(r.slot_masks[0][2], (BinaryMask{0, 0, 0, 0}));
  ASSERT_EQ(r.tubes.size(), 2u);
  EXPECT_EQ(r.tubes[0].label, 0);
  EXPECT_EQ(r.tubes[0].identity, 0);
  EXPECT_DOUBLE_EQ(r.tubes[0].score, 0.7);
  EXPECT_EQ(r.tubes[1].label, 1);
}

TEST(AssembleVideo, MasksAreDisjoint) {
  Rng rng(1);
  std::vector<Tensor> frames;
  for (int t = 0; t < 4; ++t) frames.push_back(testing::RandomTensor({5, 30}, rng));
  std::vector<std::vector<double>> probs(5, {0.6, 0.3, 0.1});
  probs[3] = {0.1, 0.2, 0.7};
  const auto r = AssembleVideo(frames, probs);
  for (const auto& frame : r.slot_masks) {
    for (std::size_t p = 0; p < 30; ++p) {
      int owners = 0;
      for (const auto& m : frame) owners += m[p];
      EXPECT_LE(owners, 1);
    }
    EXPECT_EQ(std::count(frame[3].begin(), frame[3].end(), 1), 0);
  }
  for (const auto& tube : r.tubes) EXPECT_NE(tube.identity, 3);
}

TEST(AssembleVideo, EmptyVideoThrows) {
  EXPECT_THROW(AssembleVideo({}, {}), std::invalid_argument);
}

TEST(Stacking, OverTimeAndFrames) {
  const Tensor a = Tensor::FromData({2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::FromData({2, 2}, {5, 6, 7, 8});
  const Tensor nt = StackOverTime({a, b});
  EXPECT_EQ(nt.shape(), (Shape{2, 2, 2}));
  EXPECT_EQ(ToVector(nt), (std::vector<double>{1, 2, 5, 6, 3, 4, 7, 8}));
  const Tensor tn = StackFrames({a, b});
  EXPECT_EQ(ToVector(tn), (std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}));
}

TEST(Predict, HeuristicIsPerfectWithoutNoiseOrHazards) {
  auto scene = testing::TinyScene(2);
  scene.query_noise_sigma = 0.0;
  scene.occlusion_rate = 0.0;
  const auto video = GenerateVideo(scene);
  const auto r = PredictHeuristic(StubSegmentVideo(video));
  EXPECT_EQ(AssociationAccuracy(video, r.slot_masks).accuracy(), 1.0);
}

TEST(Predict, OnlineIsDeterministic) {
  const auto frames = StubSegmentVideo(GenerateVideo(testing::TinyScene(3)));
  auto tracker = ReferringTracker::Create(testing::SmallTrainConfig().tracker, 4);
  Rng rng(5);
  testing::Randomize(tracker.params(), rng, 0.3);
  const auto a = PredictOnline(tracker, frames);
  const auto b = PredictOnline(tracker, frames);
  EXPECT_EQ(a.slot_masks, b.slot_masks);
  EXPECT_EQ(a.tubes.size(), b.tubes.size());
}

TEST(Predict, FreshRefinerOnSingleFrameMatchesOnline) {
  auto scene = testing::TinyScene(6);
  scene.frames = 1;
  const auto frames = StubSegmentVideo(GenerateVideo(scene));
  const auto config = testing::SmallTrainConfig();
  auto tracker = ReferringTracker::Create(config.tracker, 7);
  Rng rng(8);
  testing::Randomize(tracker.params(), rng, 0.3);
  auto refiner = TemporalRefiner::Create(config.refiner, 9);
  refiner.CopyHeadsFrom(tracker);
  const auto online = PredictOnline(tracker, frames);
  const auto offline = PredictOffline(tracker, refiner, frames);
  EXPECT_EQ(online.slot_masks, offline.slot_masks);
  ASSERT_EQ(online.tubes.size(), offline.tubes.size());
  for (std::size_t i = 0; i < online.tubes.size(); ++i) {
    EXPECT_EQ(online.tubes[i].label, offline.tubes[i].label);
    EXPECT_NEAR(online.tubes[i].score, offline.tubes[i].score, 1e-12);
  }
}

TEST(Association, PerfectAndSwappedSlots) {
  auto scene = testing::TinyScene(10);
  scene.occlusion_rate = 0.0;
  const auto video = GenerateVideo(scene);
  std::vector<std::vector<BinaryMask>> slots(video.masks.begin(), video.masks.end());
  const auto perfect = AssociationAccuracy(video, slots);
  EXPECT_EQ(perfect.accuracy(), 1.0);
  EXPECT_EQ(perfect.total, video.object_count() * (video.frame_count() - 1));
  // Swapping the two slots from frame 3 on breaks every later frame.
  for (std::size_t t = 3; t < slots.size(); ++t) std::swap(slots[t][0], slots[t][1]);
  const auto swapped = AssociationAccuracy(video, slots);
  EXPECT_EQ(swapped.correct, 2 * 2u);
}

TEST(Association, MaskIouAndThreshold) {
  EXPECT_DOUBLE_EQ(MaskIou({1, 1, 0, 0}, {0, 1, 1, 0}), 1.0 / 3.0);
  const Tensor logits = Tensor::FromData({2, 3}, {0.5, 0.0, -1, -2, 3, 0});
  const auto masks = MasksFromLogits(logits);
  EXPECT_EQ(masks[0], (BinaryMask{1, 0, 0}));
  EXPECT_EQ(masks[1], (BinaryMask{0, 1, 0}));
}

}  // namespace
}  // namespace vidseg
