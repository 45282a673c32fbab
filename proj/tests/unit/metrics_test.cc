#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "metric_oracles.h"
#include "test_util.h"
#include "vidseg/metrics.h"

namespace vidseg {
namespace {

TubePrediction Tube(MaskSequence masks, int label, double score = 1.0) {
  TubePrediction t;
  t.masks = std::move(masks);
  t.label = label;
  t.score = score;
  return t;
}

double MeanOf(const std::map<std::string, double>& m) {
  double s = 0;
  for (const auto& [k, v] : m) s += v;
  return s / static_cast<double>(m.size());
}

TEST(TubeIou, PooledOverFrames) {
  const MaskSequence a{{1, 1, 0, 0}, {0, 0, 0, 0}};
  const MaskSequence b{{0, 1, 1, 0}, {0, 0, 0, 0}};
  EXPECT_DOUBLE_EQ(TubeIou(a, b), 1.0 / 3.0);
  const MaskSequence c{{1, 0}, {0, 1}};
  const MaskSequence d{{1, 0}, {1, 0}};
  EXPECT_DOUBLE_EQ(TubeIou(c, d), 1.0 / 3.0);
}

TEST(TubeIou, EmptyTubesAndMismatches) {
  EXPECT_EQ(TubeIou({{0, 0}}, {{0, 0}}), 1.0);
  EXPECT_THROW(TubeIou({{0, 0}}, {{0, 0}, {0, 0}}), std::invalid_argument);
  EXPECT_THROW(TubeIou({{0, 0}}, {{0, 0, 0}}), std::invalid_argument);
}

TEST(TubeMiou, MatchesBestAssignment) {
  const auto g1 = Tube({{1, 1, 0, 0}}, 0), g2 = Tube({{0, 0, 1, 1}}, 1);
  EXPECT_DOUBLE_EQ(TubeMiou({g2, g1}, {g1, g2}), 1.0);
  EXPECT_DOUBLE_EQ(TubeMiou({Tube({{1, 0, 0, 0}}, 0)}, {g1, g2}), 0.25);
  EXPECT_DOUBLE_EQ(TubeMiou({}, {g1}), 0.0);
  EXPECT_DOUBLE_EQ(TubeMiou({g1}, {}), 1.0);
}

TEST(VideoAp, HandComputedTwoDetections) {
  // GT has 10 pixels. A (0.9) overlaps 6 of them, B (0.8) is exact.
  BinaryMask gt(20, 0), a(20, 0);
  for (int p = 0; p < 10; ++p) gt[p] = 1;
  for (int p = 0; p < 6; ++p) a[p] = 1;
  VideoTubes v;
  v.ground_truth = {Tube({gt}, 2)};
  v.predictions = {Tube({a}, 2, 0.9), Tube({gt}, 2, 0.8)};
  // Thresholds <= 0.6 give AP 1, the seven above give 0.5.
  const auto r = VideoAp({v});
  EXPECT_NEAR(r.value, (3 * 1.0 + 7 * 0.5) / 10.0, 1e-12);
  EXPECT_NEAR(r.extras.at("ap50"), 1.0, 1e-12);
  EXPECT_NEAR(r.extras.at("ap75"), 0.5, 1e-12);
  EXPECT_NEAR(MeanOf(r.breakdown), r.value, 1e-12);
}

TEST(VideoAp, MatchesOracleOnRandomVideos) {
  Rng rng(7);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, 2);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<VideoTubes> videos(3);
    for (auto& v : videos) {
      for (int g = 0; g < 3; ++g) {
        MaskSequence m;
        for (int t = 0; t < 3; ++t) m.push_back(testing::RandomMask(16, rng, 0.3));
        v.ground_truth.push_back(Tube(m, label(rng)));
      }
      for (int p = 0; p < 5; ++p) {
        // Half of the predictions are perturbed copies of ground truth.
        MaskSequence m = v.ground_truth[p % 3].masks;
        if (p >= 3) {
          for (auto& f : m) f = testing::RandomMask(16, rng, 0.3);
        } else {
          std::bernoulli_distribution flip(0.1);
          for (auto& f : m)
            for (auto& b : f) if (flip(rng)) b ^= 1;
        }
        v.predictions.push_back(Tube(m, label(rng) == 0 ? label(rng) : v.ground_truth[p % 3].label,
                                     score(rng)));
      }
    }
    const auto r = VideoAp(videos);
    EXPECT_NEAR(r.value, testing::OracleAp(videos), 1e-12) << "trial " << trial;
    EXPECT_NEAR(MeanOf(r.breakdown), r.value, 1e-12);
  }
}

TEST(VideoAp, EmptyPredictionsScoreZeroAndPerfectScoresOne) {
  const auto video = GenerateVideo(testing::TinyScene(3));
  VideoTubes v;
  v.ground_truth = GroundTruthTubes(video);
  EXPECT_EQ(VideoAp({v}).value, 0.0);
  v.predictions = v.ground_truth;
  const auto r = VideoAp({v});
  EXPECT_DOUBLE_EQ(r.value, 1.0);
  EXPECT_DOUBLE_EQ(r.extras.at("ar10"), 1.0);
}

TEST(Vpq, WindowOneIsMeanFramePq) {
  Rng rng(9);
  const auto video = GenerateVideo(testing::TinyScene(4));
  const auto gt = GroundTruthTubes(video);
  // Prediction: GT with one tube dropped on odd frames.
  auto pred = gt;
  for (std::size_t t = 1; t < video.frame_count(); t += 2)
    std::fill(pred[0].masks[t].begin(), pred[0].masks[t].end(), 0);
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < video.frame_count(); ++t) {
    bool defined = false;
    const double pq = FramePq(pred, gt, t, &defined);
    if (defined) {
      sum += pq;
      ++count;
    }
  }
  ASSERT_GT(count, 0u);
  EXPECT_NEAR(Vpq(pred, gt, {1}).value, sum / static_cast<double>(count), 1e-12);
}

TEST(Vpq, IdentitySwapHurtsLongerWindows) {
  const std::size_t frames = 6, pixels = 8;
  MaskSequence a(frames, BinaryMask(pixels, 0)), b(frames, BinaryMask(pixels, 0));
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t p = 0; p < 4; ++p) {
      a[t][p] = 1;
      b[t][p + 4] = 1;
    }
  const std::vector<TubePrediction> gt{Tube(a, 1), Tube(b, 1)};
  MaskSequence sa = a, sb = b;
  for (std::size_t t = 3; t < frames; ++t) std::swap(sa[t], sb[t]);
  const std::vector<TubePrediction> pred{Tube(sa, 1), Tube(sb, 1)};
  double prev = 2.0;
  std::vector<double> values;
  for (std::size_t k : kVpqWindows) {
    const double v = Vpq(pred, gt, {k}).value;
    EXPECT_LE(v, prev + 1e-12) << "window " << k;
    prev = v;
    values.push_back(v);
  }
  EXPECT_DOUBLE_EQ(values.front(), 1.0);
  EXPECT_LT(values.back(), 0.5);
  const auto r = Vpq(pred, gt);
  EXPECT_NEAR(MeanOf(r.breakdown), r.value, 1e-12);
}

TEST(Vpq, OverlappingTubesRejected) {
  const std::vector<TubePrediction> tubes{Tube({{1, 1}}, 0), Tube({{0, 1}}, 1)};
  EXPECT_THROW(Vpq(tubes, tubes), std::invalid_argument);
}

TEST(Vpq, PerfectAndEmptyPredictions) {
  const auto gt = GroundTruthTubes(GenerateVideo(testing::TinyScene(5)));
  EXPECT_DOUBLE_EQ(Vpq(gt, gt).value, 1.0);
  EXPECT_DOUBLE_EQ(Vpq({}, gt).value, 0.0);
}

TEST(Mvc, FlickeringPixel) {
  // Both pixels are class 1 throughout; pixel 1 flickers to 0 on odd frames.
  const SemanticVideo gt(4, {1, 1});
  const SemanticVideo pred{{1, 1}, {1, 0}, {1, 1}, {1, 0}};
  EXPECT_DOUBLE_EQ(Mvc(pred, gt, 1).value, 0.75);
  EXPECT_DOUBLE_EQ(Mvc(pred, gt, 2).value, 0.5);
  EXPECT_DOUBLE_EQ(Mvc(pred, gt, 4).value, 0.5);
  EXPECT_THROW(Mvc(pred, gt, 5), std::invalid_argument);
  EXPECT_THROW(Mvc(pred, gt, 0), std::invalid_argument);
}

TEST(Mvc, SingleFrameWindowIsPerFrameRecall) {
  Rng rng(11);
  std::uniform_int_distribution<int> cls(0, 2);
  SemanticVideo gt(5, std::vector<int>(12)), pred(5, std::vector<int>(12));
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t p = 0; p < 12; ++p) {
      gt[t][p] = cls(rng);
      pred[t][p] = cls(rng);
    }
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    double sum = 0;
    std::size_t frames = 0;
    for (std::size_t t = 0; t < 5; ++t) {
      std::size_t support = 0, agree = 0;
      for (std::size_t p = 0; p < 12; ++p) {
        support += gt[t][p] == c;
        agree += gt[t][p] == c && pred[t][p] == c;
      }
      if (support == 0) continue;
      sum += static_cast<double>(agree) / static_cast<double>(support);
      ++frames;
    }
    total += sum / static_cast<double>(frames);
  }
  const auto r = Mvc(pred, gt, 1);
  EXPECT_NEAR(r.value, total / 3.0, 1e-12);
  EXPECT_NEAR(MeanOf(r.breakdown), r.value, 1e-12);
}

TEST(Miou, TwoByTwoHandCase) {
  const SemanticVideo gt{{0, 1, 1, 1}};
  const SemanticVideo pred{{0, 0, 1, 1}};
  // Class 0: 1/2; class 1: 2/3.
  EXPECT_DOUBLE_EQ(Miou(pred, gt).value, (0.5 + 2.0 / 3.0) / 2.0);
  EXPECT_DOUBLE_EQ(Miou(gt, gt).value, 1.0);
}

TEST(Metrics, GroundTruthTubesFollowMasks) {
  const auto video = GenerateVideo(testing::TinyScene(6));
  const auto tubes = GroundTruthTubes(video);
  ASSERT_EQ(tubes.size(), video.object_count());
  for (std::size_t o = 0; o < tubes.size(); ++o) {
    EXPECT_EQ(tubes[o].label, video.classes[o]);
    for (std::size_t t = 0; t < video.frame_count(); ++t) EXPECT_EQ(tubes[o].masks[t], video.masks[t][o]);
  }
  const auto sem = SemanticMaps(tubes, video.frame_count(), 256, 3);
  EXPECT_DOUBLE_EQ(Mvc(sem, sem, 2).value, 1.0);
}

TEST(Metrics, ReportsSerializeWithSortedKeys) {
  MetricReport a{"vpq", 0.5, {{"window_1", 0.5}}, {}};
  MetricReport b{"miou", 0.25, {}, {}};
  const auto doc = nlohmann::json::parse(ReportsToJson({a, b}));
  EXPECT_EQ(doc.begin().key(), "miou");
  EXPECT_EQ(doc["vpq"]["breakdown"]["window_1"], 0.5);
}

}  // namespace
}  // namespace vidseg
