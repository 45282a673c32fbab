#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "test_util.h"
#include "vidseg/contrastive.h"
#include "vidseg/gradcheck.h"
#include "vidseg/ops.h"

namespace vidseg {
namespace {

using testing::RandomTensor;
using testing::ToVector;

Tensor Unit(Rng& rng, std::size_t c) {
  return L2Normalize(RandomTensor({c}, rng)).Detach();
}

double Dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

// Direct evaluation of the multi-positive ratio form.
double ReferenceLoss(const std::vector<ContrastiveItem>& items) {
  double total = 0;
  std::size_t used = 0;
  for (const auto& it : items) {
    if (it.degenerate()) continue;
    double pos = 0, neg = 0;
    for (const auto& k : it.positives) pos += std::exp(Dot(it.anchor, k));
    for (const auto& k : it.negatives) neg += std::exp(Dot(it.anchor, k));
    total += -std::log(pos / (pos + neg));
    ++used;
  }
  return total / static_cast<double>(used);
}

TEST(ContrastiveLoss, SymmetricCaseIsLogTwo) {
  const Tensor v = Tensor::FromData({2}, {1, 0});
  const Tensor k = Tensor::FromData({2}, {0.3, 0.7});
  EXPECT_NEAR(ContrastiveLoss({{v, {k}, {k}}}).item(), std::log(2.0), 1e-15);
}

TEST(ContrastiveLoss, SaturatesToZero) {
  const Tensor v = Tensor::FromData({1}, {1});
  const Tensor kp = Tensor::FromData({1}, {10});
  const Tensor kn = Tensor::FromData({1}, {-10});
  EXPECT_LT(ContrastiveLoss({{v, {kp}, {kn}}}).item(), 1e-8);
}

TEST(ContrastiveLoss, MatchesDirectSummation) {
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<ContrastiveItem> items;
    for (int i = 0; i < 3; ++i) {
      items.push_back({Unit(rng, 6), {Unit(rng, 6), Unit(rng, 6)},
                       {Unit(rng, 6), Unit(rng, 6), Unit(rng, 6)}});
    }
    EXPECT_NEAR(ContrastiveLoss(items).item(), ReferenceLoss(items), 1e-12);
  }
}

TEST(ContrastiveLoss, DegenerateItemsSkippedAllDegenerateThrows) {
  Rng rng(2);
  const ContrastiveItem good{Unit(rng, 4), {Unit(rng, 4)}, {Unit(rng, 4)}};
  const ContrastiveItem no_neg{Unit(rng, 4), {Unit(rng, 4)}, {}};
  const ContrastiveItem no_pos{Unit(rng, 4), {}, {Unit(rng, 4)}};
  EXPECT_NEAR(ContrastiveLoss({good, no_neg, no_pos}).item(), ContrastiveLoss({good}).item(), 1e-15);
  EXPECT_THROW(ContrastiveLoss({no_neg, no_pos}), std::invalid_argument);
  EXPECT_THROW(ContrastiveLoss({}), std::invalid_argument);
}

TEST(ContrastiveLoss, MonotoneInSimilarities) {
  // Scaling a positive toward the anchor lowers the loss; a negative raises it.
  const Tensor v = Tensor::FromData({2}, {1, 0});
  const Tensor other = Tensor::FromData({2}, {0.2, 0.5});
  double prev_pos = INFINITY, prev_neg = -INFINITY;
  for (double s = -2; s <= 2; s += 0.25) {
    const Tensor k = Tensor::FromData({2}, {s, 0.1});
    const double lp = ContrastiveLoss({{v, {k, other}, {other}}}).item();
    const double ln = ContrastiveLoss({{v, {other}, {k, other}}}).item();
    EXPECT_LT(lp, prev_pos);
    EXPECT_GT(ln, prev_neg);
    prev_pos = lp;
    prev_neg = ln;
  }
}

TEST(ContrastiveLoss, InvariantToOrderOfPositivesAndNegatives) {
  Rng rng(3);
  ContrastiveItem a{Unit(rng, 5), {Unit(rng, 5), Unit(rng, 5), Unit(rng, 5)},
                    {Unit(rng, 5), Unit(rng, 5)}};
  ContrastiveItem b = a;
  std::reverse(b.positives.begin(), b.positives.end());
  std::reverse(b.negatives.begin(), b.negatives.end());
  EXPECT_NEAR(ContrastiveLoss({a}).item(), ContrastiveLoss({b}).item(), 1e-15);
}

TEST(ContrastiveLoss, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  Tensor v = RandomTensor({4}, rng, 1.0, true);
  Tensor p1 = RandomTensor({4}, rng, 1.0, true), p2 = RandomTensor({4}, rng, 1.0, true);
  Tensor n1 = RandomTensor({4}, rng, 1.0, true), n2 = RandomTensor({4}, rng, 1.0, true);
  const auto r = CheckGradients([&] { return ContrastiveLoss({{v, {p1, p2}, {n1, n2}}}); },
                                {v, p1, p2, n1, n2});
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(MomentumAverage, IdenticalFramesGiveBetaOne) {
  Rng rng(5);
  const Tensor q = RandomTensor({3, 4}, rng);
  MomentumAverage ma(q);
  ma.Update(q);
  ma.Update(q);
  for (double b : ma.beta()) EXPECT_NEAR(b, 1.0, 1e-12);
  for (std::size_t i = 0; i < q.numel(); ++i) EXPECT_NEAR(ma.average().data()[i], q.data()[i], 1e-12);
}

TEST(MomentumAverage, NegativeHistoryClampsBetaToZero) {
  const Tensor q1 = Tensor::FromData({1, 2}, {1, 0});
  const Tensor q2 = Tensor::FromData({1, 2}, {-1, 0.2});
  MomentumAverage ma(q1);
  ma.Update(q2);
  EXPECT_EQ(ma.beta()[0], 0.0);
  EXPECT_EQ(ToVector(ma.average()), ToVector(q1));
}

TEST(MomentumAverage, HandSetCosinesOneThenHalf) {
  const double s = std::sqrt(3.0) / 2.0;
  const Tensor q1 = Tensor::FromData({1, 2}, {1, 0});
  const Tensor q2 = Tensor::FromData({1, 2}, {0.5, s});
  const Tensor q3 = Tensor::FromData({1, 2}, {2, 0});  // cos 1 with q1, 0.5 with q2
  MomentumAverage ma(q1);
  EXPECT_EQ(ma.frames_seen(), 1u);
  ma.Update(q2);
  EXPECT_NEAR(ma.beta()[0], 0.5, 1e-15);
  const std::vector<double> ma2{0.5 * 1 + 0.5 * 0.5, 0.5 * 0 + 0.5 * s};
  ma.Update(q3);
  EXPECT_NEAR(ma.beta()[0], 0.75, 1e-15);
  EXPECT_NEAR(ma.average().at({0, 0}), 0.25 * ma2[0] + 0.75 * 2.0, 1e-15);
  EXPECT_NEAR(ma.average().at({0, 1}), 0.25 * ma2[1] + 0.75 * 0.0, 1e-15);
}

TEST(MomentumAverage, StaysInsideObservedHull) {
  Rng rng(6);
  const std::size_t n = 3, c = 4;
  std::vector<Tensor> frames;
  for (int t = 0; t < 8; ++t) {
    Tensor q = RandomTensor({n, c}, rng);
    // Mostly positive so beta is usually nonzero.
    for (double& x : q.mutable_data()) x = std::abs(x) + 0.1;
    frames.push_back(q);
  }
  MomentumAverage ma(frames[0]);
  for (std::size_t t = 1; t < frames.size(); ++t) {
    ma.Update(frames[t]);
    for (double b : ma.beta()) {
      EXPECT_GE(b, 0.0);
      EXPECT_LE(b, 1.0);
    }
    for (std::size_t i = 0; i < n * c; ++i) {
      double lo = INFINITY, hi = -INFINITY;
      for (std::size_t u = 0; u <= t; ++u) {
        lo = std::min(lo, frames[u].data()[i]);
        hi = std::max(hi, frames[u].data()[i]);
      }
      EXPECT_GE(ma.average().data()[i], lo - 1e-12);
      EXPECT_LE(ma.average().data()[i], hi + 1e-12);
    }
  }
}

TEST(MemoryBank, FifoEviction) {
  MemoryBank bank(8);
  for (int i = 0; i < 10; ++i) bank.Push({static_cast<double>(i)}, i % 2);
  EXPECT_EQ(bank.size(), 8u);
  EXPECT_EQ(bank.entries().front().embedding[0], 2.0);
  EXPECT_EQ(bank.entries().back().embedding[0], 9.0);
}

TEST(CiSegmenter, Counting) {
  Rng rng(7);
  const Tensor one = RandomTensor({1, 3}, rng);
  EXPECT_TRUE(BuildCiSegmenter(one, one, one, {true}, {true}).empty());

  const Tensor prev = RandomTensor({2, 3}, rng), cur = RandomTensor({2, 3}, rng);
  const auto items = BuildCiSegmenter(prev, cur, cur, {true, true}, {true, false});
  ASSERT_EQ(items.size(), 2u);
  for (const auto& it : items) {
    EXPECT_EQ(it.negatives.size(), 1u);
    EXPECT_LE(it.positives.size(), 2u);
  }
  EXPECT_EQ(items[0].positives.size(), 2u);
  EXPECT_EQ(items[1].positives.size(), 1u);
}

TEST(CiSegmenter, FirstFrameUsesMomentumOnly) {
  Rng rng(8);
  const Tensor cur = RandomTensor({3, 4}, rng);
  const MomentumAverage ma(cur);
  const auto items = BuildCiSegmenter(Tensor(), cur, ma.average(), {true, false, true}, {});
  ASSERT_EQ(items.size(), 2u);
  for (const auto& it : items) {
    ASSERT_EQ(it.positives.size(), 1u);
    EXPECT_EQ(ToVector(it.positives[0]), ToVector(it.anchor));
    EXPECT_EQ(it.negatives.size(), 2u);
  }
}

TEST(CiTracker, PositivesFollowAvailableNeighbours) {
  Rng rng(9);
  const Tensor a = RandomTensor({3, 4}, rng), b = RandomTensor({3, 4}, rng), c = RandomTensor({3, 4}, rng);
  for (const auto& it : BuildCiTracker(a, b, c)) {
    EXPECT_EQ(it.positives.size(), 2u);
    EXPECT_EQ(it.negatives.size(), 2u);
  }
  for (const auto& it : BuildCiTracker(b, c, Tensor())) EXPECT_EQ(it.positives.size(), 1u);
  const auto items = BuildCiTracker(a, b, c, {false, true, false});
  ASSERT_EQ(items.size(), 1u);
  EXPECT_EQ(ToVector(items[0].anchor), (std::vector<double>{b.at({1, 0}), b.at({1, 1}), b.at({1, 2}), b.at({1, 3})}));
}

TEST(CiRefiner, CountsAndBank) {
  Rng rng(10);
  MemoryBank bank(16);
  const Tensor q = RandomTensor({2, 2, 3}, rng);
  const auto first = BuildCiRefiner(q, {0, 1}, bank);
  ASSERT_EQ(first.size(), 2u);
  for (const auto& it : first) {
    EXPECT_EQ(it.positives.size(), 1u);
    EXPECT_EQ(it.negatives.size(), 1u);
  }
  EXPECT_EQ(bank.size(), 2u);

  MemoryBank same(16);
  for (int i = 0; i < 5; ++i) same.Push({0.1 * i, 0, 1}, 4);
  same.Push({1, 1, 1}, 2);
  const Tensor q3 = RandomTensor({3, 4, 3}, rng);
  const auto items = BuildCiRefiner(q3, {4, 0, -1}, same);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].negatives.size(), 2u + 5u);
  EXPECT_EQ(items[0].positives.size(), 3u);
  EXPECT_EQ(items[1].negatives.size(), 2u);
  // Anchors are the last frame; only labelled rows enter the bank.
  EXPECT_EQ(same.size(), 8u);
  EXPECT_EQ(same.entries().back().label, 0);
  EXPECT_EQ(items[0].anchor.at({2}), q3.at({0, 3, 2}));
}

}  // namespace
}  // namespace vidseg
