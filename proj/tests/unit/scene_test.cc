#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "test_util.h"
#include "vidseg/io.h"
#include "vidseg/scene.h"
#include "vidseg/tracker.h"

namespace vidseg {
namespace {

double Cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

TEST(Scene, SingleObjectWithoutOcclusionIsAlwaysVisible) {
  SceneConfig c;
  c.object_count = 1;
  c.occlusion_rate = 0.0;
  c.seed = 5;
  const auto v = GenerateVideo(c);
  EXPECT_TRUE(v.events.empty());
  ASSERT_EQ(v.visibility[0].size(), 1u);
  EXPECT_EQ(v.visibility[0][0], (VisibilityInterval{0, c.frames - 1}));
  for (std::size_t t = 0; t < v.frame_count(); ++t) EXPECT_TRUE(v.IsDetectable(t, 0));
}

TEST(Scene, SameSeedIsBitwiseIdentical) {
  SceneConfig c;
  c.occlusion_rate = 0.5;
  c.swap_hazard_rate = 0.5;
  c.seed = 77;
  EXPECT_EQ(EncodeVideo(GenerateVideo(c)), EncodeVideo(GenerateVideo(c)));
  SceneConfig d = c;
  d.seed = 78;
  EXPECT_NE(EncodeVideo(GenerateVideo(c)), EncodeVideo(GenerateVideo(d)));
}

TEST(Scene, OcclusionFrequencyMatchesRate) {
  // Fraction of objects with at least one occlusion event, 200 videos.
  std::size_t occluded = 0, objects = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    SceneConfig c;
    c.object_count = 4;
    c.frames = 30;
    c.occlusion_rate = 0.5;
    c.seed = seed;
    const auto v = GenerateVideo(c);
    std::set<int> hit;
    for (const auto& e : v.events)
      if (e.kind == SceneEvent::Kind::kOcclusion) hit.insert(e.object);
    occluded += hit.size();
    objects += c.object_count;
  }
  const double freq = static_cast<double>(occluded) / static_cast<double>(objects);
  const double sigma = std::sqrt(0.25 / static_cast<double>(objects));
  EXPECT_NEAR(freq, 0.5, 3 * sigma);
}

TEST(Scene, InvariantsHoldAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    SceneConfig c;
    c.occlusion_rate = 0.6;
    c.swap_hazard_rate = 0.6;
    c.seed = seed;
    const auto v = GenerateVideo(c);
    const std::size_t pixels = c.height * c.width;
    for (std::size_t t = 0; t < v.frame_count(); ++t) {
      std::vector<int> owners(pixels, 0);
      for (std::size_t o = 0; o < v.object_count(); ++o)
        for (std::size_t p = 0; p < pixels; ++p) owners[p] += v.masks[t][o][p];
      for (int n : owners) ASSERT_LE(n, 1) << "seed " << seed << " frame " << t;
    }
    for (std::size_t o = 0; o < v.object_count(); ++o) {
      EXPECT_FALSE(v.visibility[o].empty());
      EXPECT_LT(v.FirstAppearance(o), v.frame_count());
    }
    // Occlusion events are exactly the frames where detectability is lost.
    std::set<std::pair<std::size_t, int>> expected;
    for (std::size_t o = 0; o < v.object_count(); ++o)
      for (std::size_t t = 1; t < v.frame_count(); ++t) {
        const auto area = static_cast<double>(v.VisibleArea(t, o));
        const auto prev_area = static_cast<double>(v.VisibleArea(t - 1, o));
        const bool occ = area < kOcclusionThreshold * static_cast<double>(v.full_area[t][o]);
        const bool prev = prev_area < kOcclusionThreshold * static_cast<double>(v.full_area[t - 1][o]);
        if (occ && !prev) expected.insert({t, static_cast<int>(o)});
      }
    std::set<std::pair<std::size_t, int>> logged;
    for (const auto& e : v.events) {
      if (e.kind == SceneEvent::Kind::kOcclusion) logged.insert({e.frame, e.object});
      if (e.kind == SceneEvent::Kind::kSwapHazard) {
        EXPECT_EQ(v.classes[e.object], v.classes[e.other]);
      }
    }
    EXPECT_EQ(logged, expected) << "seed " << seed;
  }
}

TEST(Scene, CanvasTooSmallThrows) {
  SceneConfig c;
  c.height = 8;
  c.width = 8;
  c.object_count = 8;
  EXPECT_THROW(GenerateVideo(c), std::invalid_argument);
}

TEST(Scene, InvalidRatesRejected) {
  SceneConfig c;
  c.occlusion_rate = 1.5;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c.occlusion_rate = 0.0;
  c.object_count = c.query_budget + 1;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
}

TEST(Scene, CanonicalEmbeddingsAreSeparated) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SceneConfig c;
    c.seed = seed;
    c.object_count = 6;
    const auto v = GenerateVideo(c);
    const auto e = CanonicalEmbeddings(c, v.classes);
    for (std::size_t i = 0; i < e.size(); ++i) {
      double norm = 0;
      for (double x : e[i]) norm += x * x;
      EXPECT_NEAR(std::sqrt(norm), std::sqrt(static_cast<double>(c.channels)), 1e-9);
      for (std::size_t j = i + 1; j < e.size(); ++j) EXPECT_LT(Cosine(e[i], e[j]), 0.9);
    }
  }
}

TEST(Stub, NoiselessUnpermutedQueriesAreCanonical) {
  SceneConfig c;
  c.query_noise_sigma = 0.0;
  c.permute_queries = false;
  c.seed = 3;
  const auto v = GenerateVideo(c);
  const auto e = CanonicalEmbeddings(c, v.classes);
  Rng rng(1);
  const auto f = StubSegment(v, 0, rng);
  EXPECT_EQ(f.queries.shape(), (Shape{c.query_budget, c.channels}));
  EXPECT_EQ(f.class_logits.shape(), (Shape{c.query_budget, c.class_count + 1}));
  EXPECT_EQ(f.mask_logits.shape(), (Shape{c.query_budget, c.height * c.width}));
  for (std::size_t o = 0; o < v.object_count(); ++o) {
    EXPECT_EQ(f.row_objects[o], static_cast<int>(o));
    for (std::size_t i = 0; i < c.channels; ++i) EXPECT_EQ(f.queries.at({o, i}), e[o][i]);
  }
  // Surplus rows: background class dominant and every mask logit negative.
  for (std::size_t row = v.object_count(); row < c.query_budget; ++row) {
    EXPECT_EQ(f.row_objects[row], -1);
    for (std::size_t j = 0; j < c.class_count; ++j)
      EXPECT_GT(f.class_logits.at({row, c.class_count}), f.class_logits.at({row, j}));
    for (std::size_t p = 0; p < c.height * c.width; ++p) EXPECT_LT(f.mask_logits.at({row, p}), 0.0);
  }
}

TEST(Stub, PermutationIsReproducible) {
  SceneConfig c;
  c.seed = 4;
  const auto v = GenerateVideo(c);
  const auto a = StubSegmentVideo(v);
  const auto b = StubSegmentVideo(v);
  for (std::size_t t = 0; t < a.size(); ++t) {
    EXPECT_EQ(a[t].row_objects, b[t].row_objects);
    EXPECT_EQ(testing::ToVector(a[t].queries), testing::ToVector(b[t].queries));
  }
  bool moved = false;
  for (std::size_t t = 1; t < a.size(); ++t) moved |= a[t].row_objects != a[0].row_objects;
  EXPECT_TRUE(moved);
}

TEST(Stub, CosineHungarianRecoversCorrespondenceWithoutHazards) {
  std::size_t frames = 0, correct = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SceneConfig c;
    c.query_noise_sigma = 0.1;
    c.seed = 1000 + seed;
    const auto v = GenerateVideo(c);
    const auto f = StubSegmentVideo(v);
    for (std::size_t t = 1; t < f.size(); ++t) {
      const auto perm = HungarianPrematch(f[t - 1].queries, f[t].queries);
      bool ok = true;
      for (std::size_t row = 0; row < perm.size(); ++row) {
        const int obj = f[t - 1].row_objects[row];
        if (obj >= 0 && f[t].row_objects[perm[row]] != obj) ok = false;
      }
      ++frames;
      correct += ok;
    }
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(frames), 0.99);
}

}  // namespace
}  // namespace vidseg
