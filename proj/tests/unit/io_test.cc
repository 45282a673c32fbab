#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>

#include "test_util.h"
#include "vidseg/io.h"

namespace vidseg {
namespace {

std::size_t ParseOffset(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "no ParseError";
  return ~std::size_t{0};
}

TEST(Rle, RoundTripsRandomMasks) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto m = testing::RandomMask(1 + i % 37, rng, (i % 5) / 4.0);
    const auto runs = EncodeRle(m);
    std::size_t total = 0;
    for (auto r : runs) total += r;
    EXPECT_EQ(total, m.size());
    EXPECT_EQ(DecodeRle(runs, m.size()), m);
  }
}

TEST(Rle, StartsWithBackgroundRun) {
  EXPECT_EQ(EncodeRle({1, 1, 0, 1}), (std::vector<std::uint32_t>{0, 2, 1, 1}));
  EXPECT_EQ(EncodeRle({0, 0, 0}), (std::vector<std::uint32_t>{3}));
  EXPECT_THROW(DecodeRle({2, 2}, 5), std::invalid_argument);
}

TEST(Container, RejectsBadMagicAtOffsetZero) {
  auto bytes = EncodeContainer(kDatasetMagic, kDatasetVersion, {{"a", 1}}, "xyz");
  bytes[2] = 'Q';
  EXPECT_EQ(ParseOffset([&] { DecodeContainer(bytes, kDatasetMagic, 1); }), 0u);
  EXPECT_EQ(ParseOffset([&] { DecodeContainer("VSEG", kDatasetMagic, 1); }), 0u);
}

TEST(Container, RejectsUnknownMajorAtVersionField) {
  const auto bytes = EncodeContainer(kPredictionMagic, {2, 0}, {{"a", 1}}, "");
  EXPECT_EQ(ParseOffset([&] { DecodeContainer(bytes, kPredictionMagic, 1); }), 8u);
}

TEST(Container, AcceptsNewerMinor) {
  const auto bytes = EncodeContainer(kCheckpointMagic, {1, 7}, {{"k", "v"}}, "payload");
  const auto c = DecodeContainer(bytes, kCheckpointMagic, 1);
  EXPECT_EQ(c.version.minor, 7);
  EXPECT_EQ(c.header["k"], "v");
  EXPECT_EQ(c.payload, "payload");
  EXPECT_EQ(bytes.substr(c.payload_offset), "payload");
}

TEST(Container, HeaderParseErrorReportsByteOffset) {
  auto bytes = EncodeContainer(kDatasetMagic, kDatasetVersion, {{"abc", 12345}}, "");
  const std::size_t header_start = 8 + 4 + 8;
  const std::size_t bad = bytes.find("12345");
  bytes[bad + 2] = '#';
  EXPECT_EQ(ParseOffset([&] { DecodeContainer(bytes, kDatasetMagic, 1); }), bad + 2);
  EXPECT_GT(bad, header_start);
}

TEST(Container, TruncatedHeaderLength) {
  auto bytes = EncodeContainer(kDatasetMagic, kDatasetVersion, {{"a", 1}}, "");
  const std::uint64_t huge = 1u << 20;
  std::memcpy(bytes.data() + 12, &huge, sizeof huge);
  EXPECT_THROW(DecodeContainer(bytes, kDatasetMagic, 1), ParseError);
}

TEST(VideoFile, RoundTripIsBitwise) {
  SceneConfig c = testing::TinyScene(9);
  c.occlusion_rate = 0.7;
  c.swap_hazard_rate = 0.7;
  const auto v = GenerateVideo(c);
  const auto bytes = EncodeVideo(v);
  const auto back = DecodeVideo(bytes);
  EXPECT_EQ(EncodeVideo(back), bytes);
  EXPECT_EQ(back.masks, v.masks);
  EXPECT_EQ(back.classes, v.classes);
  EXPECT_EQ(back.events.size(), v.events.size());
}

TEST(VideoFile, TruncatedPayloadFails) {
  const auto bytes = EncodeVideo(GenerateVideo(testing::TinyScene(10)));
  EXPECT_THROW(DecodeVideo(bytes.substr(0, bytes.size() - 3)), ParseError);
  EXPECT_THROW(DecodeVideo(bytes + "x"), ParseError);
  EXPECT_THROW(DecodePredictions(bytes), ParseError);
}

TEST(PredictionFile, RoundTripIsBitwise) {
  Rng rng(11);
  PredictionFile p;
  p.mode = "offline";
  p.frames = 3;
  p.height = 4;
  p.width = 5;
  for (int i = 0; i < 4; ++i) {
    TubePrediction t;
    for (int f = 0; f < 3; ++f) t.masks.push_back(testing::RandomMask(20, rng));
    t.label = i % 3;
    t.score = 0.1 * i + 1.0 / 3.0;
    t.identity = i;
    p.tubes.push_back(t);
  }
  const auto bytes = EncodePredictions(p);
  const auto back = DecodePredictions(bytes);
  EXPECT_EQ(back.mode, "offline");
  ASSERT_EQ(back.tubes.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(back.tubes[i].masks, p.tubes[i].masks);
    EXPECT_EQ(back.tubes[i].score, p.tubes[i].score);
    EXPECT_EQ(back.tubes[i].label, p.tubes[i].label);
    EXPECT_EQ(back.tubes[i].identity, p.tubes[i].identity);
  }
  EXPECT_EQ(EncodePredictions(back), bytes);
}

TEST(Checkpoint, RoundTripsParametersExactly) {
  ParameterSet params;
  Rng rng(12);
  params.Add("a.weight", testing::RandomTensor({3, 4}, rng, 1.0, true));
  params.Add("b", testing::RandomTensor({7}, rng, 1e-300, true));
  Checkpoint ck{"tracker", {{"iterations", 5}}, SnapshotParameters(params)};
  const auto path = (std::filesystem::temp_directory_path() / "vidseg_io_test.ckpt").string();
  SaveCheckpoint(ck, path);
  const auto back = LoadCheckpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.stage, "tracker");
  EXPECT_EQ(back.metadata["iterations"], 5);

  ParameterSet other;
  other.Add("a.weight", Tensor::Zeros({3, 4}, true));
  other.Add("b", Tensor::Zeros({7}, true));
  RestoreParameters(back, other);
  EXPECT_EQ(other.Hash(), params.Hash());

  ParameterSet wrong;
  wrong.Add("a.weight", Tensor::Zeros({4, 3}, true));
  wrong.Add("b", Tensor::Zeros({7}, true));
  EXPECT_THROW(RestoreParameters(back, wrong), std::exception);
}

TEST(Checkpoint, SnapshotCopiesValues) {
  ParameterSet params;
  Tensor w = params.Add("w", Tensor::Full({2}, 1.0, true));
  const auto snap = SnapshotParameters(params);
  w.mutable_data()[0] = 5.0;
  EXPECT_EQ(snap[0].second.data()[0], 1.0);
}

}  // namespace
}  // namespace vidseg
