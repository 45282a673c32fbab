// Synthetic videos with ground-truth identities, plus a mock per-frame
// segmenter that emits object queries, class logits, mask logits, and pixel
// features for them.
//
// Objects are disks that move horizontally inside their own lane, so free
// motion never overlaps. Occlusions are scheduled: the hidden object leaves
// its lane, parks exactly behind a neighbour for a few frames, and returns.
// Swap hazards are occlusions between two objects of the same class.

#ifndef VIDSEG_SCENE_H_
#define VIDSEG_SCENE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "vidseg/nn.h"
#include "vidseg/tensor.h"

namespace vidseg {

using BinaryMask = std::vector<std::uint8_t>;  // row-major H*W, values 0/1

struct SceneConfig {
  std::size_t frames = 24;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t object_count = 4;
  std::size_t query_budget = 10;  // N
  std::size_t channels = 64;      // C
  std::size_t class_count = 5;    // background is the extra class |C|
  double min_speed = 0.5;         // px/frame
  double max_speed = 2.0;
  double occlusion_rate = 0.0;
  double swap_hazard_rate = 0.0;
  double query_noise_sigma = 0.1;
  bool permute_queries = true;
  double mask_margin = 6.0;
  double boundary_flip_rate = 0.2;  // sign flips on mask-boundary pixels
  double class_margin = 4.0;
  std::uint64_t seed = 0;
  // Shared by every video of a dataset: class prototypes and the background
  // embedding are drawn from it.
  std::uint64_t world_seed = 20240101;

  void Validate() const;
};

// Visible area below this fraction of the unoccluded area counts as occluded.
inline constexpr double kOcclusionThreshold = 0.3;

struct SceneEvent {
  enum class Kind { kOcclusion, kSwapHazard, kEntry, kExit };
  Kind kind;
  std::size_t frame;
  int object;
  int other = -1;

  bool operator==(const SceneEvent&) const = default;
};

std::string EventKindName(SceneEvent::Kind kind);
SceneEvent::Kind ParseEventKind(const std::string& name);

struct VisibilityInterval {
  std::size_t first;
  std::size_t last;  // inclusive
  bool operator==(const VisibilityInterval&) const = default;
};

struct SyntheticVideo {
  SceneConfig config;
  std::vector<int> classes;                     // per object id
  std::vector<std::vector<BinaryMask>> masks;   // [frame][object] visible
  std::vector<std::vector<std::size_t>> full_area;  // [frame][object] unoccluded
  std::vector<std::vector<VisibilityInterval>> visibility;  // per object
  std::vector<SceneEvent> events;

  std::size_t frame_count() const { return masks.size(); }
  std::size_t object_count() const { return classes.size(); }
  std::size_t VisibleArea(std::size_t frame, std::size_t object) const;
  bool IsVisible(std::size_t frame, std::size_t object) const;
  // Visible and not occluded: what the mock segmenter reports.
  bool IsDetectable(std::size_t frame, std::size_t object) const;
  // First frame with a visible pixel, or frame_count() if never.
  std::size_t FirstAppearance(std::size_t object) const;
};

// Deterministic in config.seed. Throws std::invalid_argument when the canvas
// cannot hold object_count lanes.
SyntheticVideo GenerateVideo(const SceneConfig& config);

// Derives visibility intervals and the occlusion/entry/exit part of the event
// log from masks. Used by GenerateVideo and by the dataset reader checks.
void DeriveVisibility(SyntheticVideo& video);

// Identity embeddings (row per object, norm sqrt(C)); deterministic in the
// video seed and class labels.
std::vector<std::vector<double>> CanonicalEmbeddings(const SceneConfig& config,
                                                     const std::vector<int>& classes);
std::vector<double> BackgroundEmbedding(const SceneConfig& config);

struct ObjectQuerySet {
  Tensor queries;         // [N, C]
  Tensor class_logits;    // [N, |C|+1], last column is background
  Tensor mask_logits;     // [N, H*W]
  Tensor pixel_features;  // [C+1, H*W], last row is the constant 1
  std::vector<int> row_objects;  // object id per row, -1 for background rows
};

// Mock segmenter output for one frame.
ObjectQuerySet StubSegment(const SyntheticVideo& video, std::size_t frame,
                           Rng& rng);
// Per-frame RNG stream used by inference so outputs do not depend on call
// order.
Rng StubRng(const SyntheticVideo& video, std::size_t frame);
std::vector<ObjectQuerySet> StubSegmentVideo(const SyntheticVideo& video);

}  // namespace vidseg

#endif  // VIDSEG_SCENE_H_
