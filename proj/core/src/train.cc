#include "vidseg/train.h"

#include <cmath>
#include <sstream>

#include "vidseg/inference.h"
#include "vidseg/ops.h"
#include "vidseg/optim.h"

namespace vidseg {
namespace {

constexpr std::uint64_t kTrackerInitTag = 0x7472616bULL;
constexpr std::uint64_t kRefinerInitTag = 0x72656669ULL;
constexpr std::uint64_t kTrackerDataTag = 0x64617461ULL;
constexpr std::uint64_t kRefinerDataTag = 0x72646174ULL;

std::uint64_t Mix(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t x = seed ^ (tag * 0x9E3779B97F4A7C15ULL);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void RequireVideos(const std::vector<SyntheticVideo>& videos, std::size_t clip) {
  if (videos.empty()) throw std::invalid_argument("training needs at least one video");
  for (const auto& v : videos) {
    if (v.frame_count() < clip) {
      throw std::invalid_argument("video with " + std::to_string(v.frame_count()) +
                                  " frames is shorter than the clip length " +
                                  std::to_string(clip));
    }
  }
}

void RequireFinite(const Tensor& loss, const LossBreakdown& parts, std::size_t iteration) {
  if (std::isfinite(loss.item())) return;
  std::ostringstream msg;
  msg << "non-finite loss at iteration " << iteration << " (classification "
      << parts.classification << ", dice " << parts.dice << ", mask_ce " << parts.mask_ce
      << ", contrastive " << parts.contrastive << ")";
  throw TrainingDivergedError(msg.str());
}

}  // namespace

std::vector<ObjectQuerySet> StubClip(const SyntheticVideo& video, std::size_t begin,
                                     std::size_t end, Rng& rng) {
  std::vector<ObjectQuerySet> frames;
  for (std::size_t t = begin; t < end; ++t) frames.push_back(StubSegment(video, t, rng));
  return frames;
}

TrackerTrainResult TrainTracker(const TrainConfig& config,
                                const std::vector<SyntheticVideo>& videos,
                                const LossSink& sink) {
  config.Validate();
  const StageConfig& stage = config.tracker_stage;
  RequireVideos(videos, stage.clip_length);
  TrackerTrainResult result{ReferringTracker::Create(config.tracker, Mix(config.seed, kTrackerInitTag)),
                            {}, 0, 0};
  ReferringTracker& tracker = result.tracker;
  Optimizer optimizer(tracker.params(), stage.optimizer, stage.iterations);
  Rng rng(Mix(config.seed, kTrackerDataTag));
  const std::size_t clip = stage.clip_length;

  for (std::size_t it = 0; it < stage.iterations; ++it) {
    const auto& video =
        videos[std::uniform_int_distribution<std::size_t>(0, videos.size() - 1)(rng)];
    const std::size_t start =
        std::uniform_int_distribution<std::size_t>(0, video.frame_count() - clip)(rng);
    const auto frames = StubClip(video, start, start + clip, rng);
    TrackOptions options;
    options.mode = TrackMode::kTrain;
    options.noise = config.noise;
    options.rng = &rng;
    const TrackedVideo tracked = TrackVideo(tracker, frames, options);
    for (bool n : tracked.noised) result.noised_frames += n;
    result.tracked_frames += tracked.noised.size() - 1;

    const ClipTarget target = MakeClipTarget(video, start, start + clip);
    std::vector<FramePrediction> segmenter;
    for (const auto& f : tracked.prematched) segmenter.push_back({f.class_logits, f.mask_logits});
    const Assignment assignment = TrackerMatching(tracked.predictions, target, it,
                                                  stage.iterations, segmenter, config.loss);
    LossLogEntry entry;
    entry.iteration = it;
    Tensor loss = TrackerLoss(tracked.predictions, target, assignment, config.loss, &entry.loss);

    if (config.tracker_contrastive) {
      std::vector<Tensor> embeddings;
      for (const auto& s : tracked.states) embeddings.push_back(tracker.Project(s.refs));
      std::vector<std::size_t> first(target.object_count());
      for (std::size_t g = 0; g < first.size(); ++g) first[g] = target.FirstAppearance(g);
      std::vector<ContrastiveItem> items;
      for (std::size_t t = 0; t < clip; ++t) {
        std::vector<bool> active(assignment.row_to_col.size(), false);
        for (std::size_t r = 0; r < active.size(); ++r) {
          const int g = assignment.row_to_col[r];
          active[r] = g != Assignment::kUnassigned && first[g] <= t;
        }
        auto frame_items = BuildCiTracker(t > 0 ? embeddings[t - 1] : Tensor(), embeddings[t],
                                          t + 1 < clip ? embeddings[t + 1] : Tensor(), active);
        items.insert(items.end(), frame_items.begin(), frame_items.end());
      }
      bool usable = false;
      for (const auto& item : items) usable = usable || !item.degenerate();
      if (usable) {
        const Tensor cl = ContrastiveLoss(items);
        entry.loss.contrastive = cl.item();
        loss = Add(loss, Scale(cl, config.loss.contrastive));
      }
    }
    entry.loss.total = loss.item();
    RequireFinite(loss, entry.loss, it);
    loss.Backward();
    entry.learning_rate = ScheduledLearningRate(stage.optimizer, it, stage.iterations);
    entry.grad_norm = optimizer.Step(it);
    if (sink) sink(entry);
    result.log.push_back(entry);
  }
  return result;
}

RefinerTrainResult TrainRefiner(const TrainConfig& config, const ReferringTracker& tracker,
                                const std::vector<SyntheticVideo>& videos,
                                const LossSink& sink) {
  config.Validate();
  const StageConfig& stage = config.refiner_stage;
  const std::size_t clip = stage.clip_length;
  RequireVideos(videos, clip);
  RefinerTrainResult result{TemporalRefiner::Create(config.refiner, Mix(config.seed, kRefinerInitTag)),
                            {}, tracker.params().Hash(), 0};
  TemporalRefiner& refiner = result.refiner;
  refiner.CopyHeadsFrom(tracker);
  Optimizer optimizer(refiner.params(), stage.optimizer, stage.iterations);
  MemoryBank bank(config.memory_bank_capacity);
  Rng rng(Mix(config.seed, kRefinerDataTag));

  for (std::size_t it = 0; it < stage.iterations; ++it) {
    const auto& video =
        videos[std::uniform_int_distribution<std::size_t>(0, videos.size() - 1)(rng)];
    const std::size_t start =
        std::uniform_int_distribution<std::size_t>(0, video.frame_count() - clip)(rng);
    const auto frames = StubClip(video, start, start + clip, rng);
    TrackedVideo tracked;
    {
      NoGradGuard frozen;
      tracked = TrackVideo(tracker, frames);
    }
    std::vector<Tensor> seg, features;
    for (const auto& f : tracked.prematched) {
      seg.push_back(f.queries);
      features.push_back(f.pixel_features);
    }
    const TubeRepresentation tube =
        refiner.Refine(StackOverTime(tracked.q_rt), StackFrames(seg));
    const VideoLogits logits = refiner.Decode(tube, features);
    const ClipTarget target = MakeClipTarget(video, start, start + clip);

    std::vector<ContrastiveItem> items;
    if (config.refiner_contrastive) {
      const FrameTarget stacked = StackClipTarget(target);
      const Assignment match = Hungarian(
          MatchCostMatrix({logits.class_logits, logits.mask_logits}, stacked, config.loss));
      std::vector<int> labels(match.row_to_col.size(), -1);
      for (std::size_t r = 0; r < labels.size(); ++r) {
        if (match.row_to_col[r] != Assignment::kUnassigned) {
          labels[r] = stacked.classes[match.row_to_col[r]];
        }
      }
      items = BuildCiRefiner(refiner.Project(tube.q_tr), labels, bank);
    }
    LossLogEntry entry;
    entry.iteration = it;
    const Tensor loss = RefinerLoss(logits, target, items, config.loss, nullptr, &entry.loss);
    RequireFinite(loss, entry.loss, it);
    loss.Backward();
    entry.learning_rate = ScheduledLearningRate(stage.optimizer, it, stage.iterations);
    entry.grad_norm = optimizer.Step(it);
    if (sink) sink(entry);
    result.log.push_back(entry);
  }
  result.tracker_hash_after = tracker.params().Hash();
  return result;
}

}  // namespace vidseg
