// Staged training loops: the tracker against the frozen stub segmenter, then
// the refiner against the frozen tracker.

#ifndef VIDSEG_TRAIN_H_
#define VIDSEG_TRAIN_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "vidseg/config.h"
#include "vidseg/refiner.h"
#include "vidseg/scene.h"
#include "vidseg/tracker.h"

namespace vidseg {

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossLogEntry {
  std::size_t iteration = 0;
  double learning_rate = 0.0;
  double grad_norm = 0.0;
  LossBreakdown loss;
};

using LossSink = std::function<void(const LossLogEntry&)>;

// Stub outputs for frames [begin, end) with a training-time noise stream.
std::vector<ObjectQuerySet> StubClip(const SyntheticVideo& video, std::size_t begin,
                                     std::size_t end, Rng& rng);

struct TrackerTrainResult {
  ReferringTracker tracker;
  std::vector<LossLogEntry> log;
  std::size_t noised_frames = 0;
  std::size_t tracked_frames = 0;
};

TrackerTrainResult TrainTracker(const TrainConfig& config,
                                const std::vector<SyntheticVideo>& videos,
                                const LossSink& sink = {});

struct RefinerTrainResult {
  TemporalRefiner refiner;
  std::vector<LossLogEntry> log;
  std::uint64_t tracker_hash_before = 0;
  std::uint64_t tracker_hash_after = 0;
};

// The tracker is only read; its parameters never join a graph.
RefinerTrainResult TrainRefiner(const TrainConfig& config, const ReferringTracker& tracker,
                                const std::vector<SyntheticVideo>& videos,
                                const LossSink& sink = {});

}  // namespace vidseg

#endif  // VIDSEG_TRAIN_H_
