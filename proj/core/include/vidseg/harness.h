// Glue between the models, the file formats, and the metrics: dataset
// generation, checkpoints for each stage, prediction files, evaluation.

#ifndef VIDSEG_HARNESS_H_
#define VIDSEG_HARNESS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "vidseg/config.h"
#include "vidseg/inference.h"
#include "vidseg/io.h"
#include "vidseg/metrics.h"
#include "vidseg/refiner.h"
#include "vidseg/scene.h"
#include "vidseg/tracker.h"

namespace vidseg {

// video_count videos of config.scene; video i uses a seed derived from
// (config.seed, i).
std::vector<SyntheticVideo> GenerateDataset(const TrainConfig& config);
std::uint64_t VideoSeed(std::uint64_t dataset_seed, std::size_t index);

// Dataset directory layout: video_0000.vsd, video_0001.vsd, ...
std::string VideoFileName(std::size_t index);
void SaveDataset(const std::vector<SyntheticVideo>& videos, const std::string& dir);
std::vector<SyntheticVideo> LoadDataset(const std::string& dir);

Checkpoint MakeTrackerCheckpoint(const ReferringTracker& tracker, const TrainConfig& config,
                                 std::size_t iterations);
ReferringTracker TrackerFromCheckpoint(const Checkpoint& checkpoint);

// Records the hash of the tracker the refiner was trained against.
Checkpoint MakeRefinerCheckpoint(const TemporalRefiner& refiner, const ReferringTracker& tracker,
                                 const TrainConfig& config, std::size_t iterations);
// Throws when the checkpoint was trained against a different tracker.
TemporalRefiner RefinerFromCheckpoint(const Checkpoint& checkpoint,
                                      const ReferringTracker& tracker);

PredictionFile ToPredictionFile(const VideoResult& result, const std::string& mode,
                                const SceneConfig& scene);
// Per-frame slot masks rebuilt from tube identities; slots without a tube are
// empty. At least one slot.
std::vector<std::vector<BinaryMask>> SlotMasks(const PredictionFile& predictions);

// Known names: video_ap, vpq, mvc, miou, tube_miou, association.
inline const std::vector<std::string> kMetricNames = {"video_ap", "vpq",       "mvc",
                                                      "miou",     "tube_miou", "association"};
inline constexpr std::size_t kMvcWindow = 8;

// predictions[i] belongs to videos[i]. Per-video metrics are averaged over
// videos, with one breakdown entry per video.
std::vector<MetricReport> Evaluate(const std::vector<PredictionFile>& predictions,
                                   const std::vector<SyntheticVideo>& videos,
                                   const std::vector<std::string>& metrics);

}  // namespace vidseg

#endif  // VIDSEG_HARNESS_H_
