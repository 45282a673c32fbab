#include "vidseg/harness.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <stdexcept>

#include "vidseg/association.h"

namespace vidseg {
namespace {

namespace fs = std::filesystem;

std::string VideoKey(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "video_%04zu", i);
  return buf;
}

// Averages per-video reports; breakdown holds the per-video values and
// extras are averaged over the videos that report them.
MetricReport AverageOverVideos(const std::string& name, const std::vector<MetricReport>& per_video) {
  MetricReport out;
  out.metric = name;
  if (per_video.empty()) return out;
  std::map<std::string, std::pair<double, std::size_t>> extras;
  for (std::size_t i = 0; i < per_video.size(); ++i) {
    out.value += per_video[i].value / static_cast<double>(per_video.size());
    out.breakdown[VideoKey(i)] = per_video[i].value;
    for (const auto& [k, v] : per_video[i].extras) {
      extras[k].first += v;
      ++extras[k].second;
    }
  }
  for (const auto& [k, acc] : extras) out.extras[k] = acc.first / static_cast<double>(acc.second);
  return out;
}

void RequireMatches(const PredictionFile& p, const SyntheticVideo& v, std::size_t index) {
  if (p.frames != v.frame_count() || p.height != v.config.height || p.width != v.config.width) {
    throw std::invalid_argument("predictions for " + VideoKey(index) +
                                " do not match the video's frames or resolution");
  }
}

}  // namespace

std::uint64_t VideoSeed(std::uint64_t dataset_seed, std::size_t index) {
  std::uint64_t x = dataset_seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::vector<SyntheticVideo> GenerateDataset(const TrainConfig& config) {
  std::vector<SyntheticVideo> videos;
  videos.reserve(config.video_count);
  for (std::size_t i = 0; i < config.video_count; ++i) {
    SceneConfig scene = config.scene;
    scene.seed = VideoSeed(config.seed, i);
    videos.push_back(GenerateVideo(scene));
  }
  return videos;
}

std::string VideoFileName(std::size_t index) { return VideoKey(index) + ".vsd"; }

void SaveDataset(const std::vector<SyntheticVideo>& videos, const std::string& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < videos.size(); ++i) {
    SaveVideo(videos[i], (fs::path(dir) / VideoFileName(i)).string());
  }
}

std::vector<SyntheticVideo> LoadDataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir);
  std::vector<SyntheticVideo> videos;
  for (std::size_t i = 0;; ++i) {
    const fs::path path = fs::path(dir) / VideoFileName(i);
    if (!fs::exists(path)) break;
    videos.push_back(LoadVideo(path.string()));
  }
  if (videos.empty()) throw std::runtime_error("no videos in " + dir);
  return videos;
}

Checkpoint MakeTrackerCheckpoint(const ReferringTracker& tracker, const TrainConfig& config,
                                 std::size_t iterations) {
  Checkpoint ck;
  ck.stage = "tracker";
  ck.metadata = {{"config", ToJson(config)},
                 {"config_hash", ConfigHash(config)},
                 {"seed", config.seed},
                 {"iterations", iterations},
                 {"parameter_hash", tracker.params().Hash()}};
  ck.tensors = SnapshotParameters(tracker.params());
  return ck;
}

ReferringTracker TrackerFromCheckpoint(const Checkpoint& checkpoint) {
  if (checkpoint.stage != "tracker") {
    throw std::invalid_argument("expected a tracker checkpoint, got stage '" + checkpoint.stage + "'");
  }
  const TrainConfig config = TrainConfigFromJson(checkpoint.metadata.at("config"));
  ReferringTracker tracker = ReferringTracker::Create(config.tracker, 0);
  RestoreParameters(checkpoint, tracker.params());
  return tracker;
}

Checkpoint MakeRefinerCheckpoint(const TemporalRefiner& refiner, const ReferringTracker& tracker,
                                 const TrainConfig& config, std::size_t iterations) {
  Checkpoint ck;
  ck.stage = "refiner";
  ck.metadata = {{"config", ToJson(config)},
                 {"config_hash", ConfigHash(config)},
                 {"seed", config.seed},
                 {"iterations", iterations},
                 {"parameter_hash", refiner.params().Hash()},
                 {"tracker_hash", tracker.params().Hash()}};
  ck.tensors = SnapshotParameters(refiner.params());
  return ck;
}

TemporalRefiner RefinerFromCheckpoint(const Checkpoint& checkpoint,
                                      const ReferringTracker& tracker) {
  if (checkpoint.stage != "refiner") {
    throw std::invalid_argument("expected a refiner checkpoint, got stage '" + checkpoint.stage + "'");
  }
  if (checkpoint.metadata.at("tracker_hash").get<std::uint64_t>() != tracker.params().Hash()) {
    throw std::invalid_argument("refiner checkpoint was trained against a different tracker");
  }
  const TrainConfig config = TrainConfigFromJson(checkpoint.metadata.at("config"));
  TemporalRefiner refiner = TemporalRefiner::Create(config.refiner, 0);
  RestoreParameters(checkpoint, refiner.params());
  return refiner;
}

PredictionFile ToPredictionFile(const VideoResult& result, const std::string& mode,
                                const SceneConfig& scene) {
  PredictionFile p;
  p.mode = mode;
  p.frames = result.slot_masks.size();
  p.height = scene.height;
  p.width = scene.width;
  p.tubes = result.tubes;
  return p;
}

std::vector<std::vector<BinaryMask>> SlotMasks(const PredictionFile& predictions) {
  int slots = 1;
  for (const auto& t : predictions.tubes) {
    if (t.identity < 0) throw std::invalid_argument("slot_masks: tube without identity");
    slots = std::max(slots, t.identity + 1);
  }
  const BinaryMask empty(predictions.height * predictions.width, 0);
  std::vector<std::vector<BinaryMask>> out(
      predictions.frames, std::vector<BinaryMask>(static_cast<std::size_t>(slots), empty));
  for (const auto& t : predictions.tubes)
    for (std::size_t f = 0; f < predictions.frames; ++f) out[f][t.identity] = t.masks[f];
  return out;
}

std::vector<MetricReport> Evaluate(const std::vector<PredictionFile>& predictions,
                                   const std::vector<SyntheticVideo>& videos,
                                   const std::vector<std::string>& metrics) {
  if (predictions.size() != videos.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(predictions.size()) +
                                " prediction files for " + std::to_string(videos.size()) +
                                " videos");
  }
  for (std::size_t i = 0; i < videos.size(); ++i) RequireMatches(predictions[i], videos[i], i);
  std::vector<std::vector<TubePrediction>> gts;
  for (const auto& v : videos) gts.push_back(GroundTruthTubes(v));

  std::vector<MetricReport> reports;
  for (const auto& name : metrics) {
    if (name == "video_ap") {
      std::vector<VideoTubes> all;
      for (std::size_t i = 0; i < videos.size(); ++i) all.push_back({predictions[i].tubes, gts[i]});
      reports.push_back(VideoAp(all));
    } else if (name == "vpq") {
      std::vector<MetricReport> per;
      for (std::size_t i = 0; i < videos.size(); ++i) per.push_back(Vpq(predictions[i].tubes, gts[i]));
      reports.push_back(AverageOverVideos(name, per));
    } else if (name == "mvc" || name == "miou") {
      std::vector<MetricReport> per;
      for (std::size_t i = 0; i < videos.size(); ++i) {
        const auto& v = videos[i];
        const int background = static_cast<int>(v.config.class_count);
        const std::size_t pixels = v.config.height * v.config.width;
        const auto pred = SemanticMaps(predictions[i].tubes, v.frame_count(), pixels, background);
        const auto gt = SemanticMaps(gts[i], v.frame_count(), pixels, background);
        per.push_back(name == "mvc" ? Mvc(pred, gt, std::min(kMvcWindow, v.frame_count()))
                                    : Miou(pred, gt));
      }
      reports.push_back(AverageOverVideos(name, per));
    } else if (name == "tube_miou") {
      std::vector<MetricReport> per;
      for (std::size_t i = 0; i < videos.size(); ++i) {
        MetricReport r;
        r.value = TubeMiou(predictions[i].tubes, gts[i]);
        per.push_back(r);
      }
      reports.push_back(AverageOverVideos(name, per));
    } else if (name == "association") {
      AssociationCount count;
      for (std::size_t i = 0; i < videos.size(); ++i) {
        count += AssociationAccuracy(videos[i], SlotMasks(predictions[i]));
      }
      MetricReport r;
      r.metric = name;
      r.value = count.accuracy();
      r.extras["correct"] = static_cast<double>(count.correct);
      r.extras["total"] = static_cast<double>(count.total);
      reports.push_back(r);
    } else {
      throw std::invalid_argument("unknown metric: " + name);
    }
  }
  return reports;
}

}  // namespace vidseg
