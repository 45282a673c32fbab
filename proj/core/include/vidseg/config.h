// Training and data configuration, stored as a versioned JSON document.

#ifndef VIDSEG_CONFIG_H_
#define VIDSEG_CONFIG_H_

#include <array>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "vidseg/losses.h"
#include "vidseg/noiser.h"
#include "vidseg/optim.h"
#include "vidseg/refiner.h"
#include "vidseg/scene.h"
#include "vidseg/tracker.h"

namespace vidseg {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr std::array<double, 2> kNoiseProbabilityPresets = {0.5, 0.8};

struct StageConfig {
  std::size_t clip_length = 5;
  std::size_t iterations = 2000;
  OptimizerConfig optimizer;
};

struct TrainConfig {
  SceneConfig scene;
  std::size_t video_count = 32;
  TrackerConfig tracker;
  RefinerConfig refiner;
  NoiseConfig noise;
  LossWeights loss;
  StageConfig tracker_stage;
  StageConfig refiner_stage{21, 1000, {}};
  bool tracker_contrastive = true;
  bool refiner_contrastive = true;
  std::size_t memory_bank_capacity = 256;
  std::uint64_t seed = 0;

  // Checks internal consistency, including that the model widths match the
  // scene the stub segmenter emits.
  void Validate() const;
};

nlohmann::json SceneToJson(const SceneConfig& scene);
// Every scene key must be present; throws nlohmann::json exceptions otherwise.
SceneConfig SceneFromJson(const nlohmann::json& doc);

nlohmann::json ToJson(const TrainConfig& config);
// Missing keys keep their defaults; unknown keys and a different schema
// version are rejected.
TrainConfig TrainConfigFromJson(const nlohmann::json& doc);

TrainConfig LoadTrainConfig(const std::string& path);
void SaveTrainConfig(const TrainConfig& config, const std::string& path);

// Applies "section.key=value" (JSON-typed value, bare strings allowed).
void ApplyOverride(TrainConfig& config, const std::string& assignment);

// Stable FNV-1a hash of the canonical JSON serialization.
std::uint64_t ConfigHash(const TrainConfig& config);

}  // namespace vidseg

#endif  // VIDSEG_CONFIG_H_
