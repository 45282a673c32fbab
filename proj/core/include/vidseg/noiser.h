// Training-time corruption of the tracker's initial object representations.
//
// Each strategy maps an N x C query matrix to a new N x C matrix without
// touching the input. The optional hooks pin the random draws so individual
// cases can be checked exactly; the optional record reports what was drawn.

#ifndef VIDSEG_NOISER_H_
#define VIDSEG_NOISER_H_

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "vidseg/nn.h"
#include "vidseg/tensor.h"

namespace vidseg {

enum class NoiseStrategy { kWeightedAverage, kCropConcat, kShuffle };

std::string NoiseStrategyName(NoiseStrategy strategy);
NoiseStrategy ParseNoiseStrategy(const std::string& name);

struct NoiseConfig {
  NoiseStrategy strategy = NoiseStrategy::kWeightedAverage;
  double probability = 0.8;

  void Validate() const;
};

struct NoiseHooks {
  std::optional<double> alpha;          // weighted average mixing weight
  std::optional<std::size_t> partner;   // j
  std::optional<std::size_t> cut;       // k
  std::optional<bool> fire;             // Bernoulli outcome in ApplyNoise
};

struct NoiseRecord {
  std::vector<double> alpha;
  std::vector<std::size_t> partner;
  std::vector<std::size_t> cut;
  std::vector<std::size_t> permutation;  // output row r = input row permutation[r]
};

// Row i -> alpha * Q[i] + (1 - alpha) * Q[j].
Tensor WeightedAverageNoise(const Tensor& q, Rng& rng, const NoiseHooks& hooks = {},
                            NoiseRecord* record = nullptr);
// Row i -> concat(Q[i][:k], Q[j][k:]).
Tensor CropConcatNoise(const Tensor& q, Rng& rng, const NoiseHooks& hooks = {},
                       NoiseRecord* record = nullptr);
// Uniformly random row permutation.
Tensor ShuffleNoise(const Tensor& q, Rng& rng, NoiseRecord* record = nullptr);

struct NoiseOutcome {
  Tensor queries;
  bool applied = false;
};

// One Bernoulli(probability) draw; on success the configured strategy runs,
// otherwise `q` is returned unchanged.
NoiseOutcome ApplyNoise(const Tensor& q, const NoiseConfig& config, Rng& rng,
                        const NoiseHooks& hooks = {}, NoiseRecord* record = nullptr);

}  // namespace vidseg

#endif  // VIDSEG_NOISER_H_
