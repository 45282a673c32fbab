#include "vidseg/noiser.h"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace vidseg {
namespace {

void CheckMatrix(const Tensor& q, const char* op) {
  if (!q.defined() || q.rank() != 2) {
    throw ShapeError(op, "expected an N x C matrix");
  }
}

std::size_t DrawIndex(std::size_t bound, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, bound - 1)(rng);
}

}  // namespace

std::string NoiseStrategyName(NoiseStrategy strategy) {
  switch (strategy) {
    case NoiseStrategy::kWeightedAverage: return "weighted_average";
    case NoiseStrategy::kCropConcat: return "crop_concat";
    case NoiseStrategy::kShuffle: return "shuffle";
  }
  return "unknown";
}

NoiseStrategy ParseNoiseStrategy(const std::string& name) {
  if (name == "weighted_average") return NoiseStrategy::kWeightedAverage;
  if (name == "crop_concat") return NoiseStrategy::kCropConcat;
  if (name == "shuffle") return NoiseStrategy::kShuffle;
  throw std::invalid_argument("unknown noise strategy: " + name);
}

void NoiseConfig::Validate() const {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw std::invalid_argument("noise probability must lie in [0, 1]");
  }
}

Tensor WeightedAverageNoise(const Tensor& q, Rng& rng, const NoiseHooks& hooks,
                            NoiseRecord* record) {
  CheckMatrix(q, "weighted_average_noise");
  const std::size_t n = q.dim(0), c = q.dim(1);
  const auto src = q.data();
  std::vector<double> out(n * c);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double alpha = hooks.alpha ? *hooks.alpha : unit(rng);
    const std::size_t j = hooks.partner ? *hooks.partner : DrawIndex(n, rng);
    if (j >= n) throw std::out_of_range("weighted_average_noise: partner out of range");
    for (std::size_t k = 0; k < c; ++k) {
      out[i * c + k] = alpha * src[i * c + k] + (1.0 - alpha) * src[j * c + k];
    }
    if (record) {
      record->alpha.push_back(alpha);
      record->partner.push_back(j);
    }
  }
  return Tensor::FromData(q.shape(), std::move(out));
}

Tensor CropConcatNoise(const Tensor& q, Rng& rng, const NoiseHooks& hooks,
                       NoiseRecord* record) {
  CheckMatrix(q, "crop_concat_noise");
  const std::size_t n = q.dim(0), c = q.dim(1);
  const auto src = q.data();
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cut = hooks.cut ? *hooks.cut : DrawIndex(c, rng);
    const std::size_t j = hooks.partner ? *hooks.partner : DrawIndex(n, rng);
    if (j >= n || cut >= c) throw std::out_of_range("crop_concat_noise: hook out of range");
    for (std::size_t k = 0; k < c; ++k) {
      out[i * c + k] = k < cut ? src[i * c + k] : src[j * c + k];
    }
    if (record) {
      record->cut.push_back(cut);
      record->partner.push_back(j);
    }
  }
  return Tensor::FromData(q.shape(), std::move(out));
}

Tensor ShuffleNoise(const Tensor& q, Rng& rng, NoiseRecord* record) {
  CheckMatrix(q, "shuffle_noise");
  const std::size_t n = q.dim(0), c = q.dim(1);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto src = q.data();
  std::vector<double> out(n * c);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(src.begin() + perm[r] * c, c, out.begin() + r * c);
  }
  if (record) record->permutation = perm;
  return Tensor::FromData(q.shape(), std::move(out));
}

NoiseOutcome ApplyNoise(const Tensor& q, const NoiseConfig& config, Rng& rng,
                        const NoiseHooks& hooks, NoiseRecord* record) {
  config.Validate();
  CheckMatrix(q, "apply_noise");
  const bool fire = hooks.fire ? *hooks.fire
                               : std::bernoulli_distribution(config.probability)(rng);
  if (!fire) return {q, false};
  switch (config.strategy) {
    case NoiseStrategy::kWeightedAverage:
      return {WeightedAverageNoise(q, rng, hooks, record), true};
    case NoiseStrategy::kCropConcat:
      return {CropConcatNoise(q, rng, hooks, record), true};
    case NoiseStrategy::kShuffle:
      return {ShuffleNoise(q, rng, record), true};
  }
  return {q, false};
}

}  // namespace vidseg
