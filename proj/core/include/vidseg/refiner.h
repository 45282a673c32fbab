// Temporal refiner: whole-video modelling of tracker-aligned queries.
//
// Each block mixes information along time (a short convolution, then
// attention over frames), across objects within a frame, and back into the
// segmenter queries of each frame. Output projections start at zero, so a
// fresh refiner is the identity on its input.

#ifndef VIDSEG_REFINER_H_
#define VIDSEG_REFINER_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vidseg/losses.h"
#include "vidseg/nn.h"
#include "vidseg/tensor.h"

namespace vidseg {

class ReferringTracker;

struct RefinerConfig {
  std::size_t channels = 64;
  std::size_t heads = 8;
  std::size_t block_count = 6;
  std::size_t class_count = 5;
  std::size_t kernel_width = 3;
  std::size_t ffn_hidden = 0;  // 0 means 2 * channels

  void Validate() const;
  std::size_t hidden_width() const { return ffn_hidden ? ffn_hidden : 2 * channels; }
};

struct TemporalBlock {
  LayerNormLayer conv_norm;
  Tensor conv_weight;  // [C, C, kernel]
  Tensor conv_bias;    // [C]
  LayerNormLayer time_norm;
  MultiHeadAttention time_attention;
  LayerNormLayer object_norm;
  MultiHeadAttention object_attention;
  LayerNormLayer cross_norm;
  LayerNormLayer seg_norm;
  MultiHeadAttention cross_attention;
  LayerNormLayer ffn_norm;
  FeedForward ffn;

  static TemporalBlock Create(ParameterSet& params, const std::string& name,
                              const RefinerConfig& config, Rng& rng);
  // q: [N, T, C], q_seg: [T, N, C], positions: [T, C].
  Tensor operator()(const Tensor& q, const Tensor& q_seg, const Tensor& positions) const;
};

struct TubeRepresentation {
  Tensor q_tr;        // [N, T, C]
  Tensor video_repr;  // [N, C]
  Tensor time_weights;  // [N, T], rows sum to 1
};

// Softmax over time of Linear(q_tr[i, t]) used to pool each tube.
struct TemporalWeighting {
  Tensor video_repr;
  Tensor weights;
};
TemporalWeighting ApplyTemporalWeighting(const Tensor& q_tr, const LinearLayer& scorer);

class TemporalRefiner {
 public:
  static TemporalRefiner Create(const RefinerConfig& config, std::uint64_t seed);

  const RefinerConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const std::vector<TemporalBlock>& blocks() const { return blocks_; }
  const LinearLayer& time_scorer() const { return time_scorer_; }

  // q_rt: [N, T, C] (tracker output), q_seg: [T, N, C].
  TubeRepresentation Refine(const Tensor& q_rt, const Tensor& q_seg) const;
  // Per-frame mask logits stacked to [N, T*P] and one class row per tube.
  // pixel_features holds one [C+1, P] tensor per frame.
  VideoLogits Decode(const TubeRepresentation& tube,
                     const std::vector<Tensor>& pixel_features) const;
  Tensor Project(const Tensor& x) const;

  // Copies the tracker's decoding heads so refined and tracked queries decode
  // identically before training.
  void CopyHeadsFrom(const ReferringTracker& tracker);

  std::size_t block_applications() const { return block_applications_; }
  void ResetCounters() const { block_applications_ = 0; }

 private:
  RefinerConfig config_;
  ParameterSet params_;
  std::vector<TemporalBlock> blocks_;
  LinearLayer time_scorer_;
  LayerNormLayer head_norm_;
  LinearLayer class_head_;
  LinearLayer mask_embed_;
  LinearLayer projection_;
  mutable std::size_t block_applications_ = 0;
};

}  // namespace vidseg

#endif  // VIDSEG_REFINER_H_
