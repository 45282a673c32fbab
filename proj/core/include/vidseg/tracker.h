// Referring tracker: aligns per-frame object queries to identity slots fixed at
// the first frame by denoising an initial guess against running references.

#ifndef VIDSEG_TRACKER_H_
#define VIDSEG_TRACKER_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vidseg/losses.h"
#include "vidseg/nn.h"
#include "vidseg/noiser.h"
#include "vidseg/scene.h"
#include "vidseg/tensor.h"

namespace vidseg {

struct TrackerConfig {
  std::size_t channels = 64;
  std::size_t heads = 8;
  std::size_t block_count = 6;
  std::size_t class_count = 5;
  std::size_t ffn_hidden = 0;  // 0 means 2 * channels

  void Validate() const;
  std::size_t hidden_width() const { return ffn_hidden ? ffn_hidden : 2 * channels; }
};

// Referring cross-attention on N x C operands: id + MHA(q, k, v).
Tensor Rca(const Tensor& id, const Tensor& q, const Tensor& k, const Tensor& v,
           const MultiHeadAttention& attention);

struct TdBlock {
  LayerNormLayer ref_norm;
  LayerNormLayer seg_norm;
  LayerNormLayer self_norm;
  LayerNormLayer ffn_norm;
  MultiHeadAttention cross;
  MultiHeadAttention self;
  FeedForward ffn;

  static TdBlock Create(ParameterSet& params, const std::string& name,
                        const TrackerConfig& config, Rng& rng);
  // Pre-norm RCA -> self-attention -> FFN, each with a residual.
  Tensor operator()(const Tensor& refs, const Tensor& initial, const Tensor& q_seg) const;
};

struct ReferenceState {
  Tensor refs;                  // N x C
  std::size_t frame_index = 0;  // 1-based frame that produced refs
};

struct TrackerFrameOutput {
  Tensor q_rt;
  ReferenceState next;
};

class ReferringTracker {
 public:
  static ReferringTracker Create(const TrackerConfig& config, std::uint64_t seed);

  const TrackerConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const std::vector<TdBlock>& blocks() const { return blocks_; }

  // Ref^1 = MLP(Q_Seg^1). Throws std::logic_error unless frame == 1.
  ReferenceState InitReference(const Tensor& q_seg, std::size_t frame = 1) const;
  // Runs every TD block in order starting from `initial`.
  Tensor Cascade(const Tensor& refs, const Tensor& initial, const Tensor& q_seg) const;
  TrackerFrameOutput TrackFirstFrame(const Tensor& q_seg) const;
  // Frame `frame` (1-based) must directly follow state.frame_index.
  TrackerFrameOutput TrackFrame(const ReferenceState& state, const Tensor& q_seg,
                                const Tensor& initial, std::size_t frame) const;
  // Ref^T = LayerNorm(Linear(Q_RT^T)) + Ref^{T-1}.
  Tensor UpdateReference(const Tensor& refs, const Tensor& q_rt) const;

  // Class logits [N, K+1] and mask logits [N, P] for one frame.
  FramePrediction Decode(const Tensor& q_rt, const Tensor& pixel_features) const;
  // Unit-norm contrastive embeddings of N x C rows.
  Tensor Project(const Tensor& x) const;

  std::size_t block_applications() const { return block_applications_; }
  void ResetCounters() const { block_applications_ = 0; }

 private:
  TrackerConfig config_;
  ParameterSet params_;
  LinearLayer init_hidden_;
  LinearLayer init_output_;
  LinearLayer update_linear_;
  LayerNormLayer update_norm_;
  std::vector<TdBlock> blocks_;
  LayerNormLayer head_norm_;
  LinearLayer class_head_;
  LinearLayer mask_embed_;
  LinearLayer projection_;
  mutable std::size_t block_applications_ = 0;
};

// pi with pi[i] = row of `cur` assigned to row i of `prev`, minimizing the
// summed negative cosine similarity. Zero rows have similarity 0.
std::vector<std::size_t> HungarianPrematch(const Tensor& prev, const Tensor& cur);

// Reorders the rows of a query set; row r of the result is row perm[r].
ObjectQuerySet PermuteRows(const ObjectQuerySet& frame, const std::vector<std::size_t>& perm);

enum class TrackMode { kTrain, kInfer };

struct TrackOptions {
  TrackMode mode = TrackMode::kInfer;
  NoiseConfig noise;
  Rng* rng = nullptr;  // required in training mode
};

struct TrackedVideo {
  std::vector<Tensor> q_rt;
  std::vector<ReferenceState> states;
  std::vector<FramePrediction> predictions;
  // Segmenter output chained through Hungarian pre-matching.
  std::vector<ObjectQuerySet> prematched;
  std::vector<std::vector<std::size_t>> permutations;
  std::vector<bool> noised;
  std::size_t noiser_calls = 0;
};

TrackedVideo TrackVideo(const ReferringTracker& tracker,
                        const std::vector<ObjectQuerySet>& frames,
                        const TrackOptions& options = {});

// Chained pre-matching only: what the heuristic baseline reports.
std::vector<ObjectQuerySet> PrematchVideo(const std::vector<ObjectQuerySet>& frames,
                                          std::vector<std::vector<std::size_t>>* perms = nullptr);

}  // namespace vidseg

#endif  // VIDSEG_TRACKER_H_
