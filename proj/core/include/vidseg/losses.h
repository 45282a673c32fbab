// Matching costs, segmentation losses, and the staged objectives used to
// train the tracker and the refiner.

#ifndef VIDSEG_LOSSES_H_
#define VIDSEG_LOSSES_H_

#include <cstddef>
#include <vector>

#include "vidseg/contrastive.h"
#include "vidseg/hungarian.h"
#include "vidseg/scene.h"
#include "vidseg/tensor.h"

namespace vidseg {

struct LossWeights {
  double contrastive = 2.0;
  double classification = 2.0;
  double dice = 5.0;
  double mask_ce = 5.0;

  void Validate() const;
};

inline constexpr double kDiceSmoothing = 1.0;
// Relative weight of the background class in the classification loss.
inline constexpr double kBackgroundClassWeight = 0.1;

// 1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps), p = sigmoid(logits).
Tensor DiceLoss(const Tensor& logits, const Tensor& target);
// Sigmoid cross-entropy averaged over every element.
Tensor MaskCrossEntropy(const Tensor& logits, const Tensor& target);
// Weighted softmax cross-entropy over rows of [N, K+1]; `targets[i]` in
// [0, K], with K the background class.
Tensor ClassificationLoss(const Tensor& class_logits, const std::vector<int>& targets,
                          double background_weight = kBackgroundClassWeight);

// Plain-number versions used for matching; `mask_logits` and `gt_mask` have
// the same element count.
double DiceCost(std::span<const double> mask_logits, const BinaryMask& gt_mask);
double MaskCrossEntropyCost(std::span<const double> mask_logits, const BinaryMask& gt_mask);

// lambda_cls * (-p[gt_class]) + lambda_ce * CE + lambda_dice * dice for one
// prediction row against one ground truth.
double MatchCost(std::span<const double> class_logits, std::span<const double> mask_logits,
                 int gt_class, const BinaryMask& gt_mask, const LossWeights& weights);

struct FramePrediction {
  Tensor class_logits;  // [N, K+1]
  Tensor mask_logits;   // [N, P]
};

struct FrameTarget {
  std::vector<int> classes;
  std::vector<BinaryMask> masks;  // each of P pixels
};

// Prediction rows x ground-truth columns.
CostMatrix MatchCostMatrix(const FramePrediction& pred, const FrameTarget& target,
                           const LossWeights& weights);

struct LossBreakdown {
  double classification = 0.0;
  double dice = 0.0;
  double mask_ce = 0.0;
  double contrastive = 0.0;
  double total = 0.0;
};

// lambda_cl L_cl + lambda_ce L_ce + lambda_dice L_dice + lambda_cls L_cls
// under `assignment` (prediction row -> target index). Mask terms are
// averaged over matched rows; unmatched rows are supervised to background.
Tensor SegmenterLoss(const FramePrediction& pred, const FrameTarget& target,
                     const Assignment& assignment,
                     const std::vector<ContrastiveItem>& contrastive_items,
                     const LossWeights& weights, LossBreakdown* breakdown = nullptr);

// Ground truth for a clip: one column per object, masks per frame (empty
// where the object is not visible).
struct ClipTarget {
  std::vector<int> classes;
  std::vector<std::vector<BinaryMask>> masks;  // [frame][object]

  std::size_t frame_count() const { return masks.size(); }
  std::size_t object_count() const { return classes.size(); }
  // First frame with a nonempty mask, or frame_count().
  std::size_t FirstAppearance(std::size_t object) const;
};

ClipTarget MakeClipTarget(const SyntheticVideo& video, std::size_t begin, std::size_t end);

struct TrackerMatchingTrace {
  bool used_segmenter = false;
  // Frame whose predictions were compared against each object, or
  // frame_count() for objects that never appear.
  std::vector<std::size_t> match_frame;
};

// Matches every object once, on its first-appearance frame, against slots not
// already claimed by earlier-appearing objects. The segmenter predictions are
// used while iteration < max_iteration / 2, the tracker's own afterwards.
Assignment TrackerMatching(const std::vector<FramePrediction>& tracker_preds,
                           const ClipTarget& target, std::size_t iteration,
                           std::size_t max_iteration,
                           const std::vector<FramePrediction>& segmenter_preds,
                           const LossWeights& weights,
                           TrackerMatchingTrace* trace = nullptr);

// Per-frame targets implied by a slot assignment: a matched slot carries its
// object's class from the first appearance on (with an empty mask while the
// object is hidden) and background before.
std::vector<FrameTarget> TrackerFrameTargets(const ClipTarget& target,
                                             const Assignment& assignment,
                                             std::vector<Assignment>* frame_assignments);

// Sum over frames of the segmentation loss under a fixed slot assignment.
Tensor TrackerLoss(const std::vector<FramePrediction>& preds, const ClipTarget& target,
                   const Assignment& assignment, const LossWeights& weights,
                   LossBreakdown* breakdown = nullptr);

// Whole-clip predictions: mask logits of all frames stacked along the pixel
// axis ([N, T*P]) and one class row per tube.
struct VideoLogits {
  Tensor class_logits;  // [N, K+1]
  Tensor mask_logits;   // [N, T*P]
};

FrameTarget StackClipTarget(const ClipTarget& target);

// Video-level Hungarian matching on stacked masks followed by the
// segmentation loss. Objects never visible in the clip are ignored.
Tensor RefinerLoss(const VideoLogits& pred, const ClipTarget& target,
                   const std::vector<ContrastiveItem>& contrastive_items,
                   const LossWeights& weights, Assignment* assignment = nullptr,
                   LossBreakdown* breakdown = nullptr);

}  // namespace vidseg

#endif  // VIDSEG_LOSSES_H_
